// SPDX-License-Identifier: Apache-2.0
#pragma once

// Named f64-array container file.
//
// Layout: a small text header followed by a raw little-endian float64
// payload holding every array back to back in declaration order.
//
//   skytrace.f64.v1\n
//   meta <M>\n
//   <key>\t<value>\n                       x M
//   arrays <N>\n
//   <name> <rank> <dims...> @<offset>\n    x N
//   <payload bytes>
//
// <offset> is the array's byte offset from the start of the payload; the
// payload stores the arrays back to back, so offsets are also implied by
// the shapes and are validated on load. Meta values may contain spaces but
// not tabs or newlines. Array names match [A-Za-z0-9_.:/-]+.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "skytrace/tensor.hpp"

namespace skytrace {

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

class ArrayFile {
  public:
    void set_meta(const std::string& key, const std::string& value);
    bool has_meta(const std::string& key) const;
    // Throws ContractError when the key is absent.
    const std::string& meta(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& meta_entries() const {
        return meta_;
    }

    // Throws ContractError on a duplicate name, an invalid name, or when
    // values.size() does not match the shape.
    void put(const std::string& name, Shape shape, std::vector<double> values);
    void put_scalar(const std::string& name, double value);
    bool contains(const std::string& name) const;
    // Throws ContractError when the array is absent.
    const NamedArray& get(const std::string& name) const;
    double get_scalar(const std::string& name) const;
    const std::vector<NamedArray>& arrays() const { return arrays_; }

    void save(const std::filesystem::path& path) const;
    static ArrayFile load(const std::filesystem::path& path);

  private:
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<NamedArray> arrays_;
};

} // namespace skytrace
