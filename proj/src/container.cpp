// SPDX-License-Identifier: Apache-2.0
#include "skytrace/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "skytrace/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "payload is little-endian; big-endian hosts are unsupported");
static_assert(sizeof(double) == 8);

namespace skytrace {

namespace {

constexpr const char* kMagic = "skytrace.f64.v1";

bool valid_name(const std::string& name) {
    if (name.empty()) return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
               c == '_' || c == '.' || c == ':' || c == '/' || c == '-';
    });
}

std::string read_line(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaError(std::string("array file truncated before ") + what);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

} // namespace

void ArrayFile::set_meta(const std::string& key, const std::string& value) {
    if (!valid_name(key)) throw ContractError("invalid meta key '" + key + "'");
    if (value.find('\t') != std::string::npos || value.find('\n') != std::string::npos) {
        throw ContractError("meta value for '" + key + "' contains a tab or newline");
    }
    for (auto& entry : meta_) {
        if (entry.first == key) {
            entry.second = value;
            return;
        }
    }
    meta_.emplace_back(key, value);
}

bool ArrayFile::has_meta(const std::string& key) const {
    return std::any_of(meta_.begin(), meta_.end(),
                       [&](const auto& e) { return e.first == key; });
}

const std::string& ArrayFile::meta(const std::string& key) const {
    for (const auto& entry : meta_) {
        if (entry.first == key) return entry.second;
    }
    throw ContractError("missing meta key '" + key + "'");
}

void ArrayFile::put(const std::string& name, Shape shape, std::vector<double> values) {
    if (!valid_name(name)) throw ContractError("invalid array name '" + name + "'");
    if (contains(name)) throw ContractError("duplicate array name '" + name + "'");
    if (shape_numel(shape) != values.size()) {
        throw ContractError("array '" + name + "': shape " + shape_to_string(shape) +
                            " holds " + std::to_string(shape_numel(shape)) +
                            " elements, got " + std::to_string(values.size()));
    }
    arrays_.push_back({name, std::move(shape), std::move(values)});
}

void ArrayFile::put_scalar(const std::string& name, double value) {
    put(name, Shape{1}, std::vector<double>{value});
}

bool ArrayFile::contains(const std::string& name) const {
    return std::any_of(arrays_.begin(), arrays_.end(),
                       [&](const NamedArray& a) { return a.name == name; });
}

const NamedArray& ArrayFile::get(const std::string& name) const {
    for (const NamedArray& a : arrays_) {
        if (a.name == name) return a;
    }
    throw ContractError("missing array '" + name + "'");
}

double ArrayFile::get_scalar(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.values.size() != 1) {
        throw ContractError("array '" + name + "' is not a scalar: shape " +
                            shape_to_string(a.shape));
    }
    return a.values[0];
}

void ArrayFile::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << kMagic << '\n';
    out << "meta " << meta_.size() << '\n';
    for (const auto& [key, value] : meta_) {
        out << key << '\t' << value << '\n';
    }
    out << "arrays " << arrays_.size() << '\n';
    std::size_t offset = 0;
    for (const NamedArray& a : arrays_) {
        out << a.name << ' ' << a.shape.size();
        for (std::size_t d : a.shape) out << ' ' << d;
        out << " @" << offset << '\n';
        offset += a.values.size() * sizeof(double);
    }
    for (const NamedArray& a : arrays_) {
        out.write(reinterpret_cast<const char*>(a.values.data()),
                  static_cast<std::streamsize>(a.values.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

ArrayFile ArrayFile::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    if (read_line(in, "magic") != kMagic) {
        throw SchemaError(path.string() + " is not a skytrace array file");
    }
    ArrayFile file;

    std::istringstream meta_line(read_line(in, "meta count"));
    std::string tag;
    std::size_t meta_count = 0;
    if (!(meta_line >> tag >> meta_count) || tag != "meta") {
        throw SchemaError("malformed meta count line");
    }
    for (std::size_t i = 0; i < meta_count; ++i) {
        std::string line = read_line(in, "meta entry");
        std::size_t sep = line.find('\t');
        if (sep == std::string::npos) throw SchemaError("malformed meta entry: " + line);
        file.set_meta(line.substr(0, sep), line.substr(sep + 1));
    }

    std::istringstream arrays_line(read_line(in, "array count"));
    std::size_t array_count = 0;
    if (!(arrays_line >> tag >> array_count) || tag != "arrays") {
        throw SchemaError("malformed array count line");
    }
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < array_count; ++i) {
        std::istringstream header(read_line(in, "array header"));
        std::string name;
        std::size_t rank = 0;
        if (!(header >> name >> rank)) throw SchemaError("malformed array header");
        if (!valid_name(name)) throw SchemaError("invalid array name '" + name + "'");
        if (file.contains(name)) throw SchemaError("duplicate array name '" + name + "'");
        Shape shape(rank);
        for (std::size_t d = 0; d < rank; ++d) {
            if (!(header >> shape[d]) || shape[d] == 0) {
                throw SchemaError("malformed dimensions for array '" + name + "'");
            }
        }
        std::string offset_field;
        if (!(header >> offset_field) || offset_field.size() < 2 || offset_field[0] != '@') {
            throw SchemaError("missing byte offset for array '" + name + "'");
        }
        if (offset_field != "@" + std::to_string(expected_offset)) {
            throw SchemaError("byte offset mismatch for array '" + name + "': " + offset_field +
                              " expected @" + std::to_string(expected_offset));
        }
        expected_offset += shape_numel(shape) * sizeof(double);
        file.arrays_.push_back({name, std::move(shape), {}});
    }

    for (NamedArray& a : file.arrays_) {
        a.values.resize(shape_numel(a.shape));
        in.read(reinterpret_cast<char*>(a.values.data()),
                static_cast<std::streamsize>(a.values.size() * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != a.values.size() * sizeof(double)) {
            throw SchemaError("payload truncated in array '" + a.name + "'");
        }
    }
    return file;
}

} // namespace skytrace
