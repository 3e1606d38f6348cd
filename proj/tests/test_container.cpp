// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "skytrace/container.hpp"
#include "skytrace/error.hpp"

using namespace skytrace;

namespace {

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

} // namespace

TEST_CASE("round trip preserves meta, order, shapes, and bits") {
    ArrayFile file;
    file.set_meta("format", "skytrace.test.v1");
    file.set_meta("note", "value with spaces");
    file.put("b.matrix", {2, 3}, {1.5, -2.25, 3.0, 0.0, 1e-308, 12345.678901234567});
    file.put("a.vector", {4}, {-1.0, 2.0, -3.0, 4.0});
    file.put_scalar("count", 42.0);

    const auto path = temp_path("skytrace_container_rt.bin");
    file.save(path);
    ArrayFile loaded = ArrayFile::load(path);
    std::filesystem::remove(path);

    CHECK(loaded.meta("format") == "skytrace.test.v1");
    CHECK(loaded.meta("note") == "value with spaces");
    // Declaration order survives the trip.
    REQUIRE(loaded.arrays().size() == 3);
    CHECK(loaded.arrays()[0].name == "b.matrix");
    CHECK(loaded.arrays()[1].name == "a.vector");
    CHECK(loaded.arrays()[2].name == "count");
    CHECK(loaded.get("b.matrix").shape == Shape{2, 3});
    CHECK(loaded.get("b.matrix").values == file.get("b.matrix").values);
    CHECK(loaded.get_scalar("count") == 42.0);
}

TEST_CASE("saving twice yields identical bytes") {
    ArrayFile file;
    file.set_meta("format", "skytrace.test.v1");
    file.put("x", {3}, {0.1, 0.2, 0.3});
    const auto p1 = temp_path("skytrace_container_a.bin");
    const auto p2 = temp_path("skytrace_container_b.bin");
    file.save(p1);
    file.save(p2);
    CHECK(slurp(p1) == slurp(p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("put contract violations") {
    ArrayFile file;
    file.put("x", {2}, {1.0, 2.0});
    CHECK_THROWS_AS(file.put("x", {1}, {3.0}), ContractError);
    CHECK_THROWS_AS(file.put("bad name", {1}, {3.0}), ContractError);
    CHECK_THROWS_AS(file.put("y", {3}, {1.0}), ContractError);
    CHECK_THROWS_AS(file.get("missing"), ContractError);
    CHECK_THROWS_AS(file.meta("missing"), ContractError);
}

TEST_CASE("load rejects malformed files") {
    const auto path = temp_path("skytrace_container_bad.bin");
    SUBCASE("wrong magic") {
        spit(path, "not.a.container\nmeta 0\narrays 0\n");
        CHECK_THROWS_AS(ArrayFile::load(path), SchemaError);
    }
    SUBCASE("truncated payload") {
        ArrayFile file;
        file.put("x", {4}, {1, 2, 3, 4});
        file.save(path);
        std::string bytes = slurp(path);
        spit(path, bytes.substr(0, bytes.size() - 8));
        CHECK_THROWS_AS(ArrayFile::load(path), SchemaError);
    }
    SUBCASE("byte offset mismatch") {
        ArrayFile file;
        file.put("x", {2}, {1, 2});
        file.put("y", {2}, {3, 4});
        file.save(path);
        std::string bytes = slurp(path);
        const auto pos = bytes.find("@16");
        REQUIRE(pos != std::string::npos);
        bytes.replace(pos, 3, "@24");
        spit(path, bytes);
        CHECK_THROWS_AS(ArrayFile::load(path), SchemaError);
    }
    SUBCASE("duplicate array name") {
        ArrayFile file;
        file.put("x", {1}, {1});
        file.save(path);
        std::string bytes = slurp(path);
        const auto pos = bytes.find("arrays 1");
        REQUIRE(pos != std::string::npos);
        bytes.replace(pos, 8, "arrays 2");
        bytes.insert(bytes.find("@0\n") + 3, "x 1 1 @8\n");
        bytes.append(8, '\0');
        spit(path, bytes);
        CHECK_THROWS_AS(ArrayFile::load(path), SchemaError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(ArrayFile::load(temp_path("skytrace_container_nope.bin")), IoError);
    }
    std::filesystem::remove(path);
}
