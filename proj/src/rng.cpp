// SPDX-License-Identifier: Apache-2.0
#include "skytrace/rng.hpp"

#include <cmath>

namespace skytrace {

double Prng::normal(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return mean + stddev * radius * std::cos(angle);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view domain) {
    return splitmix64(splitmix64(root) ^ fnv1a(domain));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view domain, std::uint64_t index) {
    return splitmix64(derive_seed(root, domain) ^ splitmix64(index + 1));
}

} // namespace skytrace
