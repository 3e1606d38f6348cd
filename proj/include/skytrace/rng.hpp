// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace skytrace {

// Deterministic pseudo-random source. All distribution sampling is done from
// raw mt19937_64 words with fixed arithmetic, so identical seeds reproduce
// identical streams on every platform and standard library.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the spare draw is cached.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Seed derivation: every random stream in the pipeline is keyed off one root
// seed plus a domain label (and optional index), e.g. derive_seed(root,
// "train.shuffle", epoch). Streams never share state across domains.
std::uint64_t derive_seed(std::uint64_t root, std::string_view domain);
std::uint64_t derive_seed(std::uint64_t root, std::string_view domain, std::uint64_t index);

} // namespace skytrace
