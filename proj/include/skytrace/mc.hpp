// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstddef>

#include "skytrace/model.hpp"
#include "skytrace/tensor.hpp"

namespace skytrace {

struct McPrediction {
    Tensor mean;              // [horizon x output_dim]
    Tensor std;               // population std over the passes, elementwise >= 0
    std::size_t samples = 0;  // T
    std::uint64_t seed = 0;
};

// T stochastic forward passes, each with a generator derived from
// (seed, pass index); deterministic for a given (model, input, T, seed).
// With every dropout rate at zero the stochastic passes all collapse to the
// eval forward, so that single pass is returned with an exactly-zero std.
McPrediction mc_predict(const Cg3dModel& model, const Tensor& input, std::size_t t,
                        std::uint64_t seed);

} // namespace skytrace
