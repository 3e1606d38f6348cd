// SPDX-License-Identifier: Apache-2.0
#include "skytrace/mc.hpp"

#include <cmath>
#include <vector>

#include "skytrace/error.hpp"
#include "skytrace/rng.hpp"

namespace skytrace {

McPrediction mc_predict(const Cg3dModel& model, const Tensor& input, std::size_t t,
                        std::uint64_t seed) {
    if (t < 1) throw ContractError("mc_predict: sample count must be at least 1");

    McPrediction out;
    out.samples = t;
    out.seed = seed;

    if (model.config.dropout_rate == 0.0) {
        out.mean = predict_eval(model, input);
        out.std = Tensor(out.mean.shape);
        return out;
    }

    std::vector<Tensor> passes;
    passes.reserve(t);
    for (std::size_t i = 0; i < t; ++i) {
        Prng rng(derive_seed(seed, "mc", i));
        passes.push_back(predict(model, input, RunMode::Mc, rng));
    }

    const std::size_t numel = passes[0].numel();
    out.mean = Tensor(passes[0].shape);
    for (const Tensor& pass : passes) {
        for (std::size_t i = 0; i < numel; ++i) out.mean.data[i] += pass.data[i];
    }
    for (std::size_t i = 0; i < numel; ++i) out.mean.data[i] /= static_cast<double>(t);

    out.std = Tensor(passes[0].shape);
    for (const Tensor& pass : passes) {
        for (std::size_t i = 0; i < numel; ++i) {
            double d = pass.data[i] - out.mean.data[i];
            out.std.data[i] += d * d;
        }
    }
    for (std::size_t i = 0; i < numel; ++i) {
        out.std.data[i] = std::sqrt(out.std.data[i] / static_cast<double>(t));
    }
    return out;
}

} // namespace skytrace
