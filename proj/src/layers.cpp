// SPDX-License-Identifier: Apache-2.0
#include "skytrace/layers.hpp"

#include <string>

#include "skytrace/error.hpp"

namespace skytrace {

Conv2dLayer make_conv2d(std::size_t out_ch, std::size_t in_ch, std::size_t kp, std::size_t kq,
                        Activation activation) {
    if (out_ch == 0 || in_ch == 0 || kp == 0 || kq == 0) {
        throw ConfigError("conv2d layer dimensions must be positive");
    }
    return Conv2dLayer{Tensor({out_ch, in_ch, kp, kq}), Tensor({out_ch}), activation};
}

Conv3dLayer make_conv3d(std::size_t out_ch, std::size_t in_ch, std::size_t kr, std::size_t kp,
                        std::size_t kq, Activation activation) {
    if (out_ch == 0 || in_ch == 0 || kr == 0 || kp == 0 || kq == 0) {
        throw ConfigError("conv3d layer dimensions must be positive");
    }
    return Conv3dLayer{Tensor({out_ch, in_ch, kr, kp, kq}), Tensor({out_ch}), activation};
}

GruCell make_gru(std::size_t input_dim, std::size_t hidden_dim) {
    if (input_dim == 0 || hidden_dim == 0) {
        throw ConfigError("gru dimensions must be positive");
    }
    GruCell cell;
    cell.w_update = Tensor({hidden_dim, input_dim});
    cell.u_update = Tensor({hidden_dim, hidden_dim});
    cell.w_reset = Tensor({hidden_dim, input_dim});
    cell.u_reset = Tensor({hidden_dim, hidden_dim});
    cell.w_cand = Tensor({hidden_dim, input_dim});
    cell.u_cand = Tensor({hidden_dim, hidden_dim});
    return cell;
}

DenseLayer make_dense(std::size_t out_dim, std::size_t in_dim, Activation activation) {
    if (out_dim == 0 || in_dim == 0) {
        throw ConfigError("dense layer dimensions must be positive");
    }
    return DenseLayer{Tensor({out_dim, in_dim}), Tensor({out_dim}), activation};
}

BoundConv2d bind(Tape& tape, const Conv2dLayer& layer, bool trainable) {
    return {tape.leaf(layer.kernels, trainable), tape.leaf(layer.bias, trainable),
            layer.activation};
}

BoundConv3d bind(Tape& tape, const Conv3dLayer& layer, bool trainable) {
    return {tape.leaf(layer.kernels, trainable), tape.leaf(layer.bias, trainable),
            layer.activation};
}

BoundGru bind(Tape& tape, const GruCell& cell, bool trainable) {
    return {tape.leaf(cell.w_update, trainable), tape.leaf(cell.u_update, trainable),
            tape.leaf(cell.w_reset, trainable),  tape.leaf(cell.u_reset, trainable),
            tape.leaf(cell.w_cand, trainable),   tape.leaf(cell.u_cand, trainable)};
}

BoundDense bind(Tape& tape, const DenseLayer& layer, bool trainable) {
    return {tape.leaf(layer.weight, trainable), tape.leaf(layer.bias, trainable),
            layer.activation};
}

VarId conv2d_layer_forward(Tape& tape, const BoundConv2d& layer, VarId input) {
    return tape.activate(tape.conv2d_valid(input, layer.kernels, layer.bias), layer.activation);
}

VarId conv3d_layer_forward(Tape& tape, const BoundConv3d& layer, VarId input) {
    return tape.activate(tape.conv3d_valid(input, layer.kernels, layer.bias), layer.activation);
}

VarId dense_forward(Tape& tape, const BoundDense& layer, VarId input) {
    return tape.activate(tape.add(tape.matmul(layer.weight, input), layer.bias),
                         layer.activation);
}

VarId gru_cell_step(Tape& tape, const BoundGru& cell, VarId x, VarId h_prev, GruStepTrace* trace,
                    const GruOverrides* overrides) {
    VarId update = tape.activate(tape.add(tape.matmul(cell.w_update, x),
                                          tape.matmul(cell.u_update, h_prev)),
                                 Activation::Sigmoid);
    if (overrides && overrides->update_gate) {
        update = tape.leaf(*overrides->update_gate, false);
    }
    VarId reset = tape.activate(tape.add(tape.matmul(cell.w_reset, x),
                                         tape.matmul(cell.u_reset, h_prev)),
                                Activation::Sigmoid);
    VarId candidate = tape.activate(
        tape.add(tape.matmul(cell.w_cand, x), tape.hadamard(reset, tape.matmul(cell.u_cand, h_prev))),
        Activation::Tanh);
    // h_t = z .* h_prev + (1 - z) .* candidate
    VarId keep = tape.hadamard(update, h_prev);
    VarId one_minus_z = tape.sub(tape.leaf(Tensor(tape.value(update).shape, 1.0)), update);
    VarId take = tape.hadamard(one_minus_z, candidate);
    VarId h_next = tape.add(keep, take);
    if (trace) {
        trace->update_gate = update;
        trace->reset_gate = reset;
        trace->candidate = candidate;
    }
    return h_next;
}

GruSequenceResult gru_sequence(Tape& tape, const BoundGru& cell, const Tensor& xs,
                               const Tensor& h0) {
    if (xs.rank() != 2) {
        throw ShapeError("gru_sequence: expected [steps x input_dim] input, got " +
                         shape_to_string(xs.shape));
    }
    const std::size_t steps = xs.shape[0];
    const std::size_t input_dim = xs.shape[1];
    if (steps == 0) {
        throw ContractError("gru_sequence: sequence must contain at least one step");
    }
    GruSequenceResult result;
    result.hidden.reserve(steps);
    VarId h = tape.leaf(h0, false);
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor x_t({input_dim});
        for (std::size_t j = 0; j < input_dim; ++j) x_t.data[j] = xs.data[t * input_dim + j];
        h = gru_cell_step(tape, cell, tape.leaf(std::move(x_t), false), h);
        result.hidden.push_back(h);
    }
    VarId stacked = tape.reshape(result.hidden[0], {1, tape.value(result.hidden[0]).numel()});
    for (std::size_t t = 1; t < steps; ++t) {
        stacked = tape.concat(stacked,
                              tape.reshape(result.hidden[t], {1, tape.value(result.hidden[t]).numel()}),
                              0);
    }
    result.stacked = stacked;
    return result;
}

VarId dropout_forward(Tape& tape, const DropoutSpec& spec, VarId x, RunMode mode, Prng& rng) {
    if (spec.rate < 0.0 || spec.rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(spec.rate));
    }
    if (mode == RunMode::Eval || spec.rate == 0.0) {
        return x;
    }
    return tape.dropout(x, spec.rate, rng);
}

} // namespace skytrace
