// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "skytrace/tensor.hpp"

namespace skytrace {

// Execution mode for layers with stochastic behaviour. Eval is deterministic;
// Train and Mc draw fresh dropout masks on every pass (Mc keeps doing so at
// prediction time).
enum class RunMode { Train, Eval, Mc };

// 2D convolution layer: kernels [out_ch x in_ch x P x Q], bias [out_ch],
// then an elementwise activation.
struct Conv2dLayer {
    Tensor kernels;
    Tensor bias;
    Activation activation = Activation::Relu;

    std::size_t out_channels() const { return kernels.shape[0]; }
    std::size_t in_channels() const { return kernels.shape[1]; }
};

Conv2dLayer make_conv2d(std::size_t out_ch, std::size_t in_ch, std::size_t kp, std::size_t kq,
                        Activation activation);

// 3D convolution layer: kernels [out_ch x in_ch x R x P x Q], bias [out_ch].
struct Conv3dLayer {
    Tensor kernels;
    Tensor bias;
    Activation activation = Activation::Relu;

    std::size_t out_channels() const { return kernels.shape[0]; }
    std::size_t in_channels() const { return kernels.shape[1]; }
};

Conv3dLayer make_conv3d(std::size_t out_ch, std::size_t in_ch, std::size_t kr, std::size_t kp,
                        std::size_t kq, Activation activation);

// Gated recurrent cell. Both gates use the sigmoid, the candidate uses tanh,
// and the cell carries no bias terms:
//   z_t = sigmoid(Wz x_t + Uz h_prev)
//   r_t = sigmoid(Wr x_t + Ur h_prev)
//   cand = tanh(W x_t + r_t .* (U h_prev))
//   h_t = z_t .* h_prev + (1 - z_t) .* cand
struct GruCell {
    Tensor w_update, u_update;  // z gate
    Tensor w_reset, u_reset;    // r gate
    Tensor w_cand, u_cand;      // candidate state

    std::size_t input_dim() const { return w_update.shape[1]; }
    std::size_t hidden_dim() const { return w_update.shape[0]; }
};

GruCell make_gru(std::size_t input_dim, std::size_t hidden_dim);

struct DenseLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
    Activation activation = Activation::Linear;

    std::size_t out_dim() const { return weight.shape[0]; }
    std::size_t in_dim() const { return weight.shape[1]; }
};

DenseLayer make_dense(std::size_t out_dim, std::size_t in_dim, Activation activation);

// Dropout with inverted scaling: survivors are multiplied by 1/(1-rate) so
// the expectation matches the eval path without rescaling.
struct DropoutSpec {
    double rate = 0.0;
};

// ---------------------------------------------------------------------------
// Tape bindings. bind() registers the layer parameters as tape leaves once;
// the returned handle is then reused for every forward in the same tape.

struct BoundConv2d {
    VarId kernels, bias;
    Activation activation;
};

struct BoundConv3d {
    VarId kernels, bias;
    Activation activation;
};

struct BoundGru {
    VarId w_update, u_update, w_reset, u_reset, w_cand, u_cand;
};

struct BoundDense {
    VarId weight, bias;
    Activation activation;
};

BoundConv2d bind(Tape& tape, const Conv2dLayer& layer, bool trainable);
BoundConv3d bind(Tape& tape, const Conv3dLayer& layer, bool trainable);
BoundGru bind(Tape& tape, const GruCell& cell, bool trainable);
BoundDense bind(Tape& tape, const DenseLayer& layer, bool trainable);

VarId conv2d_layer_forward(Tape& tape, const BoundConv2d& layer, VarId input);
VarId conv3d_layer_forward(Tape& tape, const BoundConv3d& layer, VarId input);
VarId dense_forward(Tape& tape, const BoundDense& layer, VarId input);

// Intermediate gate values of one GRU step, exposed for testing.
struct GruStepTrace {
    VarId update_gate, reset_gate, candidate;
};

// Test hook: when update_gate is set, the computed z_t is replaced by this
// constant tensor.
struct GruOverrides {
    const Tensor* update_gate = nullptr;
};

VarId gru_cell_step(Tape& tape, const BoundGru& cell, VarId x, VarId h_prev,
                    GruStepTrace* trace = nullptr, const GruOverrides* overrides = nullptr);

struct GruSequenceResult {
    VarId stacked;               // [steps x hidden]
    std::vector<VarId> hidden;   // h_1 .. h_T
};

// Folds the cell over the rows of xs [steps x input_dim]. The rows enter the
// tape as constants; gradients flow to the cell weights through the full
// unrolled recurrence.
GruSequenceResult gru_sequence(Tape& tape, const BoundGru& cell, const Tensor& xs,
                               const Tensor& h0);

// Identity in Eval mode and whenever rate == 0; otherwise a stochastic
// inverted-dropout pass (Train and Mc behave identically per pass).
VarId dropout_forward(Tape& tape, const DropoutSpec& spec, VarId x, RunMode mode, Prng& rng);

} // namespace skytrace
