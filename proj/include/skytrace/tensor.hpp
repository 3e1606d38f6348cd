// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skytrace/rng.hpp"

namespace skytrace {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense N-dimensional row-major array of doubles. The optional grad buffer is
// populated by Tape::backward for leaves registered as trainable.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::optional<std::vector<double>> grad;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    static Tensor scalar(double value);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double& operator[](std::size_t flat) { return data[flat]; }
    double operator[](std::size_t flat) const { return data[flat]; }
};

enum class Activation { Sigmoid, Tanh, Relu, Linear };

const char* activation_name(Activation kind);
Activation activation_from_name(const std::string& name);

enum class ElementwiseKind { Add, Hadamard };

// Handle to a value recorded on a Tape.
struct VarId {
    std::size_t index = static_cast<std::size_t>(-1);
    bool valid() const { return index != static_cast<std::size_t>(-1); }
};

// Reverse-mode autodiff tape. Every operation appends a node holding its
// inputs and whatever forward state the backward pass needs; nodes are stored
// in creation order, which is a topological order by construction. backward()
// replays the nodes once in reverse and accumulates gradients additively
// across fan-out. All reductions use a fixed (flat row-major) summation
// order, so results do not depend on internal parallelism.
class Tape {
public:
    // Registers an input value. trainable leaves receive gradients in
    // backward(); constants do not.
    VarId leaf(Tensor value, bool trainable = false);

    // Matrix product [m x k] * [k x n] -> [m x n]. A rank-1 right operand [k]
    // is treated as a column, yielding [m].
    VarId matmul(VarId a, VarId b);

    // Elementwise sum. One documented broadcast: [m x n] + [n] applies the
    // right operand to every row (per-row bias).
    VarId add(VarId a, VarId b);
    VarId sub(VarId a, VarId b);
    // Elementwise (Hadamard) product, identical shapes only.
    VarId hadamard(VarId a, VarId b);
    VarId elementwise(VarId a, VarId b, ElementwiseKind kind);
    // Multiplication by a fixed constant.
    VarId scale(VarId x, double factor);

    VarId activate(VarId x, Activation kind);

    // Valid (no padding, stride 1) cross-correlation.
    //   input [C x H x W], kernels [O x C x P x Q], bias [O]
    //   -> [O x H-P+1 x W-Q+1]
    VarId conv2d_valid(VarId input, VarId kernels, VarId bias);

    //   input [C x D x H x W], kernels [O x C x R x P x Q], bias [O]
    //   -> [O x D-R+1 x H-P+1 x W-Q+1]
    VarId conv3d_valid(VarId input, VarId kernels, VarId bias);

    // Non-overlapping 2x2x2 max pool over [C x D x H x W]; trailing odd
    // slices are dropped. Backward routes to the argmax, first occurrence in
    // row-major order on ties.
    VarId max_pool3d(VarId input);

    VarId concat(VarId a, VarId b, std::size_t axis);
    VarId reshape(VarId x, Shape new_shape);

    // Full reduction to a [1] scalar, fixed flat summation order.
    VarId sum(VarId x);

    // Inverted dropout: zeroes each element with probability rate and scales
    // survivors by 1/(1-rate). The mask is drawn once and reused in backward.
    VarId dropout(VarId x, double rate, Prng& rng);

    // Seeds d(loss)/d(loss)=1 and accumulates gradients into every trainable
    // leaf reachable from loss. loss must hold exactly one element.
    void backward(VarId loss);

    const Tensor& value(VarId id) const;
    const std::vector<double>& grad(VarId id) const;
    bool trainable(VarId id) const;
    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Leaf,
        MatMul,
        Add,
        Sub,
        Hadamard,
        Scale,
        Activate,
        Conv2d,
        Conv3d,
        MaxPool3d,
        Concat,
        Reshape,
        Sum,
        Dropout,
    };

    struct Node {
        Op op = Op::Leaf;
        std::array<VarId, 3> inputs{};
        int input_count = 0;
        VarId out;
        Activation activation = Activation::Linear;
        double factor = 0.0;
        std::size_t axis = 0;
        std::vector<double> mask;          // dropout keep/scale values
        std::vector<std::size_t> argmax;   // pool source indices
    };

    VarId push_value(Tensor value, bool needs_grad);
    Node& push_node(Op op, std::initializer_list<VarId> inputs, VarId out);
    void check_var(VarId id, const char* who) const;
    std::vector<double>& grad_buffer(VarId id);

    void backward_node(const Node& node);

    std::vector<Tensor> values_;
    std::vector<std::vector<double>> grads_;  // empty vector = no gradient yet
    std::vector<bool> needs_grad_;
    std::vector<bool> is_trainable_leaf_;
    std::vector<Node> nodes_;
};

} // namespace skytrace
