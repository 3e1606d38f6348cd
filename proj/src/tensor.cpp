// SPDX-License-Identifier: Apache-2.0
#include "skytrace/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "skytrace/error.hpp"

namespace skytrace {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " elements");
    }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

const char* activation_name(Activation kind) {
    switch (kind) {
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Linear: return "linear";
    }
    return "linear";
}

Activation activation_from_name(const std::string& name) {
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "linear") return Activation::Linear;
    throw ConfigError("unknown activation '" + name + "'");
}

namespace {

// Upper bound on worker threads for internally parallel ops, from
// SKYTRACE_THREADS. Ops stay bitwise deterministic regardless of the cap
// because parallel regions only split independent output elements.
int thread_cap() {
    static const int cap = [] {
        int limit = 1;
#ifdef _OPENMP
        limit = omp_get_max_threads();
#endif
        if (const char* env = std::getenv("SKYTRACE_THREADS")) {
            char* end = nullptr;
            long parsed = std::strtol(env, &end, 10);
            if (end != env && parsed >= 1) limit = static_cast<int>(parsed);
        }
        return limit < 1 ? 1 : limit;
    }();
    return cap;
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

VarId Tape::push_value(Tensor value, bool needs_grad) {
    VarId id{values_.size()};
    values_.push_back(std::move(value));
    grads_.emplace_back();
    needs_grad_.push_back(needs_grad);
    is_trainable_leaf_.push_back(false);
    return id;
}

Tape::Node& Tape::push_node(Op op, std::initializer_list<VarId> inputs, VarId out) {
    Node node;
    node.op = op;
    node.out = out;
    for (VarId id : inputs) node.inputs[static_cast<std::size_t>(node.input_count++)] = id;
    nodes_.push_back(std::move(node));
    return nodes_.back();
}

void Tape::check_var(VarId id, const char* who) const {
    if (!id.valid() || id.index >= values_.size()) {
        throw ContractError(std::string(who) + ": variable does not belong to this tape");
    }
}

VarId Tape::leaf(Tensor value, bool trainable) {
    VarId id = push_value(std::move(value), trainable);
    is_trainable_leaf_[id.index] = trainable;
    push_node(Op::Leaf, {}, id);
    return id;
}

VarId Tape::matmul(VarId a, VarId b) {
    check_var(a, "matmul");
    check_var(b, "matmul");
    const Tensor& lhs = values_[a.index];
    const Tensor& rhs = values_[b.index];
    const bool vector_rhs = rhs.rank() == 1;
    if (lhs.rank() != 2 || (rhs.rank() != 2 && !vector_rhs)) {
        throw ShapeError("matmul: expected [m x k] and [k x n] operands, got " +
                         shape_to_string(lhs.shape) + " and " + shape_to_string(rhs.shape));
    }
    const std::size_t m = lhs.shape[0];
    const std::size_t k = lhs.shape[1];
    const std::size_t k2 = rhs.shape[0];
    const std::size_t n = vector_rhs ? 1 : rhs.shape[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions differ: " + shape_to_string(lhs.shape) +
                         " vs " + shape_to_string(rhs.shape));
    }
    Tensor out(vector_rhs ? Shape{m} : Shape{m, n});
    const double* A = lhs.data.data();
    const double* B = rhs.data.data();
    double* C = out.data.data();
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#ifdef _OPENMP
#pragma omp parallel for num_threads(thread_cap()) if (thread_cap() > 1 && m * n * k > 262144)
#endif
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                acc += A[static_cast<std::size_t>(i) * k + t] * B[t * n + j];
            }
            C[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
    VarId out_id = push_value(std::move(out), needs_grad_[a.index] || needs_grad_[b.index]);
    push_node(Op::MatMul, {a, b}, out_id);
    return out_id;
}

VarId Tape::add(VarId a, VarId b) {
    check_var(a, "add");
    check_var(b, "add");
    const Tensor& lhs = values_[a.index];
    const Tensor& rhs = values_[b.index];
    const bool row_broadcast =
        lhs.rank() == 2 && rhs.rank() == 1 && rhs.shape[0] == lhs.shape[1];
    if (lhs.shape != rhs.shape && !row_broadcast) {
        throw ShapeError("add: shapes differ: " + shape_to_string(lhs.shape) + " vs " +
                         shape_to_string(rhs.shape));
    }
    Tensor out(lhs.shape);
    if (row_broadcast) {
        const std::size_t cols = rhs.shape[0];
        for (std::size_t i = 0; i < lhs.numel(); ++i) out.data[i] = lhs.data[i] + rhs.data[i % cols];
    } else {
        for (std::size_t i = 0; i < lhs.numel(); ++i) out.data[i] = lhs.data[i] + rhs.data[i];
    }
    VarId out_id = push_value(std::move(out), needs_grad_[a.index] || needs_grad_[b.index]);
    push_node(Op::Add, {a, b}, out_id);
    return out_id;
}

VarId Tape::sub(VarId a, VarId b) {
    check_var(a, "sub");
    check_var(b, "sub");
    const Tensor& lhs = values_[a.index];
    const Tensor& rhs = values_[b.index];
    if (lhs.shape != rhs.shape) {
        throw ShapeError("sub: shapes differ: " + shape_to_string(lhs.shape) + " vs " +
                         shape_to_string(rhs.shape));
    }
    Tensor out(lhs.shape);
    for (std::size_t i = 0; i < lhs.numel(); ++i) out.data[i] = lhs.data[i] - rhs.data[i];
    VarId out_id = push_value(std::move(out), needs_grad_[a.index] || needs_grad_[b.index]);
    push_node(Op::Sub, {a, b}, out_id);
    return out_id;
}

VarId Tape::hadamard(VarId a, VarId b) {
    check_var(a, "hadamard");
    check_var(b, "hadamard");
    const Tensor& lhs = values_[a.index];
    const Tensor& rhs = values_[b.index];
    if (lhs.shape != rhs.shape) {
        throw ShapeError("hadamard: shapes differ: " + shape_to_string(lhs.shape) + " vs " +
                         shape_to_string(rhs.shape));
    }
    Tensor out(lhs.shape);
    for (std::size_t i = 0; i < lhs.numel(); ++i) out.data[i] = lhs.data[i] * rhs.data[i];
    VarId out_id = push_value(std::move(out), needs_grad_[a.index] || needs_grad_[b.index]);
    push_node(Op::Hadamard, {a, b}, out_id);
    return out_id;
}

VarId Tape::elementwise(VarId a, VarId b, ElementwiseKind kind) {
    return kind == ElementwiseKind::Add ? add(a, b) : hadamard(a, b);
}

VarId Tape::scale(VarId x, double factor) {
    check_var(x, "scale");
    const Tensor& in = values_[x.index];
    Tensor out(in.shape);
    for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = in.data[i] * factor;
    VarId out_id = push_value(std::move(out), needs_grad_[x.index]);
    Node& node = push_node(Op::Scale, {x}, out_id);
    node.factor = factor;
    return out_id;
}

VarId Tape::activate(VarId x, Activation kind) {
    check_var(x, "activate");
    const Tensor& in = values_[x.index];
    Tensor out(in.shape);
    switch (kind) {
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = stable_sigmoid(in.data[i]);
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = std::tanh(in.data[i]);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
            break;
        case Activation::Linear:
            out.data = in.data;
            break;
    }
    VarId out_id = push_value(std::move(out), needs_grad_[x.index]);
    Node& node = push_node(Op::Activate, {x}, out_id);
    node.activation = kind;
    return out_id;
}

VarId Tape::conv2d_valid(VarId input, VarId kernels, VarId bias) {
    check_var(input, "conv2d_valid");
    check_var(kernels, "conv2d_valid");
    check_var(bias, "conv2d_valid");
    const Tensor& in = values_[input.index];
    const Tensor& ker = values_[kernels.index];
    const Tensor& b = values_[bias.index];
    if (in.rank() != 3 || ker.rank() != 4) {
        throw ShapeError("conv2d_valid: expected input [C x H x W] and kernels [O x C x P x Q], got " +
                         shape_to_string(in.shape) + " and " + shape_to_string(ker.shape));
    }
    const std::size_t channels = in.shape[0], height = in.shape[1], width = in.shape[2];
    const std::size_t out_ch = ker.shape[0], kp = ker.shape[2], kq = ker.shape[3];
    if (ker.shape[1] != channels) {
        throw ShapeError("conv2d_valid: channel mismatch: input " + shape_to_string(in.shape) +
                         " vs kernels " + shape_to_string(ker.shape));
    }
    if (kp > height || kq > width) {
        throw ShapeError("conv2d_valid: kernel " + shape_to_string(ker.shape) +
                         " larger than input " + shape_to_string(in.shape));
    }
    if (b.rank() != 1 || b.shape[0] != out_ch) {
        throw ShapeError("conv2d_valid: bias " + shape_to_string(b.shape) +
                         " must be [" + std::to_string(out_ch) + "]");
    }
    const std::size_t oh = height - kp + 1, ow = width - kq + 1;
    Tensor out({out_ch, oh, ow});
    const double* X = in.data.data();
    const double* K = ker.data.data();
    double* Y = out.data.data();
    const std::ptrdiff_t out_rows = static_cast<std::ptrdiff_t>(out_ch * oh);
#ifdef _OPENMP
#pragma omp parallel for num_threads(thread_cap()) \
    if (thread_cap() > 1 && out_ch * oh * ow * channels * kp * kq > 262144)
#endif
    for (std::ptrdiff_t row = 0; row < out_rows; ++row) {
        const std::size_t o = static_cast<std::size_t>(row) / oh;
        const std::size_t y = static_cast<std::size_t>(row) % oh;
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = b.data[o];
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t p = 0; p < kp; ++p) {
                    const double* xrow = X + (c * height + y + p) * width + x;
                    const double* krow = K + ((o * channels + c) * kp + p) * kq;
                    for (std::size_t q = 0; q < kq; ++q) acc += krow[q] * xrow[q];
                }
            }
            Y[(o * oh + y) * ow + x] = acc;
        }
    }
    VarId out_id = push_value(std::move(out), needs_grad_[input.index] ||
                                                  needs_grad_[kernels.index] ||
                                                  needs_grad_[bias.index]);
    push_node(Op::Conv2d, {input, kernels, bias}, out_id);
    return out_id;
}

VarId Tape::conv3d_valid(VarId input, VarId kernels, VarId bias) {
    check_var(input, "conv3d_valid");
    check_var(kernels, "conv3d_valid");
    check_var(bias, "conv3d_valid");
    const Tensor& in = values_[input.index];
    const Tensor& ker = values_[kernels.index];
    const Tensor& b = values_[bias.index];
    if (in.rank() != 4 || ker.rank() != 5) {
        throw ShapeError(
            "conv3d_valid: expected input [C x D x H x W] and kernels [O x C x R x P x Q], got " +
            shape_to_string(in.shape) + " and " + shape_to_string(ker.shape));
    }
    const std::size_t channels = in.shape[0], depth = in.shape[1], height = in.shape[2],
                      width = in.shape[3];
    const std::size_t out_ch = ker.shape[0], kr = ker.shape[2], kp = ker.shape[3], kq = ker.shape[4];
    if (ker.shape[1] != channels) {
        throw ShapeError("conv3d_valid: channel mismatch: input " + shape_to_string(in.shape) +
                         " vs kernels " + shape_to_string(ker.shape));
    }
    if (kr > depth || kp > height || kq > width) {
        throw ShapeError("conv3d_valid: kernel " + shape_to_string(ker.shape) +
                         " larger than input " + shape_to_string(in.shape));
    }
    if (b.rank() != 1 || b.shape[0] != out_ch) {
        throw ShapeError("conv3d_valid: bias " + shape_to_string(b.shape) +
                         " must be [" + std::to_string(out_ch) + "]");
    }
    const std::size_t od = depth - kr + 1, oh = height - kp + 1, ow = width - kq + 1;
    Tensor out({out_ch, od, oh, ow});
    const double* X = in.data.data();
    const double* K = ker.data.data();
    double* Y = out.data.data();
    const std::ptrdiff_t out_slices = static_cast<std::ptrdiff_t>(out_ch * od);
#ifdef _OPENMP
#pragma omp parallel for num_threads(thread_cap()) \
    if (thread_cap() > 1 && out_ch * od * oh * ow * channels * kr * kp * kq > 262144)
#endif
    for (std::ptrdiff_t slice = 0; slice < out_slices; ++slice) {
        const std::size_t o = static_cast<std::size_t>(slice) / od;
        const std::size_t z = static_cast<std::size_t>(slice) % od;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = b.data[o];
                for (std::size_t c = 0; c < channels; ++c) {
                    for (std::size_t r = 0; r < kr; ++r) {
                        for (std::size_t p = 0; p < kp; ++p) {
                            const double* xrow =
                                X + ((c * depth + z + r) * height + y + p) * width + x;
                            const double* krow =
                                K + (((o * channels + c) * kr + r) * kp + p) * kq;
                            for (std::size_t q = 0; q < kq; ++q) acc += krow[q] * xrow[q];
                        }
                    }
                }
                Y[((o * od + z) * oh + y) * ow + x] = acc;
            }
        }
    }
    VarId out_id = push_value(std::move(out), needs_grad_[input.index] ||
                                                  needs_grad_[kernels.index] ||
                                                  needs_grad_[bias.index]);
    push_node(Op::Conv3d, {input, kernels, bias}, out_id);
    return out_id;
}

VarId Tape::max_pool3d(VarId input) {
    check_var(input, "max_pool3d");
    const Tensor& in = values_[input.index];
    if (in.rank() != 4) {
        throw ShapeError("max_pool3d: expected input [C x D x H x W], got " +
                         shape_to_string(in.shape));
    }
    const std::size_t channels = in.shape[0], depth = in.shape[1], height = in.shape[2],
                      width = in.shape[3];
    if (depth < 2 || height < 2 || width < 2) {
        throw ShapeError("max_pool3d: every spatial dimension must be >= 2, got " +
                         shape_to_string(in.shape));
    }
    const std::size_t od = depth / 2, oh = height / 2, ow = width / 2;
    Tensor out({channels, od, oh, ow});
    std::vector<std::size_t> argmax(out.numel());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t z = 0; z < od; ++z) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    double best = -1.0;
                    std::size_t best_idx = 0;
                    bool first = true;
                    // Row-major scan of the 2x2x2 block keeps tie-breaking
                    // on the first occurrence.
                    for (std::size_t dz = 0; dz < 2; ++dz) {
                        for (std::size_t dy = 0; dy < 2; ++dy) {
                            for (std::size_t dx = 0; dx < 2; ++dx) {
                                std::size_t idx =
                                    ((c * depth + 2 * z + dz) * height + 2 * y + dy) * width +
                                    2 * x + dx;
                                if (first || in.data[idx] > best) {
                                    best = in.data[idx];
                                    best_idx = idx;
                                    first = false;
                                }
                            }
                        }
                    }
                    std::size_t out_idx = ((c * od + z) * oh + y) * ow + x;
                    out.data[out_idx] = best;
                    argmax[out_idx] = best_idx;
                }
            }
        }
    }
    VarId out_id = push_value(std::move(out), needs_grad_[input.index]);
    Node& node = push_node(Op::MaxPool3d, {input}, out_id);
    node.argmax = std::move(argmax);
    return out_id;
}

VarId Tape::concat(VarId a, VarId b, std::size_t axis) {
    check_var(a, "concat");
    check_var(b, "concat");
    const Tensor& lhs = values_[a.index];
    const Tensor& rhs = values_[b.index];
    if (lhs.rank() != rhs.rank() || axis >= lhs.rank()) {
        throw ShapeError("concat: incompatible operands " + shape_to_string(lhs.shape) + " and " +
                         shape_to_string(rhs.shape) + " along axis " + std::to_string(axis));
    }
    for (std::size_t d = 0; d < lhs.rank(); ++d) {
        if (d != axis && lhs.shape[d] != rhs.shape[d]) {
            throw ShapeError("concat: non-concat dimension " + std::to_string(d) + " differs: " +
                             shape_to_string(lhs.shape) + " vs " + shape_to_string(rhs.shape));
        }
    }
    Shape out_shape = lhs.shape;
    out_shape[axis] += rhs.shape[axis];
    std::size_t outer = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= lhs.shape[d];
    std::size_t inner_a = 1, inner_b = 1;
    for (std::size_t d = axis; d < lhs.rank(); ++d) {
        inner_a *= lhs.shape[d];
        inner_b *= rhs.shape[d];
    }
    Tensor out(out_shape);
    for (std::size_t block = 0; block < outer; ++block) {
        double* dst = out.data.data() + block * (inner_a + inner_b);
        const double* src_a = lhs.data.data() + block * inner_a;
        const double* src_b = rhs.data.data() + block * inner_b;
        for (std::size_t i = 0; i < inner_a; ++i) dst[i] = src_a[i];
        for (std::size_t i = 0; i < inner_b; ++i) dst[inner_a + i] = src_b[i];
    }
    VarId out_id = push_value(std::move(out), needs_grad_[a.index] || needs_grad_[b.index]);
    Node& node = push_node(Op::Concat, {a, b}, out_id);
    node.axis = axis;
    return out_id;
}

VarId Tape::reshape(VarId x, Shape new_shape) {
    check_var(x, "reshape");
    const Tensor& in = values_[x.index];
    if (shape_numel(new_shape) != in.numel()) {
        throw ShapeError("reshape: element count mismatch: " + shape_to_string(in.shape) +
                         " cannot become " + shape_to_string(new_shape));
    }
    Tensor out(std::move(new_shape), in.data);
    VarId out_id = push_value(std::move(out), needs_grad_[x.index]);
    push_node(Op::Reshape, {x}, out_id);
    return out_id;
}

VarId Tape::sum(VarId x) {
    check_var(x, "sum");
    const Tensor& in = values_[x.index];
    double acc = 0.0;
    for (double v : in.data) acc += v;
    VarId out_id = push_value(Tensor::scalar(acc), needs_grad_[x.index]);
    push_node(Op::Sum, {x}, out_id);
    return out_id;
}

VarId Tape::dropout(VarId x, double rate, Prng& rng) {
    check_var(x, "dropout");
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    const Tensor& in = values_[x.index];
    std::vector<double> mask(in.numel());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    Tensor out(in.shape);
    for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = in.data[i] * mask[i];
    VarId out_id = push_value(std::move(out), needs_grad_[x.index]);
    Node& node = push_node(Op::Dropout, {x}, out_id);
    node.mask = std::move(mask);
    return out_id;
}

void Tape::backward(VarId loss) {
    check_var(loss, "backward");
    if (values_[loss.index].numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got " +
                            shape_to_string(values_[loss.index].shape));
    }
    grad_buffer(loss)[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->op == Op::Leaf) continue;
        if (grads_[it->out.index].empty()) continue;  // not on any path to the loss
        backward_node(*it);
    }
}

std::vector<double>& Tape::grad_buffer(VarId id) {
    auto& g = grads_[id.index];
    if (g.empty()) g.assign(values_[id.index].numel(), 0.0);
    return g;
}

void Tape::backward_node(const Node& node) {
    const std::vector<double>& gout = grads_[node.out.index];
    const Tensor& out = values_[node.out.index];
    auto wants = [&](int slot) { return needs_grad_[node.inputs[static_cast<std::size_t>(slot)].index]; };
    switch (node.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Tensor& lhs = values_[node.inputs[0].index];
            const Tensor& rhs = values_[node.inputs[1].index];
            const std::size_t m = lhs.shape[0], k = lhs.shape[1];
            const std::size_t n = rhs.rank() == 1 ? 1 : rhs.shape[1];
            if (wants(0)) {
                auto& ga = grad_buffer(node.inputs[0]);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t t = 0; t < k; ++t) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += gout[i * n + j] * rhs.data[t * n + j];
                        ga[i * k + t] += acc;
                    }
                }
            }
            if (wants(1)) {
                auto& gb = grad_buffer(node.inputs[1]);
                for (std::size_t t = 0; t < k; ++t) {
                    for (std::size_t j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < m; ++i) acc += lhs.data[i * k + t] * gout[i * n + j];
                        gb[t * n + j] += acc;
                    }
                }
            }
            break;
        }
        case Op::Add: {
            const Tensor& lhs = values_[node.inputs[0].index];
            const Tensor& rhs = values_[node.inputs[1].index];
            if (wants(0)) {
                auto& ga = grad_buffer(node.inputs[0]);
                for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
            }
            if (wants(1)) {
                auto& gb = grad_buffer(node.inputs[1]);
                if (rhs.shape == lhs.shape) {
                    for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
                } else {
                    // Row-broadcast bias: reduce over rows in fixed order.
                    const std::size_t cols = rhs.shape[0];
                    for (std::size_t i = 0; i < gout.size(); ++i) gb[i % cols] += gout[i];
                }
            }
            break;
        }
        case Op::Sub: {
            if (wants(0)) {
                auto& ga = grad_buffer(node.inputs[0]);
                for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
            }
            if (wants(1)) {
                auto& gb = grad_buffer(node.inputs[1]);
                for (std::size_t i = 0; i < gout.size(); ++i) gb[i] -= gout[i];
            }
            break;
        }
        case Op::Hadamard: {
            const Tensor& lhs = values_[node.inputs[0].index];
            const Tensor& rhs = values_[node.inputs[1].index];
            if (wants(0)) {
                auto& ga = grad_buffer(node.inputs[0]);
                for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * rhs.data[i];
            }
            if (wants(1)) {
                auto& gb = grad_buffer(node.inputs[1]);
                for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * lhs.data[i];
            }
            break;
        }
        case Op::Scale: {
            if (wants(0)) {
                auto& g = grad_buffer(node.inputs[0]);
                for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * node.factor;
            }
            break;
        }
        case Op::Activate: {
            if (!wants(0)) break;
            auto& g = grad_buffer(node.inputs[0]);
            switch (node.activation) {
                case Activation::Sigmoid:
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                        double y = out.data[i];
                        g[i] += gout[i] * y * (1.0 - y);
                    }
                    break;
                case Activation::Tanh:
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                        double y = out.data[i];
                        g[i] += gout[i] * (1.0 - y * y);
                    }
                    break;
                case Activation::Relu:
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                        g[i] += out.data[i] > 0.0 ? gout[i] : 0.0;
                    }
                    break;
                case Activation::Linear:
                    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
                    break;
            }
            break;
        }
        case Op::Conv2d: {
            const Tensor& in = values_[node.inputs[0].index];
            const Tensor& ker = values_[node.inputs[1].index];
            const std::size_t channels = in.shape[0], height = in.shape[1], width = in.shape[2];
            const std::size_t out_ch = ker.shape[0], kp = ker.shape[2], kq = ker.shape[3];
            const std::size_t oh = out.shape[1], ow = out.shape[2];
            const bool want_in = wants(0), want_ker = wants(1);
            std::vector<double>* gin = want_in ? &grad_buffer(node.inputs[0]) : nullptr;
            std::vector<double>* gker = want_ker ? &grad_buffer(node.inputs[1]) : nullptr;
            if (want_in || want_ker) {
                for (std::size_t o = 0; o < out_ch; ++o) {
                    for (std::size_t y = 0; y < oh; ++y) {
                        for (std::size_t x = 0; x < ow; ++x) {
                            const double go = gout[(o * oh + y) * ow + x];
                            if (go == 0.0) continue;
                            for (std::size_t c = 0; c < channels; ++c) {
                                for (std::size_t p = 0; p < kp; ++p) {
                                    const std::size_t in_base = (c * height + y + p) * width + x;
                                    const std::size_t k_base = ((o * channels + c) * kp + p) * kq;
                                    for (std::size_t q = 0; q < kq; ++q) {
                                        if (gin) (*gin)[in_base + q] += go * ker.data[k_base + q];
                                        if (gker) (*gker)[k_base + q] += go * in.data[in_base + q];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (wants(2)) {
                auto& gb = grad_buffer(node.inputs[2]);
                for (std::size_t o = 0; o < out_ch; ++o) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < oh * ow; ++i) acc += gout[o * oh * ow + i];
                    gb[o] += acc;
                }
            }
            break;
        }
        case Op::Conv3d: {
            const Tensor& in = values_[node.inputs[0].index];
            const Tensor& ker = values_[node.inputs[1].index];
            const std::size_t channels = in.shape[0], depth = in.shape[1], height = in.shape[2],
                              width = in.shape[3];
            const std::size_t out_ch = ker.shape[0], kr = ker.shape[2], kp = ker.shape[3],
                              kq = ker.shape[4];
            const std::size_t od = out.shape[1], oh = out.shape[2], ow = out.shape[3];
            const bool want_in = wants(0), want_ker = wants(1);
            std::vector<double>* gin = want_in ? &grad_buffer(node.inputs[0]) : nullptr;
            std::vector<double>* gker = want_ker ? &grad_buffer(node.inputs[1]) : nullptr;
            if (want_in || want_ker) {
                for (std::size_t o = 0; o < out_ch; ++o) {
                    for (std::size_t z = 0; z < od; ++z) {
                        for (std::size_t y = 0; y < oh; ++y) {
                            for (std::size_t x = 0; x < ow; ++x) {
                                const double go = gout[((o * od + z) * oh + y) * ow + x];
                                if (go == 0.0) continue;
                                for (std::size_t c = 0; c < channels; ++c) {
                                    for (std::size_t r = 0; r < kr; ++r) {
                                        for (std::size_t p = 0; p < kp; ++p) {
                                            const std::size_t in_base =
                                                ((c * depth + z + r) * height + y + p) * width + x;
                                            const std::size_t k_base =
                                                (((o * channels + c) * kr + r) * kp + p) * kq;
                                            for (std::size_t q = 0; q < kq; ++q) {
                                                if (gin) (*gin)[in_base + q] += go * ker.data[k_base + q];
                                                if (gker) (*gker)[k_base + q] += go * in.data[in_base + q];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (wants(2)) {
                auto& gb = grad_buffer(node.inputs[2]);
                const std::size_t plane = od * oh * ow;
                for (std::size_t o = 0; o < out_ch; ++o) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += gout[o * plane + i];
                    gb[o] += acc;
                }
            }
            break;
        }
        case Op::MaxPool3d: {
            if (!wants(0)) break;
            auto& g = grad_buffer(node.inputs[0]);
            for (std::size_t i = 0; i < gout.size(); ++i) g[node.argmax[i]] += gout[i];
            break;
        }
        case Op::Concat: {
            const Tensor& lhs = values_[node.inputs[0].index];
            const Tensor& rhs = values_[node.inputs[1].index];
            std::size_t outer = 1;
            for (std::size_t d = 0; d < node.axis; ++d) outer *= lhs.shape[d];
            std::size_t inner_a = 1, inner_b = 1;
            for (std::size_t d = node.axis; d < lhs.rank(); ++d) {
                inner_a *= lhs.shape[d];
                inner_b *= rhs.shape[d];
            }
            if (wants(0)) {
                auto& ga = grad_buffer(node.inputs[0]);
                for (std::size_t block = 0; block < outer; ++block) {
                    const double* src = gout.data() + block * (inner_a + inner_b);
                    for (std::size_t i = 0; i < inner_a; ++i) ga[block * inner_a + i] += src[i];
                }
            }
            if (wants(1)) {
                auto& gb = grad_buffer(node.inputs[1]);
                for (std::size_t block = 0; block < outer; ++block) {
                    const double* src = gout.data() + block * (inner_a + inner_b) + inner_a;
                    for (std::size_t i = 0; i < inner_b; ++i) gb[block * inner_b + i] += src[i];
                }
            }
            break;
        }
        case Op::Reshape: {
            if (!wants(0)) break;
            auto& g = grad_buffer(node.inputs[0]);
            for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
            break;
        }
        case Op::Sum: {
            if (!wants(0)) break;
            auto& g = grad_buffer(node.inputs[0]);
            const double go = gout[0];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
            break;
        }
        case Op::Dropout: {
            if (!wants(0)) break;
            auto& g = grad_buffer(node.inputs[0]);
            for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * node.mask[i];
            break;
        }
    }
}

const Tensor& Tape::value(VarId id) const {
    check_var(id, "value");
    return values_[id.index];
}

const std::vector<double>& Tape::grad(VarId id) const {
    check_var(id, "grad");
    const auto& g = grads_[id.index];
    if (g.empty()) {
        throw ContractError("grad: no gradient recorded for this variable; run backward first");
    }
    return g;
}

bool Tape::trainable(VarId id) const {
    check_var(id, "trainable");
    return is_trainable_leaf_[id.index];
}

} // namespace skytrace
