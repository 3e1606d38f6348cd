// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "skytrace/layers.hpp"
#include "skytrace/rng.hpp"
#include "support/gradcheck.hpp"

using namespace skytrace;
using testsupport::GradProblem;
using testsupport::compare_gradients;

namespace {

void fill_random(Tensor& t, Prng& rng, double spread = 0.5) {
    for (double& v : t.data) v = rng.normal(0.0, spread);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

TEST_CASE("conv2d layer oracles") {
    SUBCASE("identity 1x1 kernel with linear activation") {
        Conv2dLayer layer = make_conv2d(1, 1, 1, 1, Activation::Linear);
        layer.kernels.data = {1.0};
        Tensor img({1, 2, 3}, {1, 2, 3, 4, 5, 6});
        Tape tape;
        VarId out = conv2d_layer_forward(tape, bind(tape, layer, false), tape.leaf(img));
        CHECK(tape.value(out).data == img.data);
    }
    SUBCASE("zero kernels with bias give a constant per channel") {
        Conv2dLayer layer = make_conv2d(2, 1, 2, 2, Activation::Linear);
        for (double& v : layer.kernels.data) v = 0.0;
        layer.bias.data = {3.5, -1.25};
        Prng rng(1);
        Tensor img({1, 3, 3});
        fill_random(img, rng);
        Tape tape;
        const Tensor& out =
            tape.value(conv2d_layer_forward(tape, bind(tape, layer, false), tape.leaf(img)));
        CHECK(out.shape == Shape{2, 2, 2});
        for (std::size_t i = 0; i < 4; ++i) CHECK(out.data[i] == 3.5);
        for (std::size_t i = 4; i < 8; ++i) CHECK(out.data[i] == -1.25);
    }
    SUBCASE("random kernel matches a nested-loop evaluation") {
        Prng rng(2);
        Conv2dLayer layer = make_conv2d(1, 1, 2, 2, Activation::Relu);
        fill_random(layer.kernels, rng);
        layer.bias.data = {0.2};
        Tensor img({1, 3, 3});
        fill_random(img, rng);
        Tape tape;
        const Tensor& out =
            tape.value(conv2d_layer_forward(tape, bind(tape, layer, false), tape.leaf(img)));
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < 2; ++c) {
                double acc = layer.bias.data[0];
                for (std::size_t p = 0; p < 2; ++p)
                    for (std::size_t q = 0; q < 2; ++q)
                        acc += layer.kernels.data[p * 2 + q] * img.data[(r + p) * 3 + (c + q)];
                acc = std::max(0.0, acc);
                CHECK(out.data[r * 2 + c] == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("conv3d layer oracles") {
    SUBCASE("unit 1x1x1 kernel with linear activation is the identity") {
        Conv3dLayer layer = make_conv3d(1, 1, 1, 1, 1, Activation::Linear);
        layer.kernels.data = {1.0};
        Tensor cube({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
        Tape tape;
        VarId out = conv3d_layer_forward(tape, bind(tape, layer, false), tape.leaf(cube));
        CHECK(tape.value(out).data == cube.data);
    }
    SUBCASE("zero kernels under tanh give zeros") {
        Conv3dLayer layer = make_conv3d(2, 1, 2, 2, 2, Activation::Tanh);
        for (double& v : layer.kernels.data) v = 0.0;
        Prng rng(3);
        Tensor cube({1, 3, 3, 3});
        fill_random(cube, rng);
        Tape tape;
        const Tensor& out =
            tape.value(conv3d_layer_forward(tape, bind(tape, layer, false), tape.leaf(cube)));
        for (double v : out.data) CHECK(v == 0.0);
    }
    SUBCASE("random 3x3x3 kernel matches a nested-loop evaluation") {
        Prng rng(4);
        Conv3dLayer layer = make_conv3d(1, 1, 3, 3, 3, Activation::Linear);
        fill_random(layer.kernels, rng);
        layer.bias.data = {-0.1};
        Tensor cube({1, 4, 4, 4});
        fill_random(cube, rng);
        Tape tape;
        const Tensor& out =
            tape.value(conv3d_layer_forward(tape, bind(tape, layer, false), tape.leaf(cube)));
        CHECK(out.shape == Shape{1, 2, 2, 2});
        for (std::size_t d = 0; d < 2; ++d)
            for (std::size_t r = 0; r < 2; ++r)
                for (std::size_t c = 0; c < 2; ++c) {
                    double acc = layer.bias.data[0];
                    for (std::size_t u = 0; u < 3; ++u)
                        for (std::size_t p = 0; p < 3; ++p)
                            for (std::size_t q = 0; q < 3; ++q)
                                acc += layer.kernels.data[(u * 3 + p) * 3 + q] *
                                       cube.data[((d + u) * 4 + (r + p)) * 4 + (c + q)];
                    CHECK(out.data[(d * 2 + r) * 2 + c] == doctest::Approx(acc).epsilon(1e-10));
                }
    }
}

TEST_CASE("dense layer") {
    DenseLayer layer = make_dense(2, 3, Activation::Linear);
    layer.weight.data = {1, 0, 0, 0, 1, 0};
    layer.bias.data = {0.5, -0.5};
    Tape tape;
    const Tensor& out =
        tape.value(dense_forward(tape, bind(tape, layer, false), tape.leaf(Tensor({3}, {7, 8, 9}))));
    CHECK(out.shape == Shape{2});
    CHECK(out.data == std::vector<double>{7.5, 7.5});
}

TEST_CASE("gru gate identities") {
    Prng rng(5);
    GruCell cell = make_gru(3, 2);
    for (Tensor* t : {&cell.w_update, &cell.u_update, &cell.w_reset, &cell.u_reset,
                      &cell.w_cand, &cell.u_cand})
        fill_random(*t, rng);
    Tensor x({3}, {0.4, -0.2, 0.9});
    Tensor h_prev({2}, {0.6, -0.3});

    SUBCASE("forced z=1 returns h_prev") {
        Tape tape;
        Tensor ones({2}, {1.0, 1.0});
        GruOverrides ov{&ones};
        VarId h = gru_cell_step(tape, bind(tape, cell, false), tape.leaf(x), tape.leaf(h_prev),
                                nullptr, &ov);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(std::abs(tape.value(h).data[i] - h_prev.data[i]) <= 1e-12);
    }
    SUBCASE("forced z=0 returns the candidate") {
        Tape tape;
        Tensor zeros({2}, {0.0, 0.0});
        GruOverrides ov{&zeros};
        GruStepTrace trace;
        VarId h = gru_cell_step(tape, bind(tape, cell, false), tape.leaf(x), tape.leaf(h_prev),
                                &trace, &ov);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(std::abs(tape.value(h).data[i] - tape.value(trace.candidate).data[i]) <= 1e-12);
    }
    SUBCASE("zero weights halve the previous state") {
        GruCell zero = make_gru(3, 2);
        Tape tape;
        GruStepTrace trace;
        VarId h = gru_cell_step(tape, bind(tape, zero, false), tape.leaf(x), tape.leaf(h_prev),
                                &trace);
        // All pre-activations vanish: z = r = 0.5, candidate = tanh(0) = 0,
        // so h = 0.5 * h_prev.
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(tape.value(trace.update_gate).data[i] == 0.5);
            CHECK(tape.value(trace.reset_gate).data[i] == 0.5);
            CHECK(tape.value(trace.candidate).data[i] == 0.0);
            CHECK(tape.value(h).data[i] == doctest::Approx(0.5 * h_prev.data[i]).epsilon(1e-15));
        }
    }
    SUBCASE("hand evaluation of the update equations") {
        GruCell tiny = make_gru(1, 1);
        tiny.w_update.data = {0.3};
        tiny.u_update.data = {-0.4};
        tiny.w_reset.data = {0.7};
        tiny.u_reset.data = {0.1};
        tiny.w_cand.data = {-0.6};
        tiny.u_cand.data = {0.8};
        Tensor x1({1}, {0.5});
        Tensor h0({1}, {0.25});
        const double z = sigmoid(0.3 * 0.5 + (-0.4) * 0.25);
        const double r = sigmoid(0.7 * 0.5 + 0.1 * 0.25);
        const double cand = std::tanh(-0.6 * 0.5 + r * (0.8 * 0.25));
        const double expect = z * 0.25 + (1.0 - z) * cand;
        Tape tape;
        VarId h = gru_cell_step(tape, bind(tape, tiny, false), tape.leaf(x1), tape.leaf(h0));
        CHECK(tape.value(h).data[0] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("gru sequence") {
    Prng rng(6);
    GruCell cell = make_gru(2, 3);
    for (Tensor* t : {&cell.w_update, &cell.u_update, &cell.w_reset, &cell.u_reset,
                      &cell.w_cand, &cell.u_cand})
        fill_random(*t, rng);

    SUBCASE("a one-step sequence equals a single cell step") {
        Tensor xs({1, 2}, {0.3, -0.8});
        Tensor h0({3}, {0.1, 0.2, 0.3});
        Tape tape;
        BoundGru bound = bind(tape, cell, false);
        GruSequenceResult seq = gru_sequence(tape, bound, xs, h0);
        VarId step = gru_cell_step(tape, bound, tape.leaf(Tensor({2}, {0.3, -0.8})),
                                   tape.leaf(h0));
        CHECK(tape.value(seq.hidden.back()).data == tape.value(step).data);
        CHECK(tape.value(seq.stacked).shape == Shape{1, 3});
    }
    SUBCASE("zero weights geometric decay over three steps") {
        GruCell zero = make_gru(2, 3);
        Tensor xs({3, 2}, {1, 2, 3, 4, 5, 6});
        Tensor h0({3}, {0.8, -0.4, 0.2});
        Tape tape;
        GruSequenceResult seq = gru_sequence(tape, bind(tape, zero, false), xs, h0);
        const Tensor& stacked = tape.value(seq.stacked);
        CHECK(stacked.shape == Shape{3, 3});
        for (std::size_t step = 0; step < 3; ++step) {
            const double factor = std::pow(0.5, static_cast<double>(step + 1));
            for (std::size_t i = 0; i < 3; ++i)
                CHECK(stacked.data[step * 3 + i] ==
                      doctest::Approx(factor * h0.data[i]).epsilon(1e-14));
        }
    }
    SUBCASE("weight gradients through the unrolled recurrence") {
        Tensor xs({3, 2}, {0.5, -0.2, 0.1, 0.7, -0.4, 0.3});
        Tensor h0({3}, {0.0, 0.0, 0.0});
        Prng wrng(7);
        Tensor readout({3, 3});
        fill_random(readout, wrng);

        auto pack = [&]() {
            return std::vector<Tensor>{cell.w_update, cell.u_update, cell.w_reset,
                                       cell.u_reset,  cell.w_cand,   cell.u_cand};
        };
        auto unpack = [&](const std::vector<Tensor>& p) {
            GruCell c = cell;
            c.w_update = p[0];
            c.u_update = p[1];
            c.w_reset = p[2];
            c.u_reset = p[3];
            c.w_cand = p[4];
            c.u_cand = p[5];
            return c;
        };
        GradProblem problem;
        problem.loss = [&](const std::vector<Tensor>& p) {
            GruCell c = unpack(p);
            Tape tape;
            GruSequenceResult seq = gru_sequence(tape, bind(tape, c, false), xs, h0);
            VarId w = tape.leaf(readout);
            return tape.value(tape.sum(tape.hadamard(seq.stacked, w))).data[0];
        };
        problem.gradients = [&](const std::vector<Tensor>& p) {
            GruCell c = unpack(p);
            Tape tape;
            BoundGru bound = bind(tape, c, true);
            GruSequenceResult seq = gru_sequence(tape, bound, xs, h0);
            VarId w = tape.leaf(readout);
            tape.backward(tape.sum(tape.hadamard(seq.stacked, w)));
            return std::vector<std::vector<double>>{
                tape.grad(bound.w_update), tape.grad(bound.u_update), tape.grad(bound.w_reset),
                tape.grad(bound.u_reset),  tape.grad(bound.w_cand),   tape.grad(bound.u_cand)};
        };
        auto report = compare_gradients(problem, pack());
        CHECK(report.checked > 0);
        CHECK(report.max_rel_error <= 1e-3);
    }
}

TEST_CASE("dropout forward") {
    Prng data_rng(8);
    Tensor x({4, 4});
    fill_random(x, data_rng, 1.0);

    SUBCASE("rate zero is the identity in every mode") {
        DropoutSpec spec{0.0};
        for (RunMode mode : {RunMode::Train, RunMode::Eval, RunMode::Mc}) {
            Prng rng(9);
            Tape tape;
            VarId out = dropout_forward(tape, spec, tape.leaf(x), mode, rng);
            CHECK(tape.value(out).data == x.data);
        }
    }
    SUBCASE("eval mode is the identity at any rate") {
        DropoutSpec spec{0.7};
        Prng rng(10);
        Tape tape;
        VarId out = dropout_forward(tape, spec, tape.leaf(x), RunMode::Eval, rng);
        CHECK(tape.value(out).data == x.data);
    }
    SUBCASE("inverted scaling preserves the expectation") {
        DropoutSpec spec{0.5};
        Prng rng(11);
        double sum = 0.0;
        const int draws = 100000;
        Tensor one({1}, {1.0});
        for (int i = 0; i < draws; ++i) {
            Tape tape;
            VarId out = dropout_forward(tape, spec, tape.leaf(one), RunMode::Train, rng);
            sum += tape.value(out).data[0];
        }
        const double mean = sum / draws;
        CHECK(mean >= 0.98);
        CHECK(mean <= 1.02);
    }
    SUBCASE("train mode zeroes some elements and rescales the rest") {
        DropoutSpec spec{0.5};
        Prng rng(12);
        Tape tape;
        const Tensor& out =
            tape.value(dropout_forward(tape, spec, tape.leaf(x), RunMode::Train, rng));
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < out.numel(); ++i) {
            if (out.data[i] == 0.0) {
                ++zeros;
            } else {
                CHECK(out.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-12));
            }
        }
        CHECK(zeros > 0);
        CHECK(zeros < out.numel());
    }
}
