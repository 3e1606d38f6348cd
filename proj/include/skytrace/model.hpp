// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skytrace/layers.hpp"
#include "skytrace/rng.hpp"
#include "skytrace/tensor.hpp"

namespace skytrace {

enum class ModelKind { Full, CnnGruOnly, C3dOnly };
const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ConvStage2d {
    std::size_t out_channels = 0;
    std::size_t kh = 0;
    std::size_t kw = 0;
    Activation activation = Activation::Relu;
};

struct ConvStage3d {
    std::size_t out_channels = 0;
    std::size_t kd = 0;
    std::size_t kh = 0;
    std::size_t kw = 0;
    Activation activation = Activation::Relu;
};

struct Cg3dConfig {
    std::vector<ConvStage2d> cnn = {{8, 3, 3, Activation::Relu}, {16, 3, 3, Activation::Relu}};
    // The spatial window is laid out as a 1-channel window x width image,
    // zero-padded on the right to at least this width so the default 3x3
    // stack stays valid for narrow post-PCA feature counts.
    std::size_t cnn_input_width = 8;
    std::size_t gru_hidden = 64;
    std::vector<ConvStage3d> c3d = {{8, 3, 3, 3, Activation::Relu},
                                    {16, 3, 3, 3, Activation::Relu}};
    // Full-window cube: depth x height frames must tile the window rows and
    // the width must hold one zero-padded feature row.
    std::size_t c3d_depth = 10;
    std::size_t c3d_height = 10;
    std::size_t c3d_width = 8;
    double dropout_rate = 0.2;
    std::size_t window = 100;
    std::size_t horizon = 5;
    std::size_t output_dim = 4;

    void validate() const;
};

// Stage-list encodings used by config files and checkpoint manifests:
// "8:3x3:relu,16:3x3:relu" and "8:3x3x3:relu,16:3x3x3:relu".
std::string encode_cnn_stages(const std::vector<ConvStage2d>& stages);
std::vector<ConvStage2d> decode_cnn_stages(const std::string& text);
std::string encode_c3d_stages(const std::vector<ConvStage3d>& stages);
std::vector<ConvStage3d> decode_c3d_stages(const std::string& text);

// Static shape walk through both branches. Throws ConfigError naming the
// first stage whose kernel does not fit. A 2x2x2 pool stage is skipped when
// any incoming spatial dim is already below 2; the skip is recorded here.
struct ShapeWalk {
    std::size_t cnn_width = 0;
    std::vector<std::array<std::size_t, 3>> cnn_shapes;  // (ch, h, w) after each stage
    std::size_t cnn_flat = 0;
    std::vector<std::array<std::size_t, 4>> c3d_shapes;  // (ch, d, h, w) after conv[+pool]
    std::vector<bool> c3d_pooled;
    std::size_t c3d_flat = 0;
    std::size_t feature_dim = 0;  // concatenated branch features = head input
};

ShapeWalk plan_shapes(const Cg3dConfig& config, ModelKind kind, std::size_t d_spatial,
                      std::size_t d_temporal);

struct Cg3dModel {
    Cg3dConfig config;
    ModelKind kind = ModelKind::Full;
    std::size_t d_spatial = 0;
    std::size_t d_temporal = 0;
    ShapeWalk walk;
    std::vector<Conv2dLayer> cnn;
    GruCell gru;
    std::vector<Conv3dLayer> c3d;
    DenseLayer head;
    DropoutSpec dropout;

    bool has_cnn_gru() const { return kind != ModelKind::C3dOnly; }
    bool has_c3d() const { return kind != ModelKind::CnnGruOnly; }
    std::vector<std::pair<std::string, Tensor*>> parameters();
    std::vector<std::pair<std::string, const Tensor*>> parameters() const;
    std::size_t parameter_count() const;
};

// Same seed and config give bitwise-identical parameters; each parameter's
// generator is derived from its registry name.
Cg3dModel build_model(const Cg3dConfig& config, ModelKind kind, std::size_t d_spatial,
                      std::size_t d_temporal, std::uint64_t seed);

struct BoundCg3d {
    std::vector<BoundConv2d> cnn;
    BoundGru gru;
    std::vector<BoundConv3d> c3d;
    BoundDense head;
};

BoundCg3d bind_model(Tape& tape, const Cg3dModel& model, bool trainable);

// Bound tape ids in the same order as Cg3dModel::parameters().
std::vector<VarId> bound_parameter_ids(const BoundCg3d& bound, const Cg3dModel& model);

// Branch feature vectors for a single [window x d_in] sample input.
VarId forward_cnn_gru(Tape& tape, const BoundCg3d& bound, const Cg3dModel& model,
                      const Tensor& input);
VarId forward_c3d(Tape& tape, const BoundCg3d& bound, const Cg3dModel& model,
                  const Tensor& input);

// Full forward: branches -> per-branch dropout -> concat -> dropout -> linear
// head -> [horizon x output_dim].
VarId model_forward(Tape& tape, const BoundCg3d& bound, const Cg3dModel& model,
                    const Tensor& input, RunMode mode, Prng& rng);

// Convenience inference on a private tape.
Tensor predict(const Cg3dModel& model, const Tensor& input, RunMode mode, Prng& rng);
Tensor predict_eval(const Cg3dModel& model, const Tensor& input);

// Checkpoint: config echo + named parameter arrays; load(save(m)) is
// bitwise-identical.
void save_model(const Cg3dModel& model, const std::filesystem::path& path);
Cg3dModel load_model(const std::filesystem::path& path);

} // namespace skytrace
