// SPDX-License-Identifier: Apache-2.0
#include "skytrace/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "skytrace/container.hpp"
#include "skytrace/error.hpp"

namespace skytrace {

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Full: return "cg3d";
        case ModelKind::CnnGruOnly: return "cnn-gru";
        case ModelKind::C3dOnly: return "c3d";
    }
    return "cg3d";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "cg3d") return ModelKind::Full;
    if (name == "cnn-gru") return ModelKind::CnnGruOnly;
    if (name == "c3d") return ModelKind::C3dOnly;
    throw ConfigError("unknown model kind '" + name + "'");
}

void Cg3dConfig::validate() const {
    if (window == 0) throw ConfigError("model window must be positive");
    if (horizon == 0) throw ConfigError("model horizon must be positive");
    if (output_dim == 0) throw ConfigError("model output dim must be positive");
    if (gru_hidden == 0) throw ConfigError("gru hidden size must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0,1)");
    }
    for (std::size_t i = 0; i < cnn.size(); ++i) {
        const ConvStage2d& s = cnn[i];
        if (s.out_channels == 0 || s.kh == 0 || s.kw == 0) {
            throw ConfigError("cnn stage " + std::to_string(i) + " has a zero dimension");
        }
    }
    for (std::size_t i = 0; i < c3d.size(); ++i) {
        const ConvStage3d& s = c3d[i];
        if (s.out_channels == 0 || s.kd == 0 || s.kh == 0 || s.kw == 0) {
            throw ConfigError("c3d stage " + std::to_string(i) + " has a zero dimension");
        }
    }
    if (c3d_depth == 0 || c3d_height == 0 || c3d_width == 0) {
        throw ConfigError("c3d input cube must have positive dimensions");
    }
}

namespace {

std::vector<std::string> split_on(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = text.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(text.substr(start));
            return parts;
        }
        parts.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::size_t parse_count(const std::string& text, const std::string& what) {
    std::size_t value = 0;
    std::size_t pos = 0;
    try {
        value = std::stoull(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("malformed " + what + ": '" + text + "'");
    }
    if (pos != text.size() || value == 0) {
        throw ConfigError("malformed " + what + ": '" + text + "'");
    }
    return value;
}

} // namespace

std::string encode_cnn_stages(const std::vector<ConvStage2d>& stages) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(stages[i].out_channels) + ":" + std::to_string(stages[i].kh) +
               "x" + std::to_string(stages[i].kw) + ":" + activation_name(stages[i].activation);
    }
    return out;
}

std::vector<ConvStage2d> decode_cnn_stages(const std::string& text) {
    std::vector<ConvStage2d> stages;
    if (text.empty()) return stages;
    for (const std::string& part : split_on(text, ',')) {
        std::vector<std::string> fields = split_on(part, ':');
        if (fields.size() != 3) {
            throw ConfigError("malformed cnn stage '" + part +
                              "', expected channels:PxQ:activation");
        }
        std::vector<std::string> dims = split_on(fields[1], 'x');
        if (dims.size() != 2) {
            throw ConfigError("malformed cnn kernel '" + fields[1] + "', expected PxQ");
        }
        ConvStage2d stage;
        stage.out_channels = parse_count(fields[0], "cnn channels");
        stage.kh = parse_count(dims[0], "cnn kernel height");
        stage.kw = parse_count(dims[1], "cnn kernel width");
        stage.activation = activation_from_name(fields[2]);
        stages.push_back(stage);
    }
    return stages;
}

std::string encode_c3d_stages(const std::vector<ConvStage3d>& stages) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(stages[i].out_channels) + ":" + std::to_string(stages[i].kd) +
               "x" + std::to_string(stages[i].kh) + "x" + std::to_string(stages[i].kw) + ":" +
               activation_name(stages[i].activation);
    }
    return out;
}

std::vector<ConvStage3d> decode_c3d_stages(const std::string& text) {
    std::vector<ConvStage3d> stages;
    if (text.empty()) return stages;
    for (const std::string& part : split_on(text, ',')) {
        std::vector<std::string> fields = split_on(part, ':');
        if (fields.size() != 3) {
            throw ConfigError("malformed c3d stage '" + part +
                              "', expected channels:RxPxQ:activation");
        }
        std::vector<std::string> dims = split_on(fields[1], 'x');
        if (dims.size() != 3) {
            throw ConfigError("malformed c3d kernel '" + fields[1] + "', expected RxPxQ");
        }
        ConvStage3d stage;
        stage.out_channels = parse_count(fields[0], "c3d channels");
        stage.kd = parse_count(dims[0], "c3d kernel depth");
        stage.kh = parse_count(dims[1], "c3d kernel height");
        stage.kw = parse_count(dims[2], "c3d kernel width");
        stage.activation = activation_from_name(fields[2]);
        stages.push_back(stage);
    }
    return stages;
}

ShapeWalk plan_shapes(const Cg3dConfig& config, ModelKind kind, std::size_t d_spatial,
                      std::size_t d_temporal) {
    config.validate();
    if (d_spatial == 0 || d_temporal == 0) {
        throw ConfigError("model needs at least one spatial and one temporal feature");
    }
    ShapeWalk walk;

    if (kind != ModelKind::C3dOnly) {
        walk.cnn_width = std::max(d_spatial, config.cnn_input_width);
        std::size_t ch = 1;
        std::size_t h = config.window;
        std::size_t w = walk.cnn_width;
        for (std::size_t i = 0; i < config.cnn.size(); ++i) {
            const ConvStage2d& s = config.cnn[i];
            if (s.kh > h || s.kw > w) {
                throw ConfigError("cnn stage " + std::to_string(i) + ": kernel " +
                                  std::to_string(s.kh) + "x" + std::to_string(s.kw) +
                                  " exceeds its input " + std::to_string(h) + "x" +
                                  std::to_string(w));
            }
            ch = s.out_channels;
            h = h - s.kh + 1;
            w = w - s.kw + 1;
            walk.cnn_shapes.push_back({ch, h, w});
        }
        walk.cnn_flat = ch * h * w;
        walk.feature_dim += walk.cnn_flat + config.gru_hidden;
    }

    if (kind != ModelKind::CnnGruOnly) {
        if (config.c3d_depth * config.c3d_height != config.window) {
            throw ConfigError("c3d cube depth*height " +
                              std::to_string(config.c3d_depth * config.c3d_height) +
                              " must equal the window length " + std::to_string(config.window));
        }
        std::size_t d_in = d_spatial + d_temporal;
        if (config.c3d_width < d_in) {
            throw ConfigError("c3d cube width " + std::to_string(config.c3d_width) +
                              " is smaller than the feature count " + std::to_string(d_in));
        }
        std::size_t ch = 1;
        std::size_t d = config.c3d_depth;
        std::size_t h = config.c3d_height;
        std::size_t w = config.c3d_width;
        for (std::size_t i = 0; i < config.c3d.size(); ++i) {
            const ConvStage3d& s = config.c3d[i];
            if (s.kd > d || s.kh > h || s.kw > w) {
                throw ConfigError("c3d stage " + std::to_string(i) + ": kernel " +
                                  std::to_string(s.kd) + "x" + std::to_string(s.kh) + "x" +
                                  std::to_string(s.kw) + " exceeds its input " +
                                  std::to_string(d) + "x" + std::to_string(h) + "x" +
                                  std::to_string(w));
            }
            ch = s.out_channels;
            d = d - s.kd + 1;
            h = h - s.kh + 1;
            w = w - s.kw + 1;
            bool pool = d >= 2 && h >= 2 && w >= 2;
            if (pool) {
                d /= 2;
                h /= 2;
                w /= 2;
            }
            walk.c3d_pooled.push_back(pool);
            walk.c3d_shapes.push_back({ch, d, h, w});
        }
        walk.c3d_flat = ch * d * h * w;
        walk.feature_dim += walk.c3d_flat;
    }
    return walk;
}

namespace {

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Prng rng(seed);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
}

} // namespace

std::vector<std::pair<std::string, Tensor*>> Cg3dModel::parameters() {
    std::vector<std::pair<std::string, Tensor*>> params;
    if (has_cnn_gru()) {
        for (std::size_t i = 0; i < cnn.size(); ++i) {
            params.emplace_back("cnn." + std::to_string(i) + ".kernels", &cnn[i].kernels);
            params.emplace_back("cnn." + std::to_string(i) + ".bias", &cnn[i].bias);
        }
        params.emplace_back("gru.w_update", &gru.w_update);
        params.emplace_back("gru.u_update", &gru.u_update);
        params.emplace_back("gru.w_reset", &gru.w_reset);
        params.emplace_back("gru.u_reset", &gru.u_reset);
        params.emplace_back("gru.w_cand", &gru.w_cand);
        params.emplace_back("gru.u_cand", &gru.u_cand);
    }
    if (has_c3d()) {
        for (std::size_t i = 0; i < c3d.size(); ++i) {
            params.emplace_back("c3d." + std::to_string(i) + ".kernels", &c3d[i].kernels);
            params.emplace_back("c3d." + std::to_string(i) + ".bias", &c3d[i].bias);
        }
    }
    params.emplace_back("head.weight", &head.weight);
    params.emplace_back("head.bias", &head.bias);
    return params;
}

std::vector<std::pair<std::string, const Tensor*>> Cg3dModel::parameters() const {
    std::vector<std::pair<std::string, const Tensor*>> params;
    for (auto& [name, tensor] : const_cast<Cg3dModel*>(this)->parameters()) {
        params.emplace_back(name, tensor);
    }
    return params;
}

std::size_t Cg3dModel::parameter_count() const {
    std::size_t count = 0;
    for (const auto& [name, tensor] : parameters()) count += tensor->numel();
    return count;
}

Cg3dModel build_model(const Cg3dConfig& config, ModelKind kind, std::size_t d_spatial,
                      std::size_t d_temporal, std::uint64_t seed) {
    Cg3dModel model;
    model.config = config;
    model.kind = kind;
    model.d_spatial = d_spatial;
    model.d_temporal = d_temporal;
    model.walk = plan_shapes(config, kind, d_spatial, d_temporal);
    model.dropout.rate = config.dropout_rate;

    if (model.has_cnn_gru()) {
        std::size_t in_ch = 1;
        for (const ConvStage2d& s : config.cnn) {
            model.cnn.push_back(make_conv2d(s.out_channels, in_ch, s.kh, s.kw, s.activation));
            in_ch = s.out_channels;
        }
        model.gru = make_gru(d_temporal, config.gru_hidden);
    }
    if (model.has_c3d()) {
        std::size_t in_ch = 1;
        for (const ConvStage3d& s : config.c3d) {
            model.c3d.push_back(
                make_conv3d(s.out_channels, in_ch, s.kd, s.kh, s.kw, s.activation));
            in_ch = s.out_channels;
        }
    }
    model.head =
        make_dense(config.horizon * config.output_dim, model.walk.feature_dim, Activation::Linear);

    for (auto& [name, tensor] : model.parameters()) {
        if (name.ends_with(".bias")) continue;  // biases start at zero
        std::size_t fan_in = 0;
        std::size_t fan_out = 0;
        const Shape& s = tensor->shape;
        if (s.size() == 2) {
            fan_in = s[1];
            fan_out = s[0];
        } else if (s.size() == 4) {
            fan_in = s[1] * s[2] * s[3];
            fan_out = s[0] * s[2] * s[3];
        } else if (s.size() == 5) {
            fan_in = s[1] * s[2] * s[3] * s[4];
            fan_out = s[0] * s[2] * s[3] * s[4];
        } else {
            throw ContractError("unexpected parameter rank for " + name);
        }
        glorot_fill(*tensor, fan_in, fan_out, derive_seed(seed, "init:" + name));
    }
    return model;
}

BoundCg3d bind_model(Tape& tape, const Cg3dModel& model, bool trainable) {
    BoundCg3d bound;
    if (model.has_cnn_gru()) {
        for (const Conv2dLayer& layer : model.cnn) bound.cnn.push_back(bind(tape, layer, trainable));
        bound.gru = bind(tape, model.gru, trainable);
    }
    if (model.has_c3d()) {
        for (const Conv3dLayer& layer : model.c3d) bound.c3d.push_back(bind(tape, layer, trainable));
    }
    bound.head = bind(tape, model.head, trainable);
    return bound;
}

std::vector<VarId> bound_parameter_ids(const BoundCg3d& bound, const Cg3dModel& model) {
    std::vector<VarId> ids;
    if (model.has_cnn_gru()) {
        for (const BoundConv2d& layer : bound.cnn) {
            ids.push_back(layer.kernels);
            ids.push_back(layer.bias);
        }
        ids.push_back(bound.gru.w_update);
        ids.push_back(bound.gru.u_update);
        ids.push_back(bound.gru.w_reset);
        ids.push_back(bound.gru.u_reset);
        ids.push_back(bound.gru.w_cand);
        ids.push_back(bound.gru.u_cand);
    }
    if (model.has_c3d()) {
        for (const BoundConv3d& layer : bound.c3d) {
            ids.push_back(layer.kernels);
            ids.push_back(layer.bias);
        }
    }
    ids.push_back(bound.head.weight);
    ids.push_back(bound.head.bias);
    return ids;
}

namespace {

void check_input(const Cg3dModel& model, const Tensor& input) {
    Shape expected{model.config.window, model.d_spatial + model.d_temporal};
    if (input.shape != expected) {
        throw ShapeError("model input must be " + shape_to_string(expected) + ", got " +
                         shape_to_string(input.shape));
    }
}

// [window x d_spatial] columns as a zero-padded 1-channel image.
Tensor spatial_image(const Cg3dModel& model, const Tensor& input) {
    const std::size_t w = model.config.window;
    const std::size_t d_in = model.d_spatial + model.d_temporal;
    Tensor image(Shape{1, w, model.walk.cnn_width});
    for (std::size_t r = 0; r < w; ++r) {
        for (std::size_t c = 0; c < model.d_spatial; ++c) {
            image.data[r * model.walk.cnn_width + c] = input.data[r * d_in + c];
        }
    }
    return image;
}

// [window x d_temporal] columns.
Tensor temporal_rows(const Cg3dModel& model, const Tensor& input) {
    const std::size_t w = model.config.window;
    const std::size_t d_in = model.d_spatial + model.d_temporal;
    Tensor rows(Shape{w, model.d_temporal});
    for (std::size_t r = 0; r < w; ++r) {
        for (std::size_t c = 0; c < model.d_temporal; ++c) {
            rows.data[r * model.d_temporal + c] = input.data[r * d_in + model.d_spatial + c];
        }
    }
    return rows;
}

// Full window as depth x height frames of zero-padded feature rows.
Tensor feature_cube(const Cg3dModel& model, const Tensor& input) {
    const std::size_t d_in = model.d_spatial + model.d_temporal;
    const std::size_t depth = model.config.c3d_depth;
    const std::size_t height = model.config.c3d_height;
    const std::size_t width = model.config.c3d_width;
    Tensor cube(Shape{1, depth, height, width});
    for (std::size_t r = 0; r < model.config.window; ++r) {
        std::size_t frame = r / height;
        std::size_t row = r % height;
        for (std::size_t c = 0; c < d_in; ++c) {
            cube.data[(frame * height + row) * width + c] = input.data[r * d_in + c];
        }
    }
    return cube;
}

} // namespace

VarId forward_cnn_gru(Tape& tape, const BoundCg3d& bound, const Cg3dModel& model,
                      const Tensor& input) {
    if (!model.has_cnn_gru()) throw ContractError("model has no CNN-GRU branch");
    check_input(model, input);

    VarId x = tape.leaf(spatial_image(model, input));
    for (const BoundConv2d& layer : bound.cnn) {
        x = conv2d_layer_forward(tape, layer, x);
    }
    VarId conv_flat = tape.reshape(x, Shape{model.walk.cnn_flat});

    GruSequenceResult seq = gru_sequence(tape, bound.gru, temporal_rows(model, input),
                                         Tensor(Shape{model.config.gru_hidden}));
    return tape.concat(conv_flat, seq.hidden.back(), 0);
}

VarId forward_c3d(Tape& tape, const BoundCg3d& bound, const Cg3dModel& model,
                  const Tensor& input) {
    if (!model.has_c3d()) throw ContractError("model has no C3D branch");
    check_input(model, input);

    VarId x = tape.leaf(feature_cube(model, input));
    for (std::size_t i = 0; i < bound.c3d.size(); ++i) {
        x = conv3d_layer_forward(tape, bound.c3d[i], x);
        if (model.walk.c3d_pooled[i]) x = tape.max_pool3d(x);
    }
    return tape.reshape(x, Shape{model.walk.c3d_flat});
}

VarId model_forward(Tape& tape, const BoundCg3d& bound, const Cg3dModel& model,
                    const Tensor& input, RunMode mode, Prng& rng) {
    VarId features;
    if (model.has_cnn_gru() && model.has_c3d()) {
        VarId a = dropout_forward(tape, model.dropout, forward_cnn_gru(tape, bound, model, input),
                                  mode, rng);
        VarId b = dropout_forward(tape, model.dropout, forward_c3d(tape, bound, model, input),
                                  mode, rng);
        features = tape.concat(a, b, 0);
    } else if (model.has_cnn_gru()) {
        features = dropout_forward(tape, model.dropout,
                                   forward_cnn_gru(tape, bound, model, input), mode, rng);
    } else {
        features = dropout_forward(tape, model.dropout, forward_c3d(tape, bound, model, input),
                                   mode, rng);
    }
    features = dropout_forward(tape, model.dropout, features, mode, rng);
    VarId out = dense_forward(tape, bound.head, features);
    return tape.reshape(out, Shape{model.config.horizon, model.config.output_dim});
}

Tensor predict(const Cg3dModel& model, const Tensor& input, RunMode mode, Prng& rng) {
    Tape tape;
    BoundCg3d bound = bind_model(tape, model, false);
    VarId out = model_forward(tape, bound, model, input, mode, rng);
    return tape.value(out);
}

Tensor predict_eval(const Cg3dModel& model, const Tensor& input) {
    Prng rng(0);
    return predict(model, input, RunMode::Eval, rng);
}

void save_model(const Cg3dModel& model, const std::filesystem::path& path) {
    ArrayFile file;
    file.set_meta("format", "skytrace.checkpoint.v1");
    file.set_meta("kind", model_kind_name(model.kind));
    file.set_meta("d.spatial", std::to_string(model.d_spatial));
    file.set_meta("d.temporal", std::to_string(model.d_temporal));
    file.set_meta("config.cnn", encode_cnn_stages(model.config.cnn));
    file.set_meta("config.cnn_input_width", std::to_string(model.config.cnn_input_width));
    file.set_meta("config.gru_hidden", std::to_string(model.config.gru_hidden));
    file.set_meta("config.c3d", encode_c3d_stages(model.config.c3d));
    file.set_meta("config.c3d_cube", std::to_string(model.config.c3d_depth) + "x" +
                                         std::to_string(model.config.c3d_height) + "x" +
                                         std::to_string(model.config.c3d_width));
    file.set_meta("config.window", std::to_string(model.config.window));
    file.set_meta("config.horizon", std::to_string(model.config.horizon));
    file.set_meta("config.output_dim", std::to_string(model.config.output_dim));
    file.put_scalar("dropout.rate", model.config.dropout_rate);
    for (const auto& [name, tensor] : model.parameters()) {
        file.put("param." + name, tensor->shape, tensor->data);
    }
    file.save(path);
}

Cg3dModel load_model(const std::filesystem::path& path) {
    ArrayFile file = ArrayFile::load(path);
    if (!file.has_meta("format") || file.meta("format") != "skytrace.checkpoint.v1") {
        throw SchemaError(path.string() + " is not a checkpoint file");
    }
    Cg3dConfig config;
    config.cnn = decode_cnn_stages(file.meta("config.cnn"));
    config.cnn_input_width = std::stoull(file.meta("config.cnn_input_width"));
    config.gru_hidden = std::stoull(file.meta("config.gru_hidden"));
    config.c3d = decode_c3d_stages(file.meta("config.c3d"));
    {
        std::vector<std::string> dims = split_on(file.meta("config.c3d_cube"), 'x');
        if (dims.size() != 3) throw SchemaError("malformed c3d cube in checkpoint");
        config.c3d_depth = parse_count(dims[0], "cube depth");
        config.c3d_height = parse_count(dims[1], "cube height");
        config.c3d_width = parse_count(dims[2], "cube width");
    }
    config.window = std::stoull(file.meta("config.window"));
    config.horizon = std::stoull(file.meta("config.horizon"));
    config.output_dim = std::stoull(file.meta("config.output_dim"));
    config.dropout_rate = file.get_scalar("dropout.rate");

    Cg3dModel model = build_model(config, model_kind_from_name(file.meta("kind")),
                                  std::stoull(file.meta("d.spatial")),
                                  std::stoull(file.meta("d.temporal")), 0);
    for (auto& [name, tensor] : model.parameters()) {
        const NamedArray& stored = file.get("param." + name);
        if (stored.shape != tensor->shape) {
            throw SchemaError("checkpoint parameter " + name + " has shape " +
                              shape_to_string(stored.shape) + ", expected " +
                              shape_to_string(tensor->shape));
        }
        tensor->data = stored.values;
    }
    return model;
}

} // namespace skytrace
