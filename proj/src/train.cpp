// SPDX-License-Identifier: Apache-2.0
#include "skytrace/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "skytrace/error.hpp"
#include "skytrace/mc.hpp"

namespace skytrace {

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("validation fraction must lie in (0,1)");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("moment decay rates must lie in [0,1)");
    }
    if (epsilon <= 0.0) throw ConfigError("epsilon must be positive");
}

Metrics compute_metrics(const Tensor& preds, const Tensor& targets) {
    if (preds.shape != targets.shape) {
        throw ShapeError("metrics: prediction shape " + shape_to_string(preds.shape) +
                         " differs from target shape " + shape_to_string(targets.shape));
    }
    if (preds.numel() == 0) throw ContractError("metrics: empty input");

    Metrics m;
    m.n = preds.numel();
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < preds.numel(); ++i) {
        double d = preds.data[i] - targets.data[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    m.mae = abs_sum / static_cast<double>(m.n);
    m.mse = sq_sum / static_cast<double>(m.n);
    m.rmse = std::sqrt(m.mse);
    if (m.rmse + 1e-12 < m.mae) {
        throw ContractError("metrics: rmse " + std::to_string(m.rmse) + " fell below mae " +
                            std::to_string(m.mae));
    }
    return m;
}

VarId mse_loss(Tape& tape, VarId pred, VarId target) {
    VarId diff = tape.sub(pred, target);
    VarId sq = tape.hadamard(diff, diff);
    double n = static_cast<double>(tape.value(pred).numel());
    return tape.scale(tape.sum(sq), 1.0 / n);
}

AdamState make_adam_state(const Cg3dModel& model) {
    AdamState state;
    for (const auto& [name, tensor] : model.parameters()) {
        state.m.emplace_back(tensor->numel(), 0.0);
        state.v.emplace_back(tensor->numel(), 0.0);
    }
    return state;
}

void optimizer_step(std::vector<std::pair<std::string, Tensor*>>& params,
                    const std::vector<std::vector<double>>& grads, AdamState& state,
                    const TrainConfig& config, std::size_t epoch, std::size_t batch) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ContractError("optimizer: parameter, gradient, and state counts differ");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p].second->numel() != grads[p].size()) {
            throw ContractError("optimizer: gradient size mismatch for " + params[p].first);
        }
        for (double g : grads[p]) {
            if (std::isnan(g)) {
                throw TrainingError("training diverged: NaN gradient in " + params[p].first +
                                    " at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batch));
            }
        }
    }
    ++state.step;
    double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        std::vector<double>& data = params[p].second->data;
        std::vector<double>& m = state.m[p];
        std::vector<double>& v = state.v[p];
        const std::vector<double>& g = grads[p];
        for (std::size_t i = 0; i < data.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

namespace {

double batch_loss_and_step(Cg3dModel& model,
                           std::vector<std::pair<std::string, Tensor*>>& params,
                           const Dataset& dataset, const std::vector<std::size_t>& batch,
                           AdamState& state, const TrainConfig& config, Prng& dropout_rng,
                           std::size_t epoch, std::size_t batch_no) {
    Tape tape;
    BoundCg3d bound = bind_model(tape, model, true);
    std::vector<VarId> param_ids = bound_parameter_ids(bound, model);

    VarId sq_total;
    std::size_t elems = 0;
    for (std::size_t idx : batch) {
        const WindowSample& sample = dataset.samples[idx];
        VarId pred = model_forward(tape, bound, model, sample.input, RunMode::Train, dropout_rng);
        VarId target = tape.leaf(sample.target);
        VarId diff = tape.sub(pred, target);
        VarId sq = tape.sum(tape.hadamard(diff, diff));
        sq_total = sq_total.valid() ? tape.add(sq_total, sq) : sq;
        elems += sample.target.numel();
    }
    VarId loss = tape.scale(sq_total, 1.0 / static_cast<double>(elems));
    tape.backward(loss);

    std::vector<std::vector<double>> grads;
    grads.reserve(param_ids.size());
    for (VarId id : param_ids) grads.push_back(tape.grad(id));
    optimizer_step(params, grads, state, config, epoch, batch_no);
    return tape.value(loss).data[0];
}

} // namespace

TrainResult train(const Cg3dModel& model, const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    const std::size_t n = dataset.samples.size();
    if (n == 0) throw ConfigError("training set is empty");

    TrainResult result;
    result.model = model;
    std::vector<std::pair<std::string, Tensor*>> params = result.model.parameters();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    {
        Prng split_rng(derive_seed(config.seed, "train.split"));
        split_rng.shuffle(order);
    }
    std::size_t val_count =
        static_cast<std::size_t>(config.validation_fraction * static_cast<double>(n));
    result.val_indices.assign(order.begin(), order.begin() + static_cast<long>(val_count));
    result.train_indices.assign(order.begin() + static_cast<long>(val_count), order.end());
    if (result.train_indices.empty()) {
        throw ConfigError("training split is empty: validation fraction " +
                          std::to_string(config.validation_fraction) + " of " +
                          std::to_string(n) + " samples leaves no training data");
    }

    AdamState state = make_adam_state(result.model);
    Prng dropout_rng(derive_seed(config.seed, "train.dropout"));

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> epoch_order = result.train_indices;
        Prng shuffle_rng(derive_seed(config.seed, "train.shuffle", epoch));
        shuffle_rng.shuffle(epoch_order);

        double loss_weighted = 0.0;
        std::size_t seen = 0;
        std::size_t batch_no = 0;
        for (std::size_t begin = 0; begin < epoch_order.size(); begin += config.batch_size) {
            std::size_t end = std::min(begin + config.batch_size, epoch_order.size());
            std::vector<std::size_t> batch(epoch_order.begin() + static_cast<long>(begin),
                                           epoch_order.begin() + static_cast<long>(end));
            ++batch_no;
            double loss = batch_loss_and_step(result.model, params, dataset, batch, state,
                                              config, dropout_rng, epoch, batch_no);
            loss_weighted += loss * static_cast<double>(batch.size());
            seen += batch.size();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_mse = loss_weighted / static_cast<double>(seen);
        if (result.val_indices.empty()) {
            stats.val_mse = std::numeric_limits<double>::quiet_NaN();
            stats.val_mae = std::numeric_limits<double>::quiet_NaN();
        } else {
            Metrics val = evaluate_model(result.model, dataset, result.val_indices);
            stats.val_mse = val.mse;
            stats.val_mae = val.mae;
        }
        result.history.push_back(stats);
    }
    return result;
}

Tensor predict_samples(const Cg3dModel& model, const Dataset& dataset,
                       const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("predict_samples: no sample indices");
    const std::size_t h = model.config.horizon;
    const std::size_t d = model.config.output_dim;
    Tensor out(Shape{indices.size(), h, d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        Tensor pred = predict_eval(model, dataset.samples.at(indices[i]).input);
        std::copy(pred.data.begin(), pred.data.end(),
                  out.data.begin() + static_cast<long>(i * h * d));
    }
    return out;
}

Tensor stack_targets(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("stack_targets: no sample indices");
    const std::size_t h = dataset.config.horizon;
    Tensor out(Shape{indices.size(), h, 4});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Tensor& t = dataset.samples.at(indices[i]).target;
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<long>(i * h * 4));
    }
    return out;
}

Metrics evaluate_model(const Cg3dModel& model, const Dataset& dataset,
                       const std::vector<std::size_t>& indices) {
    return compute_metrics(predict_samples(model, dataset, indices),
                           stack_targets(dataset, indices));
}

Metrics evaluate_persistence(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    Tensor targets = stack_targets(dataset, indices);
    Tensor preds = targets;  // time column copied from the target
    const std::size_t h = dataset.config.horizon;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* last = dataset.persistence_spatial.data.data() + indices[i] * 3;
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                preds.data[(i * h + r) * 4 + 1 + c] = last[c];
            }
        }
    }
    return compute_metrics(preds, targets);
}

namespace {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

} // namespace

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_mse,val_mse,val_mae\n";
    for (const EpochStats& e : history) {
        out << e.epoch << ',' << format_double(e.train_mse) << ',' << format_double(e.val_mse)
            << ',' << format_double(e.val_mae) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

CompareReport compare_models(const Dataset& dataset, const Cg3dConfig& model_config,
                             const TrainConfig& train_config, std::size_t mc_samples) {
    if (mc_samples == 0) throw ContractError("mc sample count must be at least 1");

    CompareReport report;
    report.seed = train_config.seed;
    report.mc_samples = mc_samples;
    report.trained_with_dropout = model_config.dropout_rate > 0.0;

    struct Entry {
        const char* label;
        ModelKind kind;
    };
    const Entry entries[] = {{"CG3D", ModelKind::Full},
                             {"3D CNN", ModelKind::C3dOnly},
                             {"CNN-GRU", ModelKind::CnnGruOnly}};

    Cg3dModel trained_full;
    std::vector<std::size_t> val_indices;
    for (const Entry& entry : entries) {
        Cg3dModel model = build_model(model_config, entry.kind, dataset.d_spatial(),
                                      dataset.d_temporal(), train_config.seed);
        TrainResult trained = train(model, dataset, train_config);
        if (trained.val_indices.empty()) {
            throw ConfigError("comparison needs a non-empty validation split");
        }
        Metrics metrics = evaluate_model(trained.model, dataset, trained.val_indices);
        report.rows.push_back({entry.label, metrics});
        if (entry.kind == ModelKind::Full) {
            trained_full = std::move(trained.model);
            val_indices = std::move(trained.val_indices);
        }
    }

    const std::size_t h = trained_full.config.horizon;
    const std::size_t d = trained_full.config.output_dim;
    Tensor mc_preds(Shape{val_indices.size(), h, d});
    for (std::size_t i = 0; i < val_indices.size(); ++i) {
        McPrediction mc = mc_predict(trained_full, dataset.samples[val_indices[i]].input,
                                     mc_samples,
                                     derive_seed(train_config.seed, "compare.mc", val_indices[i]));
        std::copy(mc.mean.data.begin(), mc.mean.data.end(),
                  mc_preds.data.begin() + static_cast<long>(i * h * d));
    }
    Metrics mc_metrics = compute_metrics(mc_preds, stack_targets(dataset, val_indices));
    report.rows.push_back({"CG3D+MC", mc_metrics});

    double base = report.rows[0].metrics.mae;
    report.mc_delta_percent = base > 0.0 ? 100.0 * (mc_metrics.mae - base) / base : 0.0;
    return report;
}

std::string compare_report_json(const CompareReport& report) {
    nlohmann::ordered_json doc;
    doc["schema"] = "skytrace.compare.v1";
    doc["seed"] = report.seed;
    doc["mc_samples"] = report.mc_samples;
    doc["trained_with_dropout"] = report.trained_with_dropout;
    doc["rows"] = nlohmann::ordered_json::array();
    for (const CompareRow& row : report.rows) {
        nlohmann::ordered_json r;
        r["model"] = row.label;
        r["mae"] = row.metrics.mae;
        r["rmse"] = row.metrics.rmse;
        doc["rows"].push_back(r);
    }
    doc["mc_delta_percent"] = report.mc_delta_percent;
    return doc.dump(2) + "\n";
}

} // namespace skytrace
