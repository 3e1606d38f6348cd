// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skytrace/model.hpp"
#include "skytrace/preprocess.hpp"
#include "skytrace/tensor.hpp"

namespace skytrace {

struct TrainConfig {
    std::size_t epochs = 500;
    std::size_t batch_size = 512;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Metrics {
    std::size_t n = 0;  // total element count
    double mae = 0.0;
    double rmse = 0.0;
    double mse = 0.0;
};

// MAE and RMSE over all elements; throws ContractError on empty input and
// asserts rmse >= mae on every call.
Metrics compute_metrics(const Tensor& preds, const Tensor& targets);

// Mean of squared elementwise differences, recorded on the tape.
VarId mse_loss(Tape& tape, VarId pred, VarId target);

// Adaptive-moment state; one slot per model parameter in registry order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
};

AdamState make_adam_state(const Cg3dModel& model);

// Bias-corrected adaptive-moment update. Throws TrainingError on a NaN
// gradient, naming the parameter and the given epoch/batch.
void optimizer_step(std::vector<std::pair<std::string, Tensor*>>& params,
                    const std::vector<std::vector<double>>& grads, AdamState& state,
                    const TrainConfig& config, std::size_t epoch, std::size_t batch);

struct EpochStats {
    std::size_t epoch = 0;   // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;    // NaN when the validation split is empty
    double val_mae = 0.0;
};

struct TrainResult {
    Cg3dModel model;
    std::vector<EpochStats> history;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

// Seeded split and per-epoch shuffles; minibatch MSE training in Train mode;
// the returned model is the last epoch's. The validation split may be empty
// (validation_fraction of a tiny sample count floors to zero); an empty
// training split is a configuration error.
TrainResult train(const Cg3dModel& model, const Dataset& dataset, const TrainConfig& config);

// Eval-mode predictions for the indexed samples, stacked [n x horizon x 4].
Tensor predict_samples(const Cg3dModel& model, const Dataset& dataset,
                       const std::vector<std::size_t>& indices);
Tensor stack_targets(const Dataset& dataset, const std::vector<std::size_t>& indices);
Metrics evaluate_model(const Cg3dModel& model, const Dataset& dataset,
                       const std::vector<std::size_t>& indices);

// Repeat-last-position baseline: the standardized last input step is the
// prediction for every horizon step; the time column is copied from the
// target, so only spatial error is counted.
Metrics evaluate_persistence(const Dataset& dataset, const std::vector<std::size_t>& indices);

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& path);

struct CompareRow {
    std::string label;
    Metrics metrics;
};

struct CompareReport {
    std::vector<CompareRow> rows;  // CG3D, 3D CNN, CNN-GRU, CG3D+MC
    double mc_delta_percent = 0.0; // MC mean-prediction MAE change vs CG3D, negative = lower
    bool trained_with_dropout = false;
    std::size_t mc_samples = 0;
    std::uint64_t seed = 0;
};

// Trains the full model and both single-branch baselines from the same seed
// (hence the same split) and evaluates them on the validation set, plus the
// full model under MC-dropout mean prediction.
CompareReport compare_models(const Dataset& dataset, const Cg3dConfig& model_config,
                             const TrainConfig& train_config, std::size_t mc_samples);

std::string compare_report_json(const CompareReport& report);

} // namespace skytrace
