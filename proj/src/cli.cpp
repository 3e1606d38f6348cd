// SPDX-License-Identifier: Apache-2.0
#include "skytrace/cli.hpp"

#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "skytrace/adsb.hpp"
#include "skytrace/error.hpp"
#include "skytrace/mc.hpp"
#include "skytrace/model.hpp"
#include "skytrace/preprocess.hpp"
#include "skytrace/runconfig.hpp"
#include "skytrace/train.hpp"

namespace skytrace {

namespace {

struct CliOptions {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string in_path;
    std::string in_path2;
    std::string out_path;
    std::string history_path;
    std::string rejects_path;
    std::string model_kind = "cg3d";
    std::size_t epochs = 0;
    bool epochs_set = false;
    std::size_t batch_size = 0;
    bool batch_size_set = false;
    std::size_t mc_samples = 0;
    bool mc_samples_set = false;
    double dropout = 0.0;
    bool dropout_set = false;
    std::size_t sample_index = 0;
};

RunConfig assemble_config(const CliOptions& opt) {
    RunConfig config;
    if (!opt.config_path.empty()) config = load_run_config(opt.config_path);
    if (opt.seed_set) config.seed = opt.seed;
    if (opt.epochs_set) config.train.epochs = opt.epochs;
    if (opt.batch_size_set) config.train.batch_size = opt.batch_size;
    if (opt.mc_samples_set) config.mc_samples = opt.mc_samples;
    if (opt.dropout_set) config.model.dropout_rate = opt.dropout;
    config.synth.seed = config.seed;
    config.train.seed = config.seed;
    config.validate();
    return config;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot write " + path.string());
    file << content;
    if (!file) throw IoError("write failed for " + path.string());
}

int cmd_synth(const CliOptions& opt, std::ostream& out) {
    RunConfig config = assemble_config(opt);
    std::vector<Trajectory> trajectories = synth_generate(config.synth);
    std::vector<AdsbRecord> records = flatten(trajectories);
    write_csv(records, std::filesystem::path(opt.out_path));
    out << "wrote " << records.size() << " records across " << trajectories.size()
        << " trajectories to " << opt.out_path << "\n";
    return 0;
}

int cmd_ingest(const CliOptions& opt, std::ostream& out) {
    RunConfig config = assemble_config(opt);
    ParseResult parsed = parse_csv(std::filesystem::path(opt.in_path));
    GroupResult grouped = group_into_trajectories(parsed.records, config.group);

    std::string rejects_path =
        opt.rejects_path.empty() ? opt.out_path + ".rejects.tsv" : opt.rejects_path;
    std::ofstream rejects(rejects_path, std::ios::binary);
    if (!rejects) throw IoError("cannot write " + rejects_path);
    write_reject_report(parsed.rejected, rejects);

    // Parse statistics print even when grouping leaves nothing usable, so a
    // failed run still shows how far the input got.
    out << "ingested " << parsed.records.size() << " records into "
        << grouped.trajectories.size() << " trajectories (" << parsed.rejected.size()
        << " rejected lines, " << grouped.discarded_short << " short segments discarded)\n";
    if (grouped.trajectories.empty()) {
        throw ContractError("no trajectories ingested from " + opt.in_path);
    }
    save_trajectories(grouped.trajectories, std::filesystem::path(opt.out_path));
    return 0;
}

int cmd_preprocess(const CliOptions& opt, std::ostream& out) {
    RunConfig config = assemble_config(opt);
    std::vector<Trajectory> trajectories =
        load_trajectories(std::filesystem::path(opt.in_path));
    Dataset dataset = build_dataset(trajectories, config.dataset);
    dataset.save(std::filesystem::path(opt.out_path));
    out << dataset.samples.size() << " samples\n";
    out << "spatial components " << dataset.d_spatial() << ", temporal components "
        << dataset.d_temporal() << ", dropped trajectories " << dataset.dropped_trajectories
        << "\n";
    return 0;
}

// The model's window geometry always follows the dataset being trained on.
void sync_model_to_dataset(Cg3dConfig& model_config, const Dataset& dataset) {
    model_config.window = dataset.config.window;
    model_config.horizon = dataset.config.horizon;
}

int cmd_train(const CliOptions& opt, std::ostream& out) {
    RunConfig config = assemble_config(opt);
    Dataset dataset = Dataset::load(std::filesystem::path(opt.in_path));
    sync_model_to_dataset(config.model, dataset);
    ModelKind kind = model_kind_from_name(opt.model_kind);
    Cg3dModel model =
        build_model(config.model, kind, dataset.d_spatial(), dataset.d_temporal(), config.seed);
    TrainResult result = train(model, dataset, config.train);

    save_model(result.model, std::filesystem::path(opt.out_path));
    std::string history_path =
        opt.history_path.empty() ? opt.out_path + ".history.csv" : opt.history_path;
    write_history_csv(result.history, history_path);

    const EpochStats& last = result.history.back();
    out << "trained " << model_kind_name(kind) << " for " << result.history.size()
        << " epochs: train_mse " << last.train_mse << " val_mse " << last.val_mse
        << " val_mae " << last.val_mae << "\n";
    out << "checkpoint " << opt.out_path << ", history " << history_path << "\n";
    return 0;
}

nlohmann::ordered_json metrics_json(const Metrics& metrics) {
    nlohmann::ordered_json doc;
    doc["n"] = metrics.n;
    doc["mae"] = metrics.mae;
    doc["rmse"] = metrics.rmse;
    doc["mse"] = metrics.mse;
    return doc;
}

int cmd_evaluate(const CliOptions& opt, std::ostream& out) {
    assemble_config(opt);
    Cg3dModel model = load_model(std::filesystem::path(opt.in_path));
    Dataset dataset = Dataset::load(std::filesystem::path(opt.in_path2));

    std::vector<std::size_t> indices(dataset.samples.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    Metrics model_metrics = evaluate_model(model, dataset, indices);
    Metrics persistence = evaluate_persistence(dataset, indices);

    nlohmann::ordered_json doc;
    doc["schema"] = "skytrace.metrics.v1";
    doc["model"] = model_kind_name(model.kind);
    doc["metrics"] = metrics_json(model_metrics);
    doc["persistence"] = metrics_json(persistence);
    if (!opt.out_path.empty()) write_text_file(opt.out_path, doc.dump(2) + "\n");

    out << "model mae " << model_metrics.mae << " rmse " << model_metrics.rmse
        << " over " << dataset.samples.size() << " samples\n";
    out << "persistence mae " << persistence.mae << " rmse " << persistence.rmse << "\n";
    return 0;
}

int cmd_compare(const CliOptions& opt, std::ostream& out) {
    RunConfig config = assemble_config(opt);
    Dataset dataset = Dataset::load(std::filesystem::path(opt.in_path));
    sync_model_to_dataset(config.model, dataset);
    CompareReport report = compare_models(dataset, config.model, config.train, config.mc_samples);

    std::string json = compare_report_json(report);
    if (!opt.out_path.empty()) write_text_file(opt.out_path, json);
    for (const CompareRow& row : report.rows) {
        out << row.label << "\tmae " << row.metrics.mae << "\trmse " << row.metrics.rmse << "\n";
    }
    out << "mc_delta_percent " << report.mc_delta_percent << "\n";
    return 0;
}

int cmd_mc_predict(const CliOptions& opt, std::ostream& out) {
    RunConfig config = assemble_config(opt);
    Cg3dModel model = load_model(std::filesystem::path(opt.in_path));
    Dataset dataset = Dataset::load(std::filesystem::path(opt.in_path2));
    if (opt.sample_index >= dataset.samples.size()) {
        throw ContractError("sample index " + std::to_string(opt.sample_index) +
                            " out of range, dataset has " +
                            std::to_string(dataset.samples.size()) + " samples");
    }
    McPrediction mc = mc_predict(model, dataset.samples[opt.sample_index].input,
                                 config.mc_samples, config.seed);

    const std::size_t h = mc.mean.shape[0];
    const std::size_t d = mc.mean.shape[1];
    nlohmann::ordered_json doc;
    doc["schema"] = "skytrace.mc.v1";
    doc["sample_index"] = opt.sample_index;
    doc["mc_samples"] = mc.samples;
    doc["seed"] = mc.seed;
    auto matrix = [&](const Tensor& t) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < h; ++r) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (std::size_t c = 0; c < d; ++c) row.push_back(t.data[r * d + c]);
            rows.push_back(row);
        }
        return rows;
    };
    doc["mean"] = matrix(mc.mean);
    doc["std"] = matrix(mc.std);
    std::string json = doc.dump(2) + "\n";
    if (!opt.out_path.empty()) write_text_file(opt.out_path, json);
    out << json;
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"4D flight-trajectory forecasting toolkit"};
    app.require_subcommand(1);
    CliOptions opt;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opt.config_path, "key=value config file");
        cmd->add_option("--seed", opt.seed, "root seed for all randomness")
            ->each([&](const std::string&) { opt.seed_set = true; });
    };

    CLI::App* synth = app.add_subcommand("synth", "generate synthetic trajectories as CSV");
    add_common(synth);
    synth->add_option("--out", opt.out_path, "output CSV path")->required();

    CLI::App* ingest = app.add_subcommand("ingest", "parse and group a state-vector CSV");
    add_common(ingest);
    ingest->add_option("input", opt.in_path, "input CSV path")->required();
    ingest->add_option("--out", opt.out_path, "output trajectory store path")->required();
    ingest->add_option("--rejects", opt.rejects_path,
                       "rejected-line report path (default: <out>.rejects.tsv)");

    CLI::App* preprocess =
        app.add_subcommand("preprocess", "resample, reduce, and window a trajectory store");
    add_common(preprocess);
    preprocess->add_option("input", opt.in_path, "trajectory store path")->required();
    preprocess->add_option("--out", opt.out_path, "output dataset path")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset");
    add_common(train_cmd);
    train_cmd->add_option("input", opt.in_path, "dataset path")->required();
    train_cmd->add_option("--out", opt.out_path, "output checkpoint path")->required();
    train_cmd->add_option("--history", opt.history_path,
                          "history CSV path (default: <out>.history.csv)");
    train_cmd->add_option("--model-kind", opt.model_kind, "cg3d, cnn-gru, or c3d");
    train_cmd->add_option("--epochs", opt.epochs, "override train.epochs")
        ->each([&](const std::string&) { opt.epochs_set = true; });
    train_cmd->add_option("--batch-size", opt.batch_size, "override train.batch_size")
        ->each([&](const std::string&) { opt.batch_size_set = true; });
    train_cmd->add_option("--dropout", opt.dropout, "override model.dropout")
        ->each([&](const std::string&) { opt.dropout_set = true; });

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
    add_common(evaluate);
    evaluate->add_option("checkpoint", opt.in_path, "checkpoint path")->required();
    evaluate->add_option("dataset", opt.in_path2, "dataset path")->required();
    evaluate->add_option("--out", opt.out_path, "metrics JSON path");

    CLI::App* compare = app.add_subcommand("compare", "train and compare all model variants");
    add_common(compare);
    compare->add_option("input", opt.in_path, "dataset path")->required();
    compare->add_option("--out", opt.out_path, "report JSON path");
    compare->add_option("--epochs", opt.epochs, "override train.epochs")
        ->each([&](const std::string&) { opt.epochs_set = true; });
    compare->add_option("--batch-size", opt.batch_size, "override train.batch_size")
        ->each([&](const std::string&) { opt.batch_size_set = true; });
    compare->add_option("--dropout", opt.dropout, "override model.dropout")
        ->each([&](const std::string&) { opt.dropout_set = true; });
    compare->add_option("--mc-samples", opt.mc_samples, "override mc.samples")
        ->each([&](const std::string&) { opt.mc_samples_set = true; });

    CLI::App* mc = app.add_subcommand("mc-predict", "MC-dropout prediction for one sample");
    add_common(mc);
    mc->add_option("checkpoint", opt.in_path, "checkpoint path")->required();
    mc->add_option("dataset", opt.in_path2, "dataset path")->required();
    mc->add_option("--index", opt.sample_index, "sample index");
    mc->add_option("--mc-samples", opt.mc_samples, "override mc.samples")
        ->each([&](const std::string&) { opt.mc_samples_set = true; });
    mc->add_option("--out", opt.out_path, "prediction JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (app.got_subcommand(synth)) return cmd_synth(opt, out);
        if (app.got_subcommand(ingest)) return cmd_ingest(opt, out);
        if (app.got_subcommand(preprocess)) return cmd_preprocess(opt, out);
        if (app.got_subcommand(train_cmd)) return cmd_train(opt, out);
        if (app.got_subcommand(evaluate)) return cmd_evaluate(opt, out);
        if (app.got_subcommand(compare)) return cmd_compare(opt, out);
        if (app.got_subcommand(mc)) return cmd_mc_predict(opt, out);
    } catch (const Error& e) {
        err << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return 1;
    }
    err << "error: config: no command selected\n";
    return 1;
}

} // namespace skytrace
