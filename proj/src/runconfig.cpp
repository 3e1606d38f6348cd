// SPDX-License-Identifier: Apache-2.0
#include "skytrace/runconfig.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "skytrace/error.hpp"

namespace skytrace {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || !std::isfinite(out)) {
        throw ConfigError("malformed value for " + key + ": '" + value + "'");
    }
    return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) {
        throw ConfigError("malformed value for " + key + ": '" + value + "'");
    }
    return out;
}

} // namespace

void RunConfig::validate() const {
    synth.validate();
    if (group.gap_threshold_s <= 0.0) throw ConfigError("gap threshold must be positive");
    dataset.validate();
    model.validate();
    train.validate();
    if (mc_samples == 0) throw ConfigError("mc sample count must be at least 1");
}

void apply_config_entry(RunConfig& config, const std::string& raw_key,
                        const std::string& raw_value) {
    const std::string key = trim(raw_key);
    const std::string value = trim(raw_value);

    if (key == "synth.trajectories") {
        config.synth.trajectory_count = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "synth.duration_s") {
        config.synth.duration_s = parse_real(key, value);
    } else if (key == "synth.period_s") {
        config.synth.period_s = static_cast<std::int64_t>(parse_unsigned(key, value));
    } else if (key == "synth.cruise_speed_kt") {
        config.synth.cruise_speed_kt = parse_real(key, value);
    } else if (key == "synth.cruise_altitude_ft") {
        config.synth.cruise_altitude_ft = parse_real(key, value);
    } else if (key == "synth.climb_rate_fpm") {
        config.synth.climb_rate_fpm = parse_real(key, value);
    } else if (key == "synth.gap_probability") {
        config.synth.gap_probability = parse_real(key, value);
    } else if (key == "synth.noise.position_deg") {
        config.synth.noise.position_deg = parse_real(key, value);
    } else if (key == "synth.noise.altitude_ft") {
        config.synth.noise.altitude_ft = parse_real(key, value);
    } else if (key == "synth.noise.velocity_kt") {
        config.synth.noise.velocity_kt = parse_real(key, value);
    } else if (key == "synth.noise.heading_deg") {
        config.synth.noise.heading_deg = parse_real(key, value);
    } else if (key == "synth.noise.vertical_rate_fpm") {
        config.synth.noise.vertical_rate_fpm = parse_real(key, value);
    } else if (key == "ingest.gap_threshold_s") {
        config.group.gap_threshold_s = parse_real(key, value);
    } else if (key == "preprocess.period_s") {
        config.dataset.resample_period_s = parse_real(key, value);
    } else if (key == "preprocess.variance_target") {
        config.dataset.variance_target = parse_real(key, value);
    } else if (key == "preprocess.window") {
        config.dataset.window = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "preprocess.stride") {
        config.dataset.stride = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "preprocess.horizon") {
        config.dataset.horizon = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "model.cnn") {
        config.model.cnn = decode_cnn_stages(value);
    } else if (key == "model.cnn_input_width") {
        config.model.cnn_input_width = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "model.gru_hidden") {
        config.model.gru_hidden = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "model.c3d") {
        config.model.c3d = decode_c3d_stages(value);
    } else if (key == "model.c3d_cube") {
        std::size_t first = value.find('x');
        std::size_t second = value.find('x', first + 1);
        if (first == std::string::npos || second == std::string::npos) {
            throw ConfigError("malformed value for model.c3d_cube: '" + value +
                              "', expected DxHxW");
        }
        config.model.c3d_depth =
            static_cast<std::size_t>(parse_unsigned(key, value.substr(0, first)));
        config.model.c3d_height = static_cast<std::size_t>(
            parse_unsigned(key, value.substr(first + 1, second - first - 1)));
        config.model.c3d_width =
            static_cast<std::size_t>(parse_unsigned(key, value.substr(second + 1)));
    } else if (key == "model.dropout") {
        config.model.dropout_rate = parse_real(key, value);
    } else if (key == "train.epochs") {
        config.train.epochs = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "train.batch_size") {
        config.train.batch_size = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "train.learning_rate") {
        config.train.learning_rate = parse_real(key, value);
    } else if (key == "train.validation_fraction") {
        config.train.validation_fraction = parse_real(key, value);
    } else if (key == "mc.samples") {
        config.mc_samples = static_cast<std::size_t>(parse_unsigned(key, value));
    } else if (key == "seed") {
        config.seed = parse_unsigned(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

RunConfig parse_run_config(std::istream& in) {
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not key=value: '" + t + "'");
        }
        apply_config_entry(config, t.substr(0, eq), t.substr(eq + 1));
    }
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_run_config(in);
}

} // namespace skytrace
