// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "skytrace/adsb.hpp"
#include "skytrace/model.hpp"
#include "skytrace/preprocess.hpp"
#include "skytrace/train.hpp"

namespace skytrace {

// Merged configuration for every pipeline stage, loaded from a flat
// key=value file with section prefixes ('#' comments and blank lines
// allowed):
//
//   synth.trajectories=10        synth.duration_s, synth.period_s,
//   synth.cruise_speed_kt, synth.cruise_altitude_ft, synth.climb_rate_fpm,
//   synth.gap_probability, synth.noise.position_deg, synth.noise.altitude_ft,
//   synth.noise.velocity_kt, synth.noise.heading_deg,
//   synth.noise.vertical_rate_fpm
//   ingest.gap_threshold_s=900
//   preprocess.period_s=10       preprocess.variance_target,
//   preprocess.window, preprocess.stride, preprocess.horizon
//   model.cnn=8:3x3:relu,16:3x3:relu   model.cnn_input_width, model.gru_hidden,
//   model.c3d=8:3x3x3:relu,16:3x3x3:relu   model.c3d_cube=10x10x8,
//   model.dropout=0.2
//   train.epochs=500             train.batch_size, train.learning_rate,
//   train.validation_fraction
//   mc.samples=50
//   seed=0
struct RunConfig {
    SynthConfig synth;
    GroupOptions group;
    DatasetConfig dataset;
    Cg3dConfig model;
    TrainConfig train;
    std::size_t mc_samples = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

// Throws ConfigError on an unknown key or a malformed value.
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace skytrace
