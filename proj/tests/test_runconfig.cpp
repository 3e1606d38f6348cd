// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "skytrace/error.hpp"
#include "skytrace/runconfig.hpp"

using namespace skytrace;

TEST_CASE("every key reaches its field") {
    std::istringstream in(
        "# pipeline settings\n"
        "synth.trajectories=25\n"
        "synth.duration_s=1234.5\n"
        "synth.period_s=3\n"
        "synth.cruise_speed_kt=400\n"
        "synth.cruise_altitude_ft=30000\n"
        "synth.climb_rate_fpm=1500\n"
        "synth.gap_probability=0.125\n"
        "synth.noise.position_deg=0.0001\n"
        "synth.noise.altitude_ft=12\n"
        "synth.noise.velocity_kt=1.5\n"
        "synth.noise.heading_deg=0.25\n"
        "synth.noise.vertical_rate_fpm=15\n"
        "\n"
        "ingest.gap_threshold_s=600\n"
        "preprocess.period_s=5\n"
        "preprocess.variance_target=0.9\n"
        "preprocess.window=50\n"
        "preprocess.stride=10\n"
        "preprocess.horizon=3\n"
        "model.cnn=4:3x3:relu,8:2x2:tanh\n"
        "model.cnn_input_width=6\n"
        "model.gru_hidden=24\n"
        "model.c3d=4:3x3x3:relu\n"
        "model.c3d_cube=10x5x8\n"
        "model.dropout=0.35\n"
        "train.epochs=12\n"
        "train.batch_size=16\n"
        "train.learning_rate=0.0005\n"
        "train.validation_fraction=0.25\n"
        "mc.samples=80\n"
        "seed=99\n");
    RunConfig config = parse_run_config(in);

    CHECK(config.synth.trajectory_count == 25);
    CHECK(config.synth.duration_s == 1234.5);
    CHECK(config.synth.period_s == 3);
    CHECK(config.synth.cruise_speed_kt == 400.0);
    CHECK(config.synth.cruise_altitude_ft == 30000.0);
    CHECK(config.synth.climb_rate_fpm == 1500.0);
    CHECK(config.synth.gap_probability == 0.125);
    CHECK(config.synth.noise.position_deg == 0.0001);
    CHECK(config.synth.noise.altitude_ft == 12.0);
    CHECK(config.synth.noise.velocity_kt == 1.5);
    CHECK(config.synth.noise.heading_deg == 0.25);
    CHECK(config.synth.noise.vertical_rate_fpm == 15.0);
    CHECK(config.group.gap_threshold_s == 600.0);
    CHECK(config.dataset.resample_period_s == 5.0);
    CHECK(config.dataset.variance_target == 0.9);
    CHECK(config.dataset.window == 50);
    CHECK(config.dataset.stride == 10);
    CHECK(config.dataset.horizon == 3);
    REQUIRE(config.model.cnn.size() == 2);
    CHECK(config.model.cnn[1].out_channels == 8);
    CHECK(config.model.cnn[1].activation == Activation::Tanh);
    CHECK(config.model.cnn_input_width == 6);
    CHECK(config.model.gru_hidden == 24);
    REQUIRE(config.model.c3d.size() == 1);
    CHECK(config.model.c3d[0].out_channels == 4);
    CHECK(config.model.c3d_depth == 10);
    CHECK(config.model.c3d_height == 5);
    CHECK(config.model.c3d_width == 8);
    CHECK(config.model.dropout_rate == 0.35);
    CHECK(config.train.epochs == 12);
    CHECK(config.train.batch_size == 16);
    CHECK(config.train.learning_rate == 0.0005);
    CHECK(config.train.validation_fraction == 0.25);
    CHECK(config.mc_samples == 80);
    CHECK(config.seed == 99);
}

TEST_CASE("defaults survive an empty stream") {
    std::istringstream in("\n# nothing but comments\n\n");
    RunConfig config = parse_run_config(in);
    CHECK(config.synth.trajectory_count == 10);
    CHECK(config.dataset.window == 100);
    CHECK(config.dataset.resample_period_s == 10.0);
    CHECK(config.model.gru_hidden == 64);
    CHECK(config.train.epochs == 500);
    CHECK(config.mc_samples == 50);
    CHECK(config.seed == 0);
}

TEST_CASE("validation covers the nested sections") {
    std::istringstream in("");
    RunConfig config = parse_run_config(in);
    CHECK_NOTHROW(config.validate());

    SUBCASE("gap threshold must be positive") {
        config.group.gap_threshold_s = 0.0;
        CHECK_THROWS_AS(config.validate(), ConfigError);
    }
    SUBCASE("variance target must stay within (0, 1]") {
        config.dataset.variance_target = 1.5;
        CHECK_THROWS_AS(config.validate(), ConfigError);
    }
    SUBCASE("mc samples must be positive") {
        config.mc_samples = 0;
        CHECK_THROWS_AS(config.validate(), ConfigError);
    }
    SUBCASE("dropout rate must stay below 1") {
        config.model.dropout_rate = 1.0;
        CHECK_THROWS_AS(config.validate(), ConfigError);
    }
}

TEST_CASE("rejects bad input") {
    RunConfig config;
    SUBCASE("unknown key") {
        CHECK_THROWS_WITH_AS(apply_config_entry(config, "synth.speed", "1"),
                             doctest::Contains("unknown config key"), ConfigError);
    }
    SUBCASE("non-numeric value") {
        CHECK_THROWS_AS(apply_config_entry(config, "train.epochs", "fast"), ConfigError);
    }
    SUBCASE("negative count") {
        CHECK_THROWS_AS(apply_config_entry(config, "synth.trajectories", "-3"), ConfigError);
    }
    SUBCASE("malformed line") {
        std::istringstream in("train.epochs\n");
        CHECK_THROWS_WITH_AS(parse_run_config(in), doctest::Contains("not key=value"),
                             ConfigError);
    }
    SUBCASE("bad stage list") {
        CHECK_THROWS_AS(apply_config_entry(config, "model.cnn", "8:3x3:warp"), ConfigError);
    }
    SUBCASE("bad cube") {
        CHECK_THROWS_AS(apply_config_entry(config, "model.c3d_cube", "10x10"), ConfigError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_run_config("/nonexistent/skytrace.conf"), IoError);
    }
}

TEST_CASE("file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "skytrace_test_run.conf";
    {
        std::ofstream out(path);
        out << "seed=7\ntrain.epochs=2\n";
    }
    RunConfig config = load_run_config(path);
    CHECK(config.seed == 7);
    CHECK(config.train.epochs == 2);
    std::filesystem::remove(path);
}
