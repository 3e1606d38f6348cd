// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "skytrace/adsb.hpp"
#include "skytrace/error.hpp"
#include "skytrace/preprocess.hpp"
#include "skytrace/rng.hpp"

using namespace skytrace;

namespace {

AdsbRecord record_at(std::int64_t t, double lat, double lon = -84.0, double alt = 30000.0) {
    AdsbRecord r;
    r.timestamp = t;
    r.icao24 = "ada001";
    r.lat = lat;
    r.lon = lon;
    r.altitude = alt;
    r.velocity = 400.0;
    r.heading = 90.0;
    r.vertical_rate = 0.0;
    r.callsign = "TST0001";
    r.hour = t - (t % 3600);
    return r;
}

Trajectory line_trajectory(std::size_t points, std::int64_t step = 10) {
    Trajectory traj;
    traj.icao24 = "ada001";
    traj.callsign = "TST0001";
    for (std::size_t i = 0; i < points; ++i)
        traj.records.push_back(
            record_at(1600000000 + static_cast<std::int64_t>(i) * step,
                      33.0 + 0.001 * static_cast<double>(i)));
    return traj;
}

} // namespace

TEST_CASE("clean") {
    SUBCASE("already clean input is untouched") {
        Trajectory traj = line_trajectory(5);
        Trajectory out = clean(traj);
        REQUIRE(out.records.size() == 5);
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(out.records[i].timestamp == traj.records[i].timestamp);
    }
    SUBCASE("duplicate timestamps keep the first record") {
        Trajectory traj;
        traj.icao24 = "ada001";
        traj.records = {record_at(100, 1.0), record_at(100, 2.0), record_at(200, 3.0)};
        Trajectory out = clean(traj);
        REQUIRE(out.records.size() == 2);
        CHECK(out.records[0].lat == 1.0);
        CHECK(out.records[1].lat == 3.0);
    }
    SUBCASE("random duplicated stream equals a keep-first oracle") {
        Prng rng(41);
        Trajectory traj;
        traj.icao24 = "ada001";
        std::vector<std::int64_t> times;
        for (int i = 0; i < 200; ++i) {
            const std::int64_t t = 1600000000 + static_cast<std::int64_t>(rng.uniform(0.0, 80.0));
            times.push_back(t);
            traj.records.push_back(record_at(t, rng.uniform(30.0, 35.0)));
        }
        Trajectory out = clean(traj);
        // Oracle: stable-sort indices by time, keep the first per timestamp.
        std::vector<std::size_t> order(times.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
        std::vector<std::size_t> kept;
        for (std::size_t i : order)
            if (kept.empty() || times[kept.back()] != times[i]) kept.push_back(i);
        REQUIRE(out.records.size() == kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) {
            CHECK(out.records[i].timestamp == traj.records[kept[i]].timestamp);
            CHECK(out.records[i].lat == traj.records[kept[i]].lat);
        }
    }
    SUBCASE("fewer than two distinct timestamps is degenerate") {
        Trajectory traj;
        traj.records = {record_at(100, 1.0), record_at(100, 2.0)};
        CHECK_THROWS_AS(clean(traj), ContractError);
    }
}

TEST_CASE("natural cubic spline") {
    SUBCASE("reproduces its knots") {
        Prng rng(42);
        std::vector<double> t, y;
        double at = 0.0;
        for (int i = 0; i < 12; ++i) {
            at += rng.uniform(0.5, 2.0);
            t.push_back(at);
            y.push_back(rng.normal(0.0, 3.0));
        }
        CubicSpline s = CubicSpline::fit(t, y);
        for (std::size_t i = 0; i < t.size(); ++i)
            CHECK(std::abs(s.eval(t[i]) - y[i]) <= 1e-9);
    }
    SUBCASE("is exact on affine data") {
        std::vector<double> t = {0.0, 1.0, 2.5, 4.0, 7.0};
        std::vector<double> y;
        for (double v : t) y.push_back(2.0 * v + 1.0);
        CubicSpline s = CubicSpline::fit(t, y);
        for (double q : {0.25, 0.5, 1.7, 3.9, 5.5, 7.0})
            CHECK(std::abs(s.eval(q) - (2.0 * q + 1.0)) <= 1e-12);
    }
    SUBCASE("quadratic knots against the tridiagonal oracle") {
        // y = t^2 on knots {0,1,2,3}. The natural-spline system there is
        //   (2/3) M1 + (1/6) M2 = 2
        //   (1/6) M1 + (2/3) M2 = 2
        // giving M1 = M2 = 2.4 and S(0.5) = 2.4/48 + (1 - 0.4)/2 = 0.35.
        CubicSpline s = CubicSpline::fit({0, 1, 2, 3}, {0, 1, 4, 9});
        CHECK(s.second_derivatives()[0] == 0.0);
        CHECK(s.second_derivatives()[1] == doctest::Approx(2.4).epsilon(1e-12));
        CHECK(s.second_derivatives()[2] == doctest::Approx(2.4).epsilon(1e-12));
        CHECK(s.second_derivatives()[3] == 0.0);
        CHECK(s.eval(0.5) == doctest::Approx(0.35).epsilon(1e-12));
    }
    SUBCASE("refuses extrapolation") {
        CubicSpline s = CubicSpline::fit({0, 1, 2, 3}, {0, 1, 4, 9});
        CHECK_THROWS_AS(s.eval(-0.1), ContractError);
        CHECK_THROWS_AS(s.eval(3.1), ContractError);
    }
    SUBCASE("needs at least four knots") {
        CHECK_THROWS_AS(CubicSpline::fit({0, 1, 2}, {0, 1, 4}), ContractError);
        CHECK_THROWS_AS(CubicSpline::fit({0, 1, 1, 2}, {0, 1, 2, 3}), ContractError);
    }
}

TEST_CASE("spline resample") {
    SUBCASE("uniform grid with the requested period") {
        Trajectory traj = line_trajectory(20, 7);
        Trajectory out = spline_resample(traj, 10.0);
        REQUIRE(out.records.size() >= 4);
        for (std::size_t i = 1; i < out.records.size(); ++i)
            CHECK(out.records[i].timestamp - out.records[i - 1].timestamp == 10);
        CHECK(out.records.front().timestamp == traj.records.front().timestamp);
        CHECK(out.records.back().timestamp <= traj.records.back().timestamp);
    }
    SUBCASE("heading interpolates across the wrap") {
        Trajectory traj;
        traj.icao24 = "ada001";
        double heading = 350.0;
        for (int i = 0; i < 8; ++i) {
            AdsbRecord r = record_at(1600000000 + i * 10, 33.0 + 0.001 * i);
            r.heading = heading;
            traj.records.push_back(r);
            heading += 4.0;                        // sweeps 350 -> 378 (= 18)
            if (heading >= 360.0) heading -= 360.0;
        }
        Trajectory out = spline_resample(traj, 5.0);
        // Midpoints must track the short way round: near 352, 356, 0, 4...
        for (const AdsbRecord& r : out.records) {
            const bool near_wrap = r.heading >= 349.0 || r.heading <= 19.0;
            CHECK(near_wrap);
            CHECK(r.heading >= 0.0);
            CHECK(r.heading < 360.0);
        }
    }
    SUBCASE("degenerate trajectories cannot be resampled") {
        CHECK_THROWS_AS(spline_resample(line_trajectory(3), 10.0), ContractError);
    }
}

TEST_CASE("feature split") {
    Trajectory traj = line_trajectory(100);
    FeatureSplit split = split_features(traj);
    SUBCASE("shapes and timestamp passthrough") {
        CHECK(split.spatial.shape == Shape{100, 3});
        CHECK(split.temporal.shape == Shape{100, 4});
        REQUIRE(split.timestamps.size() == 100);
        CHECK(split.timestamps.front() == 1600000000.0);
    }
    SUBCASE("dt column is zero then the constant period") {
        CHECK(split.temporal.data[0] == 0.0);
        for (std::size_t i = 1; i < 100; ++i) CHECK(split.temporal.data[i * 4] == 10.0);
    }
    SUBCASE("columns reassemble the source records") {
        for (std::size_t i = 0; i < 100; ++i) {
            const AdsbRecord& r = traj.records[i];
            CHECK(split.spatial.data[i * 3 + 0] == r.lat);
            CHECK(split.spatial.data[i * 3 + 1] == r.lon);
            CHECK(split.spatial.data[i * 3 + 2] == r.altitude);
            CHECK(split.temporal.data[i * 4 + 1] == r.velocity);
            CHECK(split.temporal.data[i * 4 + 2] == r.heading);
            CHECK(split.temporal.data[i * 4 + 3] == r.vertical_rate);
        }
    }
}

TEST_CASE("pca") {
    SUBCASE("variance along the first axis only") {
        Tensor data({6, 2});
        for (std::size_t i = 0; i < 6; ++i) {
            data.data[i * 2] = static_cast<double>(i) * 2.0 - 5.0;
            data.data[i * 2 + 1] = 7.0;  // constant: std floors, coordinate vanishes
        }
        PcaModel model = pca_fit(data, 0.95);
        REQUIRE(model.output_dim() == 1);
        CHECK(std::abs(std::abs(model.components.data[0]) - 1.0) <= 1e-12);
        CHECK(std::abs(model.components.data[1]) <= 1e-12);
    }
    SUBCASE("full variance target keeps the full rank and reconstructs") {
        Prng rng(43);
        Tensor data({40, 5});
        for (double& v : data.data) v = rng.normal(0.0, 2.0);
        PcaModel model = pca_fit(data, 1.0);
        CHECK(model.output_dim() == 5);
        Tensor coords = pca_transform(model, data);
        Tensor back = pca_inverse(model, coords);
        for (std::size_t i = 0; i < data.numel(); ++i)
            CHECK(std::abs(back.data[i] - data.data[i]) <= 1e-8);
    }
    SUBCASE("explained variance never increases and components are orthonormal") {
        Prng rng(44);
        Tensor data({60, 4});
        for (std::size_t i = 0; i < 60; ++i) {
            const double a = rng.normal(0.0, 3.0);
            const double b = rng.normal(0.0, 1.0);
            data.data[i * 4 + 0] = a;
            data.data[i * 4 + 1] = a + 0.1 * b;
            data.data[i * 4 + 2] = b;
            data.data[i * 4 + 3] = rng.normal(0.0, 0.3);
        }
        PcaModel model = pca_fit(data, 1.0);
        for (std::size_t i = 1; i < model.explained_variance.size(); ++i)
            CHECK(model.explained_variance[i] <= model.explained_variance[i - 1]);
        const std::size_t k = model.output_dim();
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
                double dot = 0.0;
                for (std::size_t j = 0; j < 4; ++j)
                    dot += model.components.data[a * 4 + j] * model.components.data[b * 4 + j];
                CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-8);
            }
    }
    SUBCASE("transforming the mean row gives zero") {
        Prng rng(45);
        Tensor data({25, 3});
        for (double& v : data.data) v = rng.uniform(-4.0, 9.0);
        PcaModel model = pca_fit(data, 1.0);
        Tensor mean_row({1, 3}, {model.mean[0], model.mean[1], model.mean[2]});
        Tensor coords = pca_transform(model, mean_row);
        for (double v : coords.data) CHECK(std::abs(v) <= 1e-10);
    }
    SUBCASE("truncated projection leaves an orthogonal residual") {
        Prng rng(46);
        Tensor data({50, 3});
        for (std::size_t i = 0; i < 50; ++i) {
            const double a = rng.normal(0.0, 4.0);
            data.data[i * 3 + 0] = a + rng.normal(0.0, 0.2);
            data.data[i * 3 + 1] = -a + rng.normal(0.0, 0.2);
            data.data[i * 3 + 2] = rng.normal(0.0, 0.2);
        }
        PcaModel model = pca_fit(data, 0.6);
        const std::size_t k = model.output_dim();
        REQUIRE(k < 3);
        Tensor back = pca_inverse(model, pca_transform(model, data));
        // Residuals live in the discarded subspace: orthogonal to every kept
        // component, in standardized coordinates.
        for (std::size_t i = 0; i < 50; ++i) {
            for (std::size_t a = 0; a < k; ++a) {
                double dot = 0.0;
                for (std::size_t j = 0; j < 3; ++j) {
                    const double std_res =
                        (data.data[i * 3 + j] - back.data[i * 3 + j]) / model.scale[j];
                    dot += std_res * model.components.data[a * 3 + j];
                }
                CHECK(std::abs(dot) <= 1e-8);
            }
        }
    }
    SUBCASE("needs at least two rows") {
        Tensor data({1, 3}, {1.0, 2.0, 3.0});
        CHECK_THROWS_AS(pca_fit(data, 0.95), ContractError);
    }
}

TEST_CASE("sliding windows") {
    auto features_of = [](std::size_t n) {
        Tensor f({n, 2});
        for (std::size_t i = 0; i < n; ++i) {
            f.data[i * 2] = static_cast<double>(i);
            f.data[i * 2 + 1] = 100.0 + static_cast<double>(i);
        }
        return f;
    };
    auto targets_of = [](std::size_t n) {
        Tensor t({n, 4});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 4; ++c)
                t.data[i * 4 + c] = static_cast<double>(i * 10 + c);
        return t;
    };

    SUBCASE("pinned counts around the window-plus-horizon boundary") {
        CHECK(sliding_windows(features_of(110), targets_of(110), 100, 5, 5, "t").size() == 2);
        CHECK(sliding_windows(features_of(105), targets_of(105), 100, 5, 5, "t").size() == 1);
        CHECK(sliding_windows(features_of(104), targets_of(104), 100, 5, 5, "t").empty());
    }
    SUBCASE("starts advance by the stride") {
        auto out = sliding_windows(features_of(110), targets_of(110), 100, 5, 5, "t");
        REQUIRE(out.size() == 2);
        CHECK(out[0].start == 0);
        CHECK(out[1].start == 5);
        CHECK(out[0].trajectory_id == "t");
    }
    SUBCASE("rows are literal slices") {
        auto out = sliding_windows(features_of(105), targets_of(105), 100, 5, 5, "t");
        REQUIRE(out.size() == 1);
        const WindowSample& s = out[0];
        CHECK(s.input.shape == Shape{100, 2});
        CHECK(s.target.shape == Shape{5, 4});
        CHECK(s.input.data[0] == 0.0);
        CHECK(s.input.data[99 * 2] == 99.0);
        // Target rows are rows 100..104 of the target matrix.
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 4; ++c)
                CHECK(s.target.data[r * 4 + c] == static_cast<double>((100 + r) * 10 + c));
    }
    SUBCASE("counts match brute-force enumeration on random tuples") {
        Prng rng(47);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n = static_cast<std::size_t>(rng.uniform(0.0, 501.0));
            const std::size_t w = 1 + static_cast<std::size_t>(rng.uniform(0.0, 120.0));
            const std::size_t s = 1 + static_cast<std::size_t>(rng.uniform(0.0, 12.0));
            const std::size_t h = 1 + static_cast<std::size_t>(rng.uniform(0.0, 10.0));
            std::size_t expected = 0;
            for (std::size_t start = 0; start + w + h <= n; start += s) ++expected;
            auto out = sliding_windows(features_of(n), targets_of(n), w, s, h, "t");
            CAPTURE(n);
            CAPTURE(w);
            CAPTURE(s);
            CAPTURE(h);
            CHECK(out.size() == expected);
            for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].start == i * s);
        }
    }
    SUBCASE("row count mismatch between features and targets") {
        CHECK_THROWS_AS(sliding_windows(features_of(110), targets_of(109), 100, 5, 5, "t"),
                        ShapeError);
    }
    SUBCASE("zero window, stride, or horizon is rejected") {
        CHECK_THROWS_AS(sliding_windows(features_of(10), targets_of(10), 0, 5, 5, "t"),
                        ContractError);
        CHECK_THROWS_AS(sliding_windows(features_of(10), targets_of(10), 5, 0, 5, "t"),
                        ContractError);
        CHECK_THROWS_AS(sliding_windows(features_of(10), targets_of(10), 5, 5, 0, "t"),
                        ContractError);
    }
}

TEST_CASE("dataset assembly") {
    SynthConfig synth;
    synth.trajectory_count = 4;
    synth.duration_s = 1400.0;
    synth.seed = 48;
    std::vector<Trajectory> trajectories = synth_generate(synth);

    DatasetConfig config;
    config.resample_period_s = 10.0;
    config.window = 100;
    config.stride = 5;
    config.horizon = 5;
    Dataset dataset = build_dataset(trajectories, config);

    SUBCASE("sample geometry") {
        // 1400 s at 10 s resampling: 141 grid steps, so (141-105)/5+1 = 8
        // windows per trajectory.
        CHECK(dataset.samples.size() == 32);
        CHECK(dataset.dropped_trajectories == 0);
        for (const WindowSample& s : dataset.samples) {
            CHECK(s.input.shape == Shape{100, dataset.d_input()});
            CHECK(s.target.shape == Shape{5, 4});
        }
        CHECK(dataset.persistence_spatial.shape == Shape{32, 3});
    }
    SUBCASE("inputs are the stacked pca coordinates of each window") {
        const WindowSample& s = dataset.samples[0];
        REQUIRE(s.trajectory_id.find('#') != std::string::npos);
        Trajectory resampled = spline_resample(clean(trajectories[0]), 10.0);
        FeatureSplit split = split_features(resampled);
        Tensor spatial_coords = pca_transform(dataset.spatial_pca, split.spatial);
        Tensor temporal_coords = pca_transform(dataset.temporal_pca, split.temporal);
        const std::size_t ks = dataset.d_spatial();
        const std::size_t kt = dataset.d_temporal();
        for (std::size_t r = 0; r < 100; ++r) {
            for (std::size_t c = 0; c < ks; ++c)
                CHECK(s.input.data[r * (ks + kt) + c] ==
                      doctest::Approx(spatial_coords.data[(s.start + r) * ks + c])
                          .epsilon(1e-12));
            for (std::size_t c = 0; c < kt; ++c)
                CHECK(s.input.data[r * (ks + kt) + ks + c] ==
                      doctest::Approx(temporal_coords.data[(s.start + r) * kt + c])
                          .epsilon(1e-12));
        }
    }
    SUBCASE("targets hold standardized future positions and time offsets") {
        Trajectory resampled = spline_resample(clean(trajectories[0]), 10.0);
        FeatureSplit split = split_features(resampled);
        const WindowSample& s = dataset.samples[0];
        const double t_last = split.timestamps[s.start + 99];
        for (std::size_t r = 0; r < 5; ++r) {
            const std::size_t row = s.start + 100 + r;
            const double offset = split.timestamps[row] - t_last;
            const double std_offset =
                (offset - dataset.target_time_mean) / dataset.target_time_scale;
            CHECK(s.target.data[r * 4] == doctest::Approx(std_offset).epsilon(1e-12));
            for (std::size_t c = 0; c < 3; ++c) {
                const double raw = split.spatial.data[row * 3 + c];
                const double std_pos = (raw - dataset.spatial_pca.mean[c]) /
                                       dataset.spatial_pca.scale[c];
                CHECK(s.target.data[r * 4 + 1 + c] == doctest::Approx(std_pos).epsilon(1e-12));
            }
        }
    }
    SUBCASE("persistence rows are the standardized last input position") {
        Trajectory resampled = spline_resample(clean(trajectories[0]), 10.0);
        FeatureSplit split = split_features(resampled);
        const WindowSample& s = dataset.samples[1];
        for (std::size_t c = 0; c < 3; ++c) {
            const double raw = split.spatial.data[(s.start + 99) * 3 + c];
            const double expect =
                (raw - dataset.spatial_pca.mean[c]) / dataset.spatial_pca.scale[c];
            CHECK(dataset.persistence_spatial.data[1 * 3 + c] ==
                  doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("too-short trajectories are counted as dropped") {
        std::vector<Trajectory> with_short = trajectories;
        Trajectory tiny;
        tiny.icao24 = "eee999";
        tiny.records = {record_at(100, 33.0), record_at(110, 33.1), record_at(120, 33.2)};
        with_short.push_back(tiny);
        Dataset d2 = build_dataset(with_short, config);
        CHECK(d2.dropped_trajectories == 1);
        CHECK(d2.samples.size() == 32);
    }
    SUBCASE("save and load round trip") {
        const auto path = std::filesystem::temp_directory_path() / "skytrace_test_dataset.bin";
        dataset.save(path);
        Dataset loaded = Dataset::load(path);
        std::filesystem::remove(path);
        CHECK(loaded.config.resample_period_s == config.resample_period_s);
        CHECK(loaded.config.window == config.window);
        CHECK(loaded.target_time_mean == dataset.target_time_mean);
        CHECK(loaded.target_time_scale == dataset.target_time_scale);
        CHECK(loaded.spatial_pca.components.data == dataset.spatial_pca.components.data);
        CHECK(loaded.temporal_pca.mean == dataset.temporal_pca.mean);
        CHECK(loaded.dropped_trajectories == dataset.dropped_trajectories);
        REQUIRE(loaded.samples.size() == dataset.samples.size());
        for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
            CHECK(loaded.samples[i].input.data == dataset.samples[i].input.data);
            CHECK(loaded.samples[i].target.data == dataset.samples[i].target.data);
            CHECK(loaded.samples[i].trajectory_id == dataset.samples[i].trajectory_id);
            CHECK(loaded.samples[i].start == dataset.samples[i].start);
        }
        CHECK(loaded.persistence_spatial.data == dataset.persistence_spatial.data);
    }
}

TEST_CASE("dataset config validation") {
    DatasetConfig config;
    config.variance_target = 1.5;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config = {};
    config.resample_period_s = 0.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
}
