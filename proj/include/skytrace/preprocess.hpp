// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "skytrace/adsb.hpp"
#include "skytrace/tensor.hpp"

namespace skytrace {

// Collapses duplicate timestamps (first record kept) and orders records in
// time. Throws ContractError when fewer than 2 distinct timestamps remain.
Trajectory clean(const Trajectory& traj);

// Natural cubic spline (zero second derivative at both ends) through
// strictly increasing knots. Requires at least 4 knots.
class CubicSpline {
  public:
    static CubicSpline fit(const std::vector<double>& t, const std::vector<double>& y);
    // Throws ContractError outside [t_front, t_back]: no extrapolation.
    double eval(double t) const;
    const std::vector<double>& second_derivatives() const { return m_; }

  private:
    std::vector<double> t_;
    std::vector<double> y_;
    std::vector<double> m_;
};

// Resamples every continuous feature onto the uniform grid t0, t0+period,
// ... <= t_end. Heading is splined on the unwrapped angle and re-wrapped;
// velocity is clamped at 0, lat/lon to their valid ranges.
Trajectory spline_resample(const Trajectory& traj, double period_s);

struct FeatureSplit {
    Tensor spatial;                  // [steps x 3]: lat, lon, altitude
    Tensor temporal;                 // [steps x 4]: dt, velocity, heading, vertical_rate
    std::vector<double> timestamps;  // [steps]
};

FeatureSplit split_features(const Trajectory& traj);

struct PcaModel {
    std::vector<double> mean;                // [d]
    std::vector<double> scale;               // [d], all > 0
    Tensor components;                       // [k x d], orthonormal rows
    std::vector<double> explained_variance;  // [k], non-increasing

    std::size_t input_dim() const { return mean.size(); }
    std::size_t output_dim() const { return components.shape.empty() ? 0 : components.shape[0]; }
};

// Standardizes (mean, std with a 1e-9 floor), eigendecomposes the sample
// covariance, and keeps the smallest k whose cumulative explained-variance
// ratio reaches variance_target.
PcaModel pca_fit(const Tensor& data, double variance_target);
Tensor pca_transform(const PcaModel& model, const Tensor& data);    // [N x k]
Tensor pca_inverse(const PcaModel& model, const Tensor& coords);    // [N x d]

struct WindowSample {
    Tensor input;               // [window x d_in]
    Tensor target;              // [horizon x 4]: time, lat, lon, altitude
    std::string trajectory_id;
    std::size_t start = 0;
};

// Cuts consecutive row slices: inputs [start, start+window), targets
// [start+window, start+window+horizon), start advancing by stride. Inputs
// shorter than window+horizon yield an empty list.
std::vector<WindowSample> sliding_windows(const Tensor& features, const Tensor& targets,
                                          std::size_t window, std::size_t stride,
                                          std::size_t horizon,
                                          const std::string& trajectory_id);

struct DatasetConfig {
    double resample_period_s = 10.0;
    double variance_target = 0.95;
    std::size_t window = 100;
    std::size_t stride = 5;
    std::size_t horizon = 5;

    void validate() const;
};

// Windowed training set. Sample inputs hold the per-block PCA coordinates
// side by side (spatial columns first). Target rows hold the standardized
// time offset from the last input step and the standardized lat/lon/altitude
// (the spatial PCA's mean/scale). persistence_spatial keeps the standardized
// last-input-step position per sample for the repeat-last baseline.
struct Dataset {
    DatasetConfig config;
    PcaModel spatial_pca;
    PcaModel temporal_pca;
    double target_time_mean = 0.0;
    double target_time_scale = 1.0;
    std::vector<WindowSample> samples;
    Tensor persistence_spatial;      // [n x 3]
    std::size_t dropped_trajectories = 0;

    std::size_t d_spatial() const { return spatial_pca.output_dim(); }
    std::size_t d_temporal() const { return temporal_pca.output_dim(); }
    std::size_t d_input() const { return d_spatial() + d_temporal(); }

    void save(const std::filesystem::path& path) const;
    static Dataset load(const std::filesystem::path& path);
};

Dataset build_dataset(const std::vector<Trajectory>& trajectories, const DatasetConfig& config);

} // namespace skytrace
