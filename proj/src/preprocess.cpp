// SPDX-License-Identifier: Apache-2.0
#include "skytrace/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "skytrace/container.hpp"
#include "skytrace/error.hpp"

namespace skytrace {

namespace {

constexpr double kScaleFloor = 1e-9;

std::int64_t hour_of(std::int64_t t) {
    std::int64_t h = t / 3600;
    if (t % 3600 != 0 && t < 0) --h;
    return h * 3600;
}

double wrap_degrees(double h) {
    double w = h - 360.0 * std::floor(h / 360.0);
    if (w >= 360.0) w = 0.0;
    return w;
}

// Cumulative heading: consecutive differences mapped into (-180, 180].
std::vector<double> unwrap_degrees(const std::vector<double>& h) {
    std::vector<double> u(h.size());
    if (h.empty()) return u;
    u[0] = h[0];
    for (std::size_t i = 1; i < h.size(); ++i) {
        double d = h[i] - h[i - 1];
        d -= 360.0 * std::floor((d + 180.0) / 360.0);
        u[i] = u[i - 1] + d;
    }
    return u;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Columns of
// vectors are the eigenvectors; deterministic rotation order.
void jacobi_eigen(std::vector<double> a, std::size_t d, std::vector<double>& values,
                  std::vector<double>& vectors) {
    vectors.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) vectors[i * d + i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-30) break;

        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    double akp = a[k * d + p];
                    double akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    double apk = a[p * d + k];
                    double aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    double vkp = vectors[k * d + p];
                    double vkq = vectors[k * d + q];
                    vectors[k * d + p] = c * vkp - s * vkq;
                    vectors[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    values.resize(d);
    for (std::size_t i = 0; i < d; ++i) values[i] = a[i * d + i];
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.shape.size() != 2) {
        throw ShapeError(std::string(what) + " must be a matrix, got " +
                         shape_to_string(t.shape));
    }
}

} // namespace

Trajectory clean(const Trajectory& traj) {
    if (traj.records.size() < 2) {
        throw ContractError("degenerate trajectory: fewer than 2 records");
    }
    Trajectory out;
    out.icao24 = traj.icao24;
    out.callsign = traj.callsign;
    out.records = traj.records;
    std::stable_sort(out.records.begin(), out.records.end(),
                     [](const AdsbRecord& a, const AdsbRecord& b) {
                         return a.timestamp < b.timestamp;
                     });
    auto last = std::unique(out.records.begin(), out.records.end(),
                            [](const AdsbRecord& a, const AdsbRecord& b) {
                                return a.timestamp == b.timestamp;
                            });
    out.records.erase(last, out.records.end());
    if (out.records.size() < 2) {
        throw ContractError("degenerate trajectory: fewer than 2 distinct timestamps");
    }
    return out;
}

CubicSpline CubicSpline::fit(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size()) {
        throw ContractError("cubic spline: knot and value counts differ: " +
                            std::to_string(t.size()) + " vs " + std::to_string(y.size()));
    }
    const std::size_t n = t.size();
    if (n < 4) {
        throw ContractError("cubic spline needs at least 4 knots, got " + std::to_string(n));
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(t[i] > t[i - 1])) {
            throw ContractError("cubic spline knots must be strictly increasing");
        }
    }

    CubicSpline spline;
    spline.t_ = t;
    spline.y_ = y;
    spline.m_.assign(n, 0.0);

    // Tridiagonal system for the interior second derivatives; the natural
    // boundary pins m_0 = m_{n-1} = 0.
    const std::size_t k = n - 2;
    std::vector<double> diag(k), super(k), rhs(k);
    for (std::size_t i = 1; i <= k; ++i) {
        double h0 = t[i] - t[i - 1];
        double h1 = t[i + 1] - t[i];
        diag[i - 1] = (h0 + h1) / 3.0;
        super[i - 1] = h1 / 6.0;
        rhs[i - 1] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    for (std::size_t i = 1; i < k; ++i) {
        double sub = (t[i + 1] - t[i]) / 6.0;
        double w = sub / diag[i - 1];
        diag[i] -= w * super[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (k > 0) {
        spline.m_[k] = rhs[k - 1] / diag[k - 1];
        for (std::size_t i = k - 1; i >= 1; --i) {
            spline.m_[i] = (rhs[i - 1] - super[i - 1] * spline.m_[i + 1]) / diag[i - 1];
        }
    }
    return spline;
}

double CubicSpline::eval(double t) const {
    constexpr double kEdgeEps = 1e-9;
    if (t < t_.front() - kEdgeEps || t > t_.back() + kEdgeEps) {
        throw ContractError("spline query outside knot range");
    }
    t = std::clamp(t, t_.front(), t_.back());
    std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(t_.begin() + 1, t_.end() - 1, t) - t_.begin());
    std::size_t lo = hi - 1;
    double h = t_[hi] - t_[lo];
    double a = t_[hi] - t;
    double b = t - t_[lo];
    return m_[lo] * a * a * a / (6.0 * h) + m_[hi] * b * b * b / (6.0 * h) +
           (y_[lo] / h - m_[lo] * h / 6.0) * a + (y_[hi] / h - m_[hi] * h / 6.0) * b;
}

Trajectory spline_resample(const Trajectory& traj, double period_s) {
    if (period_s <= 0.0) throw ContractError("resample period must be positive");
    const std::size_t n = traj.records.size();
    if (n < 4) {
        throw ContractError("degenerate trajectory: spline resampling needs at least 4 knots, got " +
                            std::to_string(n));
    }
    std::vector<double> t(n), lat(n), lon(n), alt(n), vel(n), heading(n), vrate(n);
    for (std::size_t i = 0; i < n; ++i) {
        const AdsbRecord& r = traj.records[i];
        t[i] = static_cast<double>(r.timestamp);
        lat[i] = r.lat;
        lon[i] = r.lon;
        alt[i] = r.altitude;
        vel[i] = r.velocity;
        heading[i] = r.heading;
        vrate[i] = r.vertical_rate;
    }
    CubicSpline s_lat = CubicSpline::fit(t, lat);
    CubicSpline s_lon = CubicSpline::fit(t, lon);
    CubicSpline s_alt = CubicSpline::fit(t, alt);
    CubicSpline s_vel = CubicSpline::fit(t, vel);
    CubicSpline s_head = CubicSpline::fit(t, unwrap_degrees(heading));
    CubicSpline s_vrate = CubicSpline::fit(t, vrate);

    Trajectory out;
    out.icao24 = traj.icao24;
    out.callsign = traj.callsign;
    const std::size_t steps =
        static_cast<std::size_t>(std::floor((t.back() - t.front()) / period_s)) + 1;
    out.records.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        double tk = t.front() + static_cast<double>(k) * period_s;
        AdsbRecord rec;
        rec.timestamp = static_cast<std::int64_t>(std::llround(tk));
        rec.icao24 = traj.icao24;
        rec.callsign = traj.callsign;
        rec.lat = std::clamp(s_lat.eval(tk), -90.0, 90.0);
        rec.lon = std::clamp(s_lon.eval(tk), -180.0, 180.0);
        rec.altitude = s_alt.eval(tk);
        rec.velocity = std::max(0.0, s_vel.eval(tk));
        rec.heading = wrap_degrees(s_head.eval(tk));
        rec.vertical_rate = s_vrate.eval(tk);
        rec.hour = hour_of(rec.timestamp);
        out.records.push_back(std::move(rec));
    }
    return out;
}

FeatureSplit split_features(const Trajectory& traj) {
    const std::size_t steps = traj.records.size();
    FeatureSplit split{Tensor(Shape{steps, 3}), Tensor(Shape{steps, 4}), {}};
    split.timestamps.resize(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const AdsbRecord& r = traj.records[i];
        split.timestamps[i] = static_cast<double>(r.timestamp);
        split.spatial.data[i * 3 + 0] = r.lat;
        split.spatial.data[i * 3 + 1] = r.lon;
        split.spatial.data[i * 3 + 2] = r.altitude;
        double dt = i == 0 ? 0.0
                           : static_cast<double>(r.timestamp - traj.records[i - 1].timestamp);
        split.temporal.data[i * 4 + 0] = dt;
        split.temporal.data[i * 4 + 1] = r.velocity;
        split.temporal.data[i * 4 + 2] = r.heading;
        split.temporal.data[i * 4 + 3] = r.vertical_rate;
    }
    return split;
}

PcaModel pca_fit(const Tensor& data, double variance_target) {
    require_matrix(data, "pca_fit input");
    if (variance_target <= 0.0 || variance_target > 1.0) {
        throw ContractError("pca_fit: variance target must lie in (0,1]");
    }
    const std::size_t n = data.shape[0];
    const std::size_t d = data.shape[1];
    if (n < 2) {
        throw ContractError("pca_fit: need at least 2 rows, got " + std::to_string(n));
    }

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) model.mean[c] += data.data[r * d + c];
    for (std::size_t c = 0; c < d; ++c) model.mean[c] /= static_cast<double>(n);

    model.scale.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            double v = data.data[r * d + c] - model.mean[c];
            model.scale[c] += v * v;
        }
    }
    for (std::size_t c = 0; c < d; ++c) {
        model.scale[c] = std::max(std::sqrt(model.scale[c] / static_cast<double>(n - 1)),
                                  kScaleFloor);
    }

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            double xi = (data.data[r * d + i] - model.mean[i]) / model.scale[i];
            for (std::size_t j = i; j < d; ++j) {
                double xj = (data.data[r * d + j] - model.mean[j]) / model.scale[j];
                cov[i * d + j] += xi * xj;
            }
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov[i * d + j] /= static_cast<double>(n - 1);
            cov[j * d + i] = cov[i * d + j];
        }

    std::vector<double> values, vectors;
    jacobi_eigen(cov, d, values, vectors);

    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] > values[b];
    });

    std::vector<double> sorted(d);
    for (std::size_t i = 0; i < d; ++i) sorted[i] = std::max(values[order[i]], 0.0);
    double lambda_max = sorted.empty() ? 0.0 : sorted[0];
    for (double& v : sorted) {
        if (v <= lambda_max * 1e-12) v = 0.0;
    }
    double total = 0.0;
    for (double v : sorted) total += v;

    std::size_t k = 1;
    if (total > 0.0) {
        double cum = 0.0;
        for (k = 1; k <= d; ++k) {
            cum += sorted[k - 1];
            if (cum / total >= variance_target) break;
        }
        k = std::min(k, d);
    }

    model.components = Tensor(Shape{k, d});
    model.explained_variance.assign(sorted.begin(), sorted.begin() + static_cast<long>(k));
    for (std::size_t row = 0; row < k; ++row) {
        std::size_t col = order[row];
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < d; ++i) {
            double mag = std::abs(vectors[i * d + col]);
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        double sign = vectors[arg * d + col] < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            model.components.data[row * d + i] = sign * vectors[i * d + col];
        }
    }
    return model;
}

Tensor pca_transform(const PcaModel& model, const Tensor& data) {
    require_matrix(data, "pca_transform input");
    const std::size_t d = model.input_dim();
    const std::size_t k = model.output_dim();
    if (data.shape[1] != d) {
        throw ShapeError("pca_transform: expected " + std::to_string(d) + " columns, got " +
                         shape_to_string(data.shape));
    }
    const std::size_t n = data.shape[0];
    Tensor out(Shape{n, k});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t row = 0; row < k; ++row) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                double z = (data.data[r * d + c] - model.mean[c]) / model.scale[c];
                acc += model.components.data[row * d + c] * z;
            }
            out.data[r * k + row] = acc;
        }
    }
    return out;
}

Tensor pca_inverse(const PcaModel& model, const Tensor& coords) {
    require_matrix(coords, "pca_inverse input");
    const std::size_t d = model.input_dim();
    const std::size_t k = model.output_dim();
    if (coords.shape[1] != k) {
        throw ShapeError("pca_inverse: expected " + std::to_string(k) + " columns, got " +
                         shape_to_string(coords.shape));
    }
    const std::size_t n = coords.shape[0];
    Tensor out(Shape{n, d});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            double acc = 0.0;
            for (std::size_t row = 0; row < k; ++row) {
                acc += model.components.data[row * d + c] * coords.data[r * k + row];
            }
            out.data[r * d + c] = acc * model.scale[c] + model.mean[c];
        }
    }
    return out;
}

std::vector<WindowSample> sliding_windows(const Tensor& features, const Tensor& targets,
                                          std::size_t window, std::size_t stride,
                                          std::size_t horizon,
                                          const std::string& trajectory_id) {
    require_matrix(features, "sliding_windows features");
    require_matrix(targets, "sliding_windows targets");
    if (features.shape[0] != targets.shape[0]) {
        throw ShapeError("sliding_windows: feature rows " + shape_to_string(features.shape) +
                         " and target rows " + shape_to_string(targets.shape) + " differ");
    }
    if (window == 0 || stride == 0 || horizon == 0) {
        throw ContractError("sliding_windows: window, stride, and horizon must be positive");
    }
    const std::size_t n = features.shape[0];
    const std::size_t d_in = features.shape[1];
    const std::size_t d_tgt = targets.shape[1];
    std::vector<WindowSample> samples;
    if (n < window + horizon) return samples;
    for (std::size_t start = 0; start + window + horizon <= n; start += stride) {
        WindowSample s;
        s.trajectory_id = trajectory_id;
        s.start = start;
        s.input = Tensor(Shape{window, d_in});
        std::copy_n(features.data.begin() + static_cast<long>(start * d_in), window * d_in,
                    s.input.data.begin());
        s.target = Tensor(Shape{horizon, d_tgt});
        std::copy_n(targets.data.begin() + static_cast<long>((start + window) * d_tgt),
                    horizon * d_tgt, s.target.data.begin());
        samples.push_back(std::move(s));
    }
    return samples;
}

void DatasetConfig::validate() const {
    if (resample_period_s <= 0.0) throw ConfigError("resample period must be positive");
    if (variance_target <= 0.0 || variance_target > 1.0) {
        throw ConfigError("variance target must lie in (0,1]");
    }
    if (window == 0 || stride == 0 || horizon == 0) {
        throw ConfigError("window, stride, and horizon must be positive");
    }
}

Dataset build_dataset(const std::vector<Trajectory>& trajectories, const DatasetConfig& config) {
    config.validate();
    Dataset dataset;
    dataset.config = config;

    struct Prepared {
        std::string id;
        FeatureSplit split;
    };
    std::vector<Prepared> prepared;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        try {
            Trajectory resampled =
                spline_resample(clean(trajectories[i]), config.resample_period_s);
            prepared.push_back(
                {trajectories[i].icao24 + "#" + std::to_string(i), split_features(resampled)});
        } catch (const ContractError&) {
            ++dataset.dropped_trajectories;
        }
    }
    if (prepared.empty()) {
        throw ContractError("no usable trajectories after cleaning and resampling");
    }

    std::size_t total_steps = 0;
    for (const Prepared& p : prepared) total_steps += p.split.timestamps.size();
    Tensor all_spatial(Shape{total_steps, 3});
    Tensor all_temporal(Shape{total_steps, 4});
    std::size_t row = 0;
    for (const Prepared& p : prepared) {
        std::size_t steps = p.split.timestamps.size();
        std::copy(p.split.spatial.data.begin(), p.split.spatial.data.end(),
                  all_spatial.data.begin() + static_cast<long>(row * 3));
        std::copy(p.split.temporal.data.begin(), p.split.temporal.data.end(),
                  all_temporal.data.begin() + static_cast<long>(row * 4));
        row += steps;
    }
    dataset.spatial_pca = pca_fit(all_spatial, config.variance_target);
    dataset.temporal_pca = pca_fit(all_temporal, config.variance_target);
    const std::size_t ks = dataset.spatial_pca.output_dim();
    const std::size_t kt = dataset.temporal_pca.output_dim();

    std::vector<std::array<double, 3>> persistence_rows;
    for (const Prepared& p : prepared) {
        const std::size_t steps = p.split.timestamps.size();
        Tensor s_coords = pca_transform(dataset.spatial_pca, p.split.spatial);
        Tensor t_coords = pca_transform(dataset.temporal_pca, p.split.temporal);
        Tensor features(Shape{steps, ks + kt});
        for (std::size_t r = 0; r < steps; ++r) {
            for (std::size_t c = 0; c < ks; ++c)
                features.data[r * (ks + kt) + c] = s_coords.data[r * ks + c];
            for (std::size_t c = 0; c < kt; ++c)
                features.data[r * (ks + kt) + ks + c] = t_coords.data[r * kt + c];
        }
        Tensor std_spatial(Shape{steps, 3});
        for (std::size_t r = 0; r < steps; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                std_spatial.data[r * 3 + c] =
                    (p.split.spatial.data[r * 3 + c] - dataset.spatial_pca.mean[c]) /
                    dataset.spatial_pca.scale[c];
            }
        }
        Tensor targets(Shape{steps, 4});
        for (std::size_t r = 0; r < steps; ++r) {
            targets.data[r * 4 + 0] = p.split.timestamps[r];
            for (std::size_t c = 0; c < 3; ++c) {
                targets.data[r * 4 + 1 + c] = std_spatial.data[r * 3 + c];
            }
        }
        std::vector<WindowSample> samples = sliding_windows(
            features, targets, config.window, config.stride, config.horizon, p.id);
        for (WindowSample& s : samples) {
            double t_last = p.split.timestamps[s.start + config.window - 1];
            for (std::size_t r = 0; r < config.horizon; ++r) {
                s.target.data[r * 4 + 0] -= t_last;
            }
            std::size_t last = s.start + config.window - 1;
            persistence_rows.push_back({std_spatial.data[last * 3 + 0],
                                        std_spatial.data[last * 3 + 1],
                                        std_spatial.data[last * 3 + 2]});
            dataset.samples.push_back(std::move(s));
        }
    }
    if (dataset.samples.empty()) {
        throw ContractError("no window samples: every trajectory is shorter than window+horizon");
    }

    double sum = 0.0;
    std::size_t count = 0;
    for (const WindowSample& s : dataset.samples) {
        for (std::size_t r = 0; r < config.horizon; ++r) sum += s.target.data[r * 4 + 0];
        count += config.horizon;
    }
    double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const WindowSample& s : dataset.samples) {
        for (std::size_t r = 0; r < config.horizon; ++r) {
            double v = s.target.data[r * 4 + 0] - mean;
            ss += v * v;
        }
    }
    double scale = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
    dataset.target_time_mean = mean;
    dataset.target_time_scale = std::max(scale, kScaleFloor);
    for (WindowSample& s : dataset.samples) {
        for (std::size_t r = 0; r < config.horizon; ++r) {
            s.target.data[r * 4 + 0] =
                (s.target.data[r * 4 + 0] - mean) / dataset.target_time_scale;
        }
    }

    dataset.persistence_spatial = Tensor(Shape{persistence_rows.size(), 3});
    for (std::size_t i = 0; i < persistence_rows.size(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            dataset.persistence_spatial.data[i * 3 + c] = persistence_rows[i][c];
        }
    }
    return dataset;
}

namespace {

void put_pca(ArrayFile& file, const std::string& prefix, const PcaModel& model) {
    file.put(prefix + ".mean", Shape{model.mean.size()}, model.mean);
    file.put(prefix + ".scale", Shape{model.scale.size()}, model.scale);
    file.put(prefix + ".components", model.components.shape, model.components.data);
    file.put(prefix + ".explained", Shape{model.explained_variance.size()},
             model.explained_variance);
}

PcaModel get_pca(const ArrayFile& file, const std::string& prefix) {
    PcaModel model;
    model.mean = file.get(prefix + ".mean").values;
    model.scale = file.get(prefix + ".scale").values;
    const NamedArray& comp = file.get(prefix + ".components");
    model.components = Tensor(comp.shape, comp.values);
    model.explained_variance = file.get(prefix + ".explained").values;
    return model;
}

} // namespace

void Dataset::save(const std::filesystem::path& path) const {
    ArrayFile file;
    file.set_meta("format", "skytrace.dataset.v1");
    file.set_meta("sample.count", std::to_string(samples.size()));
    file.set_meta("dropped.trajectories", std::to_string(dropped_trajectories));

    std::vector<std::string> ids;
    std::vector<double> id_index(samples.size());
    std::vector<double> starts(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string& id = samples[i].trajectory_id;
        auto it = std::find(ids.begin(), ids.end(), id);
        if (it == ids.end()) {
            ids.push_back(id);
            it = ids.end() - 1;
        }
        id_index[i] = static_cast<double>(it - ids.begin());
        starts[i] = static_cast<double>(samples[i].start);
    }
    std::string joined;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) joined += ' ';
        joined += ids[i];
    }
    file.set_meta("trajectory.ids", joined);

    file.put("config", Shape{5},
             {config.resample_period_s, config.variance_target,
              static_cast<double>(config.window), static_cast<double>(config.stride),
              static_cast<double>(config.horizon)});
    put_pca(file, "pca.spatial", spatial_pca);
    put_pca(file, "pca.temporal", temporal_pca);
    file.put("target.time", Shape{2}, {target_time_mean, target_time_scale});

    const std::size_t n = samples.size();
    const std::size_t d_in = d_input();
    const std::size_t w = config.window;
    const std::size_t h = config.horizon;
    std::vector<double> inputs(n * w * d_in);
    std::vector<double> targets(n * h * 4);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(samples[i].input.data.begin(), samples[i].input.data.end(),
                  inputs.begin() + static_cast<long>(i * w * d_in));
        std::copy(samples[i].target.data.begin(), samples[i].target.data.end(),
                  targets.begin() + static_cast<long>(i * h * 4));
    }
    file.put("sample.trajectory", Shape{n}, std::move(id_index));
    file.put("sample.start", Shape{n}, std::move(starts));
    file.put("input", Shape{n, w, d_in}, std::move(inputs));
    file.put("target", Shape{n, h, 4}, std::move(targets));
    file.put("persistence", persistence_spatial.shape, persistence_spatial.data);
    file.save(path);
}

Dataset Dataset::load(const std::filesystem::path& path) {
    ArrayFile file = ArrayFile::load(path);
    if (!file.has_meta("format") || file.meta("format") != "skytrace.dataset.v1") {
        throw SchemaError(path.string() + " is not a dataset file");
    }
    Dataset dataset;
    const NamedArray& cfg = file.get("config");
    if (cfg.values.size() != 5) throw SchemaError("malformed dataset config block");
    dataset.config.resample_period_s = cfg.values[0];
    dataset.config.variance_target = cfg.values[1];
    dataset.config.window = static_cast<std::size_t>(cfg.values[2]);
    dataset.config.stride = static_cast<std::size_t>(cfg.values[3]);
    dataset.config.horizon = static_cast<std::size_t>(cfg.values[4]);
    dataset.config.validate();
    dataset.dropped_trajectories = std::stoull(file.meta("dropped.trajectories"));

    dataset.spatial_pca = get_pca(file, "pca.spatial");
    dataset.temporal_pca = get_pca(file, "pca.temporal");
    const NamedArray& tt = file.get("target.time");
    if (tt.values.size() != 2) throw SchemaError("malformed target time block");
    dataset.target_time_mean = tt.values[0];
    dataset.target_time_scale = tt.values[1];

    std::vector<std::string> ids;
    {
        std::string joined = file.meta("trajectory.ids");
        std::size_t start = 0;
        while (start < joined.size()) {
            std::size_t space = joined.find(' ', start);
            if (space == std::string::npos) space = joined.size();
            ids.push_back(joined.substr(start, space - start));
            start = space + 1;
        }
    }

    const NamedArray& inputs = file.get("input");
    const NamedArray& targets = file.get("target");
    const NamedArray& id_index = file.get("sample.trajectory");
    const NamedArray& starts = file.get("sample.start");
    if (inputs.shape.size() != 3 || targets.shape.size() != 3 ||
        inputs.shape[0] != targets.shape[0]) {
        throw SchemaError("malformed dataset sample blocks");
    }
    const std::size_t n = inputs.shape[0];
    const std::size_t w = inputs.shape[1];
    const std::size_t d_in = inputs.shape[2];
    const std::size_t h = targets.shape[1];
    if (w != dataset.config.window || h != dataset.config.horizon || targets.shape[2] != 4 ||
        id_index.values.size() != n || starts.values.size() != n ||
        d_in != dataset.d_input()) {
        throw SchemaError("dataset sample blocks disagree with the manifest");
    }
    dataset.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        WindowSample& s = dataset.samples[i];
        std::size_t idx = static_cast<std::size_t>(id_index.values[i]);
        if (idx >= ids.size()) throw SchemaError("sample trajectory index out of range");
        s.trajectory_id = ids[idx];
        s.start = static_cast<std::size_t>(starts.values[i]);
        s.input = Tensor(Shape{w, d_in},
                         std::vector<double>(inputs.values.begin() + static_cast<long>(i * w * d_in),
                                             inputs.values.begin() +
                                                 static_cast<long>((i + 1) * w * d_in)));
        s.target = Tensor(Shape{h, 4},
                          std::vector<double>(targets.values.begin() + static_cast<long>(i * h * 4),
                                              targets.values.begin() +
                                                  static_cast<long>((i + 1) * h * 4)));
    }
    const NamedArray& persistence = file.get("persistence");
    dataset.persistence_spatial = Tensor(persistence.shape, persistence.values);
    if (dataset.persistence_spatial.shape != Shape{n, 3}) {
        throw SchemaError("malformed persistence block");
    }
    return dataset;
}

} // namespace skytrace
