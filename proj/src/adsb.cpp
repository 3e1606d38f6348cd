// SPDX-License-Identifier: Apache-2.0
#include "skytrace/adsb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "skytrace/container.hpp"
#include "skytrace/error.hpp"
#include "skytrace/rng.hpp"

namespace skytrace {

namespace {

constexpr const char* kCsvHeader =
    "time,icao24,lat,lon,baroaltitude,velocity,heading,vertrate,callsign,hour";
constexpr std::size_t kColumnCount = 10;

const char* kColumnNames[kColumnCount] = {"time",    "icao24",   "lat",      "lon",
                                          "baroaltitude", "velocity", "heading",
                                          "vertrate", "callsign", "hour"};

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

bool parse_double(const std::string& text, double& out) {
    std::string t = trim(text);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_int64(const std::string& text, std::int64_t& out) {
    std::string t = trim(text);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool parse_int_meta(const std::string& text, std::size_t& out) {
    std::int64_t v = 0;
    if (!parse_int64(text, v) || v < 0) return false;
    out = static_cast<std::size_t>(v);
    return true;
}

// Shortest representation that parses back to the identical double.
std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

// Empty return means valid; otherwise the rejection reason.
std::string validate_and_fill(const std::vector<std::string>& fields,
                              const std::vector<std::size_t>& column_of, AdsbRecord& rec) {
    if (!parse_int64(fields[column_of[0]], rec.timestamp)) return "time is not an integer";

    std::string icao = trim(fields[column_of[1]]);
    if (icao.size() != 6) return "icao24 must be 6 hex digits: " + icao;
    for (char& c : icao) {
        if (c >= 'A' && c <= 'F') c = static_cast<char>(c - 'A' + 'a');
        bool hex = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
        if (!hex) return "icao24 must be 6 hex digits: " + icao;
    }
    rec.icao24 = icao;

    if (!parse_double(fields[column_of[2]], rec.lat)) return "lat is not a finite number";
    if (rec.lat < -90.0 || rec.lat > 90.0)
        return "lat out of range [-90,90]: " + trim(fields[column_of[2]]);
    if (!parse_double(fields[column_of[3]], rec.lon)) return "lon is not a finite number";
    if (rec.lon < -180.0 || rec.lon > 180.0)
        return "lon out of range [-180,180]: " + trim(fields[column_of[3]]);
    if (!parse_double(fields[column_of[4]], rec.altitude))
        return "baroaltitude is not a finite number";
    if (!parse_double(fields[column_of[5]], rec.velocity))
        return "velocity is not a finite number";
    if (rec.velocity < 0.0) return "velocity out of range [0,inf): " + trim(fields[column_of[5]]);
    if (!parse_double(fields[column_of[6]], rec.heading)) return "heading is not a finite number";
    if (rec.heading < 0.0 || rec.heading >= 360.0)
        return "heading out of range [0,360): " + trim(fields[column_of[6]]);
    if (!parse_double(fields[column_of[7]], rec.vertical_rate))
        return "vertrate is not a finite number";
    rec.callsign = trim(fields[column_of[8]]);
    if (!parse_int64(fields[column_of[9]], rec.hour)) return "hour is not an integer";
    if (rec.hour > rec.timestamp || rec.timestamp >= rec.hour + 3600)
        return "hour does not contain time: hour=" + std::to_string(rec.hour) +
               " time=" + std::to_string(rec.timestamp);
    return "";
}

} // namespace

ParseResult parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaError("input has no header row");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_fields(line);
    for (auto& h : header) h = trim(h);
    std::vector<std::size_t> column_of(kColumnCount);
    for (std::size_t i = 0; i < kColumnCount; ++i) {
        auto it = std::find(header.begin(), header.end(), kColumnNames[i]);
        if (it == header.end()) {
            throw SchemaError(std::string("missing required column '") + kColumnNames[i] + "'");
        }
        column_of[i] = static_cast<std::size_t>(it - header.begin());
    }

    ParseResult result;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            result.rejected.push_back({line_no, "expected " + std::to_string(header.size()) +
                                                    " fields, got " +
                                                    std::to_string(fields.size())});
            continue;
        }
        AdsbRecord rec;
        std::string reason = validate_and_fill(fields, column_of, rec);
        if (!reason.empty()) {
            result.rejected.push_back({line_no, reason});
        } else {
            result.records.push_back(std::move(rec));
        }
    }
    return result;
}

ParseResult parse_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return parse_csv(in);
}

void write_csv(const std::vector<AdsbRecord>& records, std::ostream& out) {
    out << kCsvHeader << '\n';
    for (const AdsbRecord& r : records) {
        out << r.timestamp << ',' << r.icao24 << ',' << format_double(r.lat) << ','
            << format_double(r.lon) << ',' << format_double(r.altitude) << ','
            << format_double(r.velocity) << ',' << format_double(r.heading) << ','
            << format_double(r.vertical_rate) << ',' << r.callsign << ',' << r.hour << '\n';
    }
}

void write_csv(const std::vector<AdsbRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    write_csv(records, out);
}

void write_reject_report(const std::vector<RejectedLine>& rejected, std::ostream& out) {
    for (const RejectedLine& r : rejected) {
        out << r.line_no << '\t' << r.reason << '\n';
    }
}

GroupResult group_into_trajectories(const std::vector<AdsbRecord>& records,
                                    const GroupOptions& options) {
    // std::map keys give a deterministic icao24 ordering of the output.
    std::map<std::string, std::vector<AdsbRecord>> by_aircraft;
    for (const AdsbRecord& r : records) {
        by_aircraft[r.icao24].push_back(r);
    }
    GroupResult result;
    for (auto& [icao, recs] : by_aircraft) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const AdsbRecord& a, const AdsbRecord& b) {
                             return a.timestamp < b.timestamp;
                         });
        std::vector<std::vector<AdsbRecord>> segments;
        for (const AdsbRecord& r : recs) {
            bool gap = segments.empty() ||
                       static_cast<double>(r.timestamp - segments.back().back().timestamp) >
                           options.gap_threshold_s;
            if (gap) segments.emplace_back();
            segments.back().push_back(r);
        }
        for (auto& seg : segments) {
            if (seg.size() < 2) {
                ++result.discarded_short;
                continue;
            }
            Trajectory traj;
            traj.icao24 = icao;
            for (const AdsbRecord& r : seg) {
                if (traj.callsign.empty() && !r.callsign.empty()) traj.callsign = r.callsign;
            }
            traj.records = std::move(seg);
            result.trajectories.push_back(std::move(traj));
        }
    }
    return result;
}

void SynthConfig::validate() const {
    if (trajectory_count == 0) throw ConfigError("synth: trajectory count must be positive");
    if (duration_s <= 0.0) throw ConfigError("synth: duration must be positive");
    if (period_s <= 0) throw ConfigError("synth: sampling period must be positive");
    if (cruise_speed_kt <= 0.0) throw ConfigError("synth: cruise speed must be positive");
    if (gap_probability < 0.0 || gap_probability > 0.5) {
        throw ConfigError("synth: gap probability must lie in [0, 0.5]");
    }
}

std::vector<Trajectory> synth_generate(const SynthConfig& config) {
    config.validate();
    // Reference point: a large hub airport; paths stay well inside the valid
    // latitude band for any reasonable duration.
    constexpr double kBaseLat = 33.64;
    constexpr double kBaseLon = -84.43;
    constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
    constexpr std::int64_t kBaseTime = 1600000000;

    std::vector<Trajectory> out;
    out.reserve(config.trajectory_count);
    for (std::size_t i = 0; i < config.trajectory_count; ++i) {
        Prng rng(derive_seed(config.seed, "synth.trajectory", i));
        double lat = kBaseLat + rng.uniform(-1.5, 1.5);
        double lon = kBaseLon + rng.uniform(-1.5, 1.5);
        double heading = rng.uniform(0.0, 360.0);
        double turn_rate = rng.uniform(-0.05, 0.05);          // deg/s
        double speed_base = config.cruise_speed_kt * rng.uniform(0.85, 1.1);
        double speed_wobble = rng.uniform(0.0, 0.05) * speed_base;
        double wobble_period = rng.uniform(300.0, 900.0);
        double start_alt = 1500.0 + rng.uniform(0.0, 1000.0);
        double climb_rate = config.climb_rate_fpm * rng.uniform(0.8, 1.2);
        double cruise_alt = config.cruise_altitude_ft * rng.uniform(0.85, 1.05);
        double climb_time = (cruise_alt - start_alt) / climb_rate * 60.0;
        climb_time = std::min(climb_time, config.duration_s * 0.4);
        double descent_start = config.duration_s - climb_time;
        std::int64_t base_time = kBaseTime + static_cast<std::int64_t>(i) * 7200;

        Trajectory traj;
        char icao_buf[8];
        std::snprintf(icao_buf, sizeof(icao_buf), "%06zx", (0xada000 + i) & 0xffffffu);
        traj.icao24 = icao_buf;
        char callsign_buf[12];
        std::snprintf(callsign_buf, sizeof(callsign_buf), "SYN%04zu", i % 10000);
        traj.callsign = callsign_buf;

        const std::size_t steps =
            static_cast<std::size_t>(config.duration_s / static_cast<double>(config.period_s)) + 1;
        const double dt = static_cast<double>(config.period_s);
        for (std::size_t k = 0; k < steps; ++k) {
            double t = static_cast<double>(k) * dt;
            double speed = speed_base +
                           speed_wobble * std::sin(2.0 * 3.14159265358979323846 * t / wobble_period);
            double altitude;
            double vrate;
            if (t < climb_time) {
                altitude = start_alt + climb_rate / 60.0 * t;
                vrate = climb_rate;
            } else if (t < descent_start) {
                altitude = start_alt + climb_rate / 60.0 * climb_time;
                vrate = 0.0;
            } else {
                altitude = start_alt + climb_rate / 60.0 * climb_time -
                           climb_rate / 60.0 * (t - descent_start);
                vrate = -climb_rate;
            }

            bool keep = !(rng.uniform() < config.gap_probability);
            if (keep) {
                AdsbRecord rec;
                rec.timestamp = base_time + static_cast<std::int64_t>(k) * config.period_s;
                rec.icao24 = traj.icao24;
                rec.callsign = traj.callsign;
                rec.lat = std::clamp(lat + rng.normal(0.0, config.noise.position_deg), -90.0, 90.0);
                rec.lon = std::clamp(lon + rng.normal(0.0, config.noise.position_deg), -180.0, 180.0);
                rec.altitude = altitude + rng.normal(0.0, config.noise.altitude_ft);
                rec.velocity =
                    std::max(0.0, speed + rng.normal(0.0, config.noise.velocity_kt));
                double h = heading + rng.normal(0.0, config.noise.heading_deg);
                rec.heading = h - 360.0 * std::floor(h / 360.0);
                rec.vertical_rate = vrate + rng.normal(0.0, config.noise.vertical_rate_fpm);
                rec.hour = rec.timestamp - (rec.timestamp % 3600);
                traj.records.push_back(std::move(rec));
            } else {
                // Burn the same number of draws so kept samples do not shift.
                rng.normal(0.0, 1.0);
                rng.normal(0.0, 1.0);
                rng.normal(0.0, 1.0);
                rng.normal(0.0, 1.0);
                rng.normal(0.0, 1.0);
                rng.normal(0.0, 1.0);
            }

            // Advance the path.
            double speed_nm_s = speed / 3600.0;
            double heading_rad = heading * kDegToRad;
            lat += speed_nm_s * std::cos(heading_rad) / 60.0 * dt;
            double cos_lat = std::max(0.2, std::cos(lat * kDegToRad));
            lon += speed_nm_s * std::sin(heading_rad) / (60.0 * cos_lat) * dt;
            heading += turn_rate * dt;
            heading -= 360.0 * std::floor(heading / 360.0);
        }
        out.push_back(std::move(traj));
    }
    return out;
}

std::vector<AdsbRecord> flatten(const std::vector<Trajectory>& trajectories) {
    std::vector<AdsbRecord> records;
    for (const Trajectory& t : trajectories) {
        records.insert(records.end(), t.records.begin(), t.records.end());
    }
    return records;
}

namespace {
constexpr std::size_t kStoreCols = 8; // t, lat, lon, alt, vel, heading, vrate, hour
}

void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::filesystem::path& path) {
    ArrayFile file;
    file.set_meta("format", "skytrace.store.v1");
    file.set_meta("trajectory.count", std::to_string(trajectories.size()));
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const Trajectory& t = trajectories[i];
        std::string prefix = "traj." + std::to_string(i);
        file.set_meta(prefix + ".icao24", t.icao24);
        file.set_meta(prefix + ".callsign", t.callsign);
        std::vector<double> block;
        block.reserve(t.records.size() * kStoreCols);
        for (const AdsbRecord& r : t.records) {
            block.push_back(static_cast<double>(r.timestamp));
            block.push_back(r.lat);
            block.push_back(r.lon);
            block.push_back(r.altitude);
            block.push_back(r.velocity);
            block.push_back(r.heading);
            block.push_back(r.vertical_rate);
            block.push_back(static_cast<double>(r.hour));
        }
        file.put(prefix + ".data", Shape{t.records.size(), kStoreCols}, std::move(block));
    }
    file.save(path);
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
    ArrayFile file = ArrayFile::load(path);
    if (!file.has_meta("format") || file.meta("format") != "skytrace.store.v1") {
        throw SchemaError(path.string() + " is not a trajectory store");
    }
    std::size_t count = 0;
    if (!parse_int_meta(file.meta("trajectory.count"), count)) {
        throw SchemaError("malformed trajectory count");
    }
    std::vector<Trajectory> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string prefix = "traj." + std::to_string(i);
        Trajectory t;
        t.icao24 = file.meta(prefix + ".icao24");
        t.callsign = file.meta(prefix + ".callsign");
        const NamedArray& block = file.get(prefix + ".data");
        if (block.shape.size() != 2 || block.shape[1] != kStoreCols) {
            throw SchemaError("trajectory block " + prefix + " has shape " +
                              shape_to_string(block.shape));
        }
        t.records.resize(block.shape[0]);
        for (std::size_t r = 0; r < block.shape[0]; ++r) {
            const double* row = block.values.data() + r * kStoreCols;
            AdsbRecord& rec = t.records[r];
            rec.timestamp = static_cast<std::int64_t>(row[0]);
            rec.icao24 = t.icao24;
            rec.callsign = t.callsign;
            rec.lat = row[1];
            rec.lon = row[2];
            rec.altitude = row[3];
            rec.velocity = row[4];
            rec.heading = row[5];
            rec.vertical_rate = row[6];
            rec.hour = static_cast<std::int64_t>(row[7]);
        }
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace skytrace
