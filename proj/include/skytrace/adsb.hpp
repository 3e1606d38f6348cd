// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace skytrace {

// One ADS-B state report. Field order matches the CSV schema:
//   time,icao24,lat,lon,baroaltitude,velocity,heading,vertrate,callsign,hour
struct AdsbRecord {
    std::int64_t timestamp = 0;   // Unix seconds
    std::string icao24;           // lowercase 6-hex-digit transponder id
    double lat = 0.0;             // degrees, [-90, 90]
    double lon = 0.0;             // degrees, [-180, 180]
    double altitude = 0.0;        // feet
    double velocity = 0.0;        // knots, >= 0
    double heading = 0.0;         // degrees, [0, 360)
    double vertical_rate = 0.0;   // feet/min, signed
    std::string callsign;         // trimmed, may be empty
    std::int64_t hour = 0;        // timestamp truncated to the hour

    bool operator==(const AdsbRecord&) const = default;
};

// Time-ordered reports of a single aircraft between gaps.
struct Trajectory {
    std::string icao24;
    std::string callsign;
    std::vector<AdsbRecord> records;

    std::size_t size() const { return records.size(); }
};

struct RejectedLine {
    std::size_t line_no = 0;  // 1-based, counting the header as line 1
    std::string reason;
};

struct ParseResult {
    std::vector<AdsbRecord> records;
    std::vector<RejectedLine> rejected;
};

// Parses the CSV schema above. Well-formed rows become records; malformed
// rows are collected with a reason, never silently dropped. Throws IoError if
// the file cannot be read and SchemaError if a required column is missing.
ParseResult parse_csv(const std::filesystem::path& path);
ParseResult parse_csv(std::istream& in);

void write_csv(const std::vector<AdsbRecord>& records, std::ostream& out);
void write_csv(const std::vector<AdsbRecord>& records, const std::filesystem::path& path);

// Rejection report lines: "line_no<TAB>reason".
void write_reject_report(const std::vector<RejectedLine>& rejected, std::ostream& out);

struct GroupOptions {
    // A new trajectory starts whenever consecutive reports of one aircraft
    // are further apart than this.
    double gap_threshold_s = 900.0;
};

struct GroupResult {
    std::vector<Trajectory> trajectories;
    std::size_t discarded_short = 0;  // segments with fewer than 2 points
};

// Partitions by icao24, sorts by timestamp, splits at gaps and drops
// single-point segments (counted, not lost silently).
GroupResult group_into_trajectories(const std::vector<AdsbRecord>& records,
                                    const GroupOptions& options = {});

// Per-feature Gaussian noise levels for the synthetic generator.
struct SynthNoise {
    double position_deg = 2e-4;
    double altitude_ft = 25.0;
    double velocity_kt = 2.0;
    double heading_deg = 0.5;
    double vertical_rate_fpm = 30.0;
};

// Desk-scale substitute for live ADS-B extracts: smooth parametric flight
// paths (turns plus a climb/cruise/descent profile), noisy sampling, and a
// seeded fraction of dropped samples to mimic gaps.
struct SynthConfig {
    std::size_t trajectory_count = 10;
    double duration_s = 3600.0;
    std::int64_t period_s = 5;
    double cruise_speed_kt = 450.0;
    double cruise_altitude_ft = 34000.0;
    double climb_rate_fpm = 1800.0;
    SynthNoise noise;
    double gap_probability = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<Trajectory> synth_generate(const SynthConfig& config);

// Flattens trajectories back to records (used to write synthetic CSVs).
std::vector<AdsbRecord> flatten(const std::vector<Trajectory>& trajectories);

// Trajectory store file: one numeric block per trajectory plus id metadata.
void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::filesystem::path& path);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);

} // namespace skytrace
