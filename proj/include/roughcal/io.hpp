#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "roughcal/calibrate.hpp"
#include "roughcal/core.hpp"
#include "roughcal/design.hpp"
#include "roughcal/loop.hpp"
#include "roughcal/terrain.hpp"
#include "roughcal/vehicle.hpp"

namespace roughcal::io {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::InvalidArgument, "cannot write " + path);
  out << content;
  require(static_cast<bool>(out), ErrorKind::InvalidArgument, "failed writing " + path);
}

inline std::string file_digest(const std::string& path) { return hex_digest(fnv1a(read_file(path))); }

/// Minimal CSV reader: comma separated, no quoting, '#' lines are comments.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorKind::InvalidArgument, "CSV column '" + std::string(name) + "' not found");
  }
};

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline Csv parse_csv(std::string_view text, std::string_view expected_header = {}) {
  Csv csv;
  std::size_t start = 0;
  bool have_header = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      csv.comments.emplace_back(line.substr(1));
      continue;
    }
    if (!have_header) {
      if (!expected_header.empty() && line != expected_header)
        throw Error(ErrorKind::InvalidArgument,
                    "unexpected CSV header '" + std::string(line) + "' (expected '" + std::string(expected_header) + "')");
      csv.header = split(line);
      have_header = true;
      continue;
    }
    auto row = split(line);
    if (row.size() != csv.header.size())
      throw Error(ErrorKind::InvalidArgument, "CSV row has " + std::to_string(row.size()) + " fields, expected " +
                                                  std::to_string(csv.header.size()));
    csv.rows.push_back(std::move(row));
  }
  require(have_header, ErrorKind::InvalidArgument, "CSV has no header");
  return csv;
}

/// Numeric field; empty means NaN.
inline double num(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return parse_double(s);
}

inline std::string fmt(double x) { return std::isfinite(x) ? format_double(x) : (std::isnan(x) ? "" : format_double(x)); }

// --- key=value blocks --------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

inline std::string write_kv(const KeyValues& kv, std::string_view prefix = {}) {
  std::string out;
  for (const auto& [k, v] : kv) out += std::string(prefix) + k + "=" + v + "\n";
  return out;
}

inline KeyValues parse_kv(const std::vector<std::string>& lines) {
  KeyValues kv;
  for (auto line : lines) {
    while (!line.empty() && line.front() == ' ') line.erase(line.begin());
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline const std::string& kv_at(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorKind::InvalidArgument, "metadata key '" + key + "' missing");
  return it->second;
}

// --- profile -----------------------------------------------------------------

inline constexpr std::string_view kProfileHeader = "x_m,height_m";

inline std::string profile_csv(const terrain::RoadProfile& p) {
  std::string out(kProfileHeader);
  out += '\n';
  for (std::size_t k = 0; k < p.size(); ++k)
    out += format_double(static_cast<double>(k) * p.spacing_m) + "," + format_double(p.heights_m[k]) + "\n";
  return out;
}

inline terrain::RoadProfile parse_profile(std::string_view text) {
  const auto csv = parse_csv(text, kProfileHeader);
  require(csv.rows.size() >= 2, ErrorKind::InvalidArgument, "profile needs at least 2 rows");
  std::vector<double> h;
  h.reserve(csv.rows.size());
  for (const auto& r : csv.rows) h.push_back(parse_double(r[1]));
  const double spacing = parse_double(csv.rows[1][0]) - parse_double(csv.rows[0][0]);
  require(spacing > 0, ErrorKind::InvalidArgument, "profile positions must increase");
  for (std::size_t k = 0; k < csv.rows.size(); ++k) {
    const double x = parse_double(csv.rows[k][0]);
    require(std::abs(x - static_cast<double>(k) * spacing) <= 1e-9 * std::max(1.0, x), ErrorKind::InvalidArgument,
            "profile spacing is not uniform at row " + std::to_string(k));
  }
  return terrain::RoadProfile(std::move(h), spacing);
}

// --- IMU ---------------------------------------------------------------------

inline constexpr std::string_view kImuHeader = "t_s,x_m,a_front_mps2";

inline std::string imu_csv(const vehicle::ImuSeries& imu) {
  std::string out(kImuHeader);
  out += '\n';
  for (std::size_t k = 0; k < imu.size(); ++k)
    out += format_double(imu.time(k)) + "," + format_double(imu.positions_m[k]) + "," +
           format_double(imu.a_front[k]) + "\n";
  return out;
}

inline vehicle::ImuSeries parse_imu(std::string_view text) {
  const auto csv = parse_csv(text, kImuHeader);
  vehicle::ImuSeries imu;
  for (const auto& r : csv.rows) {
    imu.positions_m.push_back(parse_double(r[1]));
    imu.a_front.push_back(parse_double(r[2]));
  }
  if (csv.rows.size() >= 2) imu.sample_rate_hz = 1.0 / parse_double(csv.rows[1][0]);
  return imu;
}

// --- training set ------------------------------------------------------------

inline constexpr std::string_view kTrainingHeader = "index,v_mps,gd,f,seed";

inline std::string training_csv(const design::TrainingSet& ts) {
  std::string out(kTrainingHeader);
  out += '\n';
  for (std::size_t i = 0; i < ts.points.size(); ++i) {
    const auto& p = ts.points[i];
    out += std::to_string(i) + "," + format_double(p.v) + "," + format_double(p.gd) + "," +
           (p.f ? format_double(*p.f) : std::string()) + "," + std::to_string(p.seed) + "\n";
  }
  return out;
}

inline KeyValues training_meta(const design::TrainingSet& ts) {
  return {{"v_min", format_double(ts.prior.v_min)},
          {"v_max", format_double(ts.prior.v_max)},
          {"gd_min", format_double(ts.prior.gd_min)},
          {"gd_max", format_double(ts.prior.gd_max)},
          {"noise_enabled", ts.noise.enabled ? "1" : "0"},
          {"noise_sigma", format_double(ts.noise.sigma)},
          {"noise_seed", std::to_string(ts.noise.seed)},
          {"vehicle_digest", ts.vehicle_digest},
          {"terrain_digest", ts.terrain_digest}};
}

inline std::string meta_path(const std::string& csv_path) { return csv_path + ".meta"; }

inline void save_training_set(const design::TrainingSet& ts, const std::string& path) {
  write_file(path, training_csv(ts));
  write_file(meta_path(path), write_kv(training_meta(ts)));
}

inline design::TrainingSet parse_training_set(std::string_view csv_text, std::string_view meta_text) {
  design::TrainingSet ts;
  const auto csv = parse_csv(csv_text, kTrainingHeader);
  for (const auto& r : csv.rows) {
    design::DesignPoint p;
    p.v = parse_double(r[1]);
    p.gd = parse_double(r[2]);
    if (!r[3].empty()) p.f = parse_double(r[3]);
    p.seed = parse_u64(r[4]);
    ts.points.push_back(p);
  }
  const auto kv = parse_kv(split(std::string(meta_text), '\n'));
  ts.prior = {parse_double(kv_at(kv, "v_min")), parse_double(kv_at(kv, "v_max")), parse_double(kv_at(kv, "gd_min")),
              parse_double(kv_at(kv, "gd_max"))};
  ts.noise.enabled = kv_at(kv, "noise_enabled") == "1";
  ts.noise.sigma = parse_double(kv_at(kv, "noise_sigma"));
  ts.noise.seed = parse_u64(kv_at(kv, "noise_seed"));
  ts.vehicle_digest = kv_at(kv, "vehicle_digest");
  ts.terrain_digest = kv_at(kv, "terrain_digest");
  return ts;
}

inline design::TrainingSet load_training_set(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::MissingArtifact, "training set not found: " + path);
  if (!std::filesystem::exists(meta_path(path)))
    throw Error(ErrorKind::MissingArtifact, "training set metadata not found: " + meta_path(path));
  return parse_training_set(read_file(path), read_file(meta_path(path)));
}

// --- posterior ---------------------------------------------------------------

inline constexpr std::string_view kPosteriorHeader = "index,gd,lambda_obs";

inline std::string posterior_csv(const calibrate::Posterior& p) {
  std::string out;
  out += write_kv({{"mean", format_double(p.mean)},
                   {"std", format_double(p.std)},
                   {"q025", format_double(p.q025)},
                   {"q50", format_double(p.q50)},
                   {"q975", format_double(p.q975)},
                   {"acceptance_rate", format_double(p.acceptance_rate)},
                   {"n_samples", std::to_string(p.samples.size())},
                   {"flags", p.flags.to_string()}},
                  "# ");
  out += kPosteriorHeader;
  out += '\n';
  for (std::size_t i = 0; i < p.samples.size(); ++i)
    out += std::to_string(i) + "," + format_double(p.samples[i]) + "," + format_double(p.lambda_obs[i]) + "\n";
  return out;
}

// --- assessment --------------------------------------------------------------

inline constexpr std::string_view kAssessmentHeader = "v,gd_true,rep,gd_hat,pct_err,accept_rate,flags";

inline std::string assessment_csv(const std::vector<calibrate::AssessmentRow>& rows) {
  std::string out(kAssessmentHeader);
  out += '\n';
  for (const auto& r : rows) {
    std::string flags = r.ok() ? r.flags.to_string() : "error";
    out += format_double(r.v) + "," + format_double(r.gd_true) + "," + std::to_string(r.rep) + "," + fmt(r.gd_hat) +
           "," + fmt(r.pct_err) + "," + fmt(r.accept_rate) + "," + flags + "\n";
  }
  return out;
}

/// Posterior draws of every assessment row, one column per row, for histograms.
inline std::string assessment_samples_csv(const std::vector<calibrate::AssessmentRow>& rows) {
  std::string out = "v,gd_true,rep,gd";
  out += '\n';
  for (const auto& r : rows)
    for (double s : r.samples)
      out += format_double(r.v) + "," + format_double(r.gd_true) + "," + std::to_string(r.rep) + "," +
             format_double(s) + "\n";
  return out;
}

// --- loop trace --------------------------------------------------------------

inline constexpr std::string_view kTraceHeader = "t_s,x_m,v_cmd_mps,gd_hat,gd_std,mode,f_obs,gd_true";

inline std::string trace_csv(const std::vector<loop::LoopRecord>& records) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& r : records)
    out += format_double(r.t) + "," + format_double(r.x) + "," + format_double(r.v_cmd) + "," + fmt(r.gd_hat) + "," +
           fmt(r.gd_std) + "," + std::string(control::to_string(r.mode)) + "," + fmt(r.f_obs) + "," +
           format_double(r.gd_true) + "\n";
  return out;
}

/// Reads a trace back; the first row is the start record and the last the end
/// record, as written by run.
inline std::vector<loop::LoopRecord> parse_trace(std::string_view text) {
  const auto csv = parse_csv(text, kTraceHeader);
  std::vector<loop::LoopRecord> out;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& r = csv.rows[i];
    loop::LoopRecord rec;
    rec.kind = i == 0 ? loop::RecordKind::Start
                      : (i + 1 == csv.rows.size() ? loop::RecordKind::End : loop::RecordKind::Calibration);
    rec.t = parse_double(r[0]);
    rec.x = parse_double(r[1]);
    rec.v_cmd = parse_double(r[2]);
    rec.gd_hat = num(r[3]);
    rec.gd_std = num(r[4]);
    rec.mode = control::parse_mode(r[5]);
    rec.f_obs = num(r[6]);
    rec.gd_true = parse_double(r[7]);
    out.push_back(rec);
  }
  return out;
}

}  // namespace roughcal::io
