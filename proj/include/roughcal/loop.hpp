#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roughcal/calibrate.hpp"
#include "roughcal/control.hpp"
#include "roughcal/core.hpp"
#include "roughcal/design.hpp"
#include "roughcal/emulator.hpp"
#include "roughcal/terrain.hpp"
#include "roughcal/vehicle.hpp"

namespace roughcal::loop {

struct Segment {
  double length_m = 0.0;
  double gd_true = 0.0;
  bool operator==(const Segment&) const = default;
};

struct TrackSpec {
  std::vector<Segment> segments;
  double spacing_m = 0.006;
  std::uint64_t seed = 17;
  terrain::Band band{};

  void validate() const {
    require(!segments.empty(), ErrorKind::InvalidSpec, "track needs at least one segment");
    for (const auto& s : segments) {
      require(std::isfinite(s.length_m) && s.length_m > 0, ErrorKind::InvalidSpec,
              "segment lengths must be positive");
      require(std::isfinite(s.gd_true) && s.gd_true > 0, ErrorKind::InvalidSpec, "segment GD must be positive");
    }
  }
  double length() const {
    double l = 0.0;
    for (const auto& s : segments) l += s.length_m;
    return l;
  }
  /// Index of the segment containing x (boundaries belong to the later segment).
  std::size_t segment_at(double x) const {
    double end = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      end += segments[i].length_m;
      if (x < end) return i;
    }
    return segments.size() - 1;
  }
  double gd_at(double x) const { return segments[segment_at(x)].gd_true; }

  std::string canonical() const {
    std::string s = "spacing=" + format_double(spacing_m) + ";seed=" + std::to_string(seed) +
                    ";n_min=" + format_double(band.n_min) + ";n_max=" + format_double(band.n_max) + ";segments=";
    for (const auto& g : segments) s += format_double(g.length_m) + "@" + format_double(g.gd_true) + ",";
    return s + ";";
  }
};

/// 150 m in three equal parts: 300, 500, 300.
inline TrackSpec paper_track(std::uint64_t seed = 17) {
  TrackSpec t;
  t.segments = {{50.0, 300.0}, {50.0, 500.0}, {50.0, 300.0}};
  t.seed = seed;
  return t;
}

/// Each segment is an independent realization at its GD; segments are joined
/// continuously.
inline terrain::RoadProfile build_track(const TrackSpec& track) {
  track.validate();
  std::vector<terrain::RoadProfile> parts;
  for (std::size_t i = 0; i < track.segments.size(); ++i) {
    terrain::RoadSpec spec;
    spec.gd_target = track.segments[i].gd_true;
    spec.length_m = track.segments[i].length_m;
    spec.spacing_m = track.spacing_m;
    spec.band = track.band;
    spec.seed = derive_seed(track.seed, i);
    parts.push_back(terrain::generate_profile(spec));
  }
  return terrain::concat_segments(parts);
}

enum class Case { A, B };

struct LoopConfig {
  std::size_t buffer_len = 1000;
  double sample_rate_hz = 120.0;
  std::size_t trigger_stride = 250;
  vehicle::NoiseSpec noise;  // enabled for Case B
  double initial_v = 1.5;
  std::size_t delay_samples = 0;  // calibration latency D
  double reentry_margin = 0.0;    // hysteresis; 0 is the plain switch
  bool retune_each = true;        // false tunes the step once and reuses it
  double dt_internal = vehicle::kDefaultDt;
  std::uint64_t seed = 23;  // calibration chains

  void validate() const {
    require(buffer_len >= 2, ErrorKind::InvalidArgument, "buffer_len must be at least 2");
    require(trigger_stride >= 1 && trigger_stride <= buffer_len, ErrorKind::InvalidArgument,
            "trigger_stride must lie in [1, buffer_len]");
    require(std::isfinite(sample_rate_hz) && sample_rate_hz > 0, ErrorKind::InvalidArgument,
            "sample rate must be positive");
    require(std::isfinite(initial_v) && initial_v > 0, ErrorKind::InvalidArgument, "initial velocity must be positive");
    require(std::isfinite(reentry_margin) && reentry_margin >= 0, ErrorKind::InvalidArgument,
            "re-entry margin must be non-negative");
    noise.validate();
  }

  std::string canonical() const {
    return "buffer=" + std::to_string(buffer_len) + ";fs=" + format_double(sample_rate_hz) +
           ";stride=" + std::to_string(trigger_stride) + ";noise=" + (noise.enabled ? "1" : "0") +
           ";sigma=" + format_double(noise.sigma) + ";noise_seed=" + std::to_string(noise.seed) +
           ";v0=" + format_double(initial_v) + ";delay=" + std::to_string(delay_samples) +
           ";margin=" + format_double(reentry_margin) + ";retune=" + (retune_each ? "1" : "0") + ";dt=" + format_double(dt_internal) +
           ";seed=" + std::to_string(seed) + ";";
  }
};

inline LoopConfig case_config(Case c, std::uint64_t noise_seed = 7) {
  LoopConfig cfg;
  cfg.noise.enabled = c == Case::B;
  cfg.noise.sigma = 1.0;
  cfg.noise.seed = noise_seed;
  return cfg;
}

enum class RecordKind { Start, Calibration, End };

struct LoopRecord {
  RecordKind kind = RecordKind::Calibration;
  double t = 0.0;
  double x = 0.0;
  double v_cmd = 0.0;
  double gd_hat = std::numeric_limits<double>::quiet_NaN();
  double gd_std = std::numeric_limits<double>::quiet_NaN();
  control::Mode mode = control::Mode::Performance;
  double f_obs = std::numeric_limits<double>::quiet_NaN();
  double gd_true = 0.0;
  std::size_t sample = 0;        // IMU sample index of the event
  double v_known = 0.0;          // velocity given to the calibration
  double window_start_x = 0.0;   // front-wheel position at the first buffered sample
  std::string note;              // calibration error or flags
};

struct LoopResult {
  std::vector<LoopRecord> records;
  vehicle::ImuSeries imu;
  std::vector<std::string> warnings;
};

/// Streams the vehicle over the track. Once the buffer is full, every
/// trigger_stride new samples the last buffer_len samples are reduced to f,
/// calibrated with the mean commanded speed of the window, and the controller
/// output becomes the new command delay_samples later.
inline LoopResult run(const TrackSpec& track, const LoopConfig& cfg, const vehicle::HalfCarParams& params,
                      const emulator::Surrogate& surrogate, const calibrate::McmcConfig& mcmc,
                      const control::ControllerConfig& ctrl) {
  track.validate();
  cfg.validate();
  params.validate();
  mcmc.validate();
  ctrl.validate();

  const double window_s = static_cast<double>(cfg.buffer_len) / cfg.sample_rate_hz;
  const double needed = window_s * ctrl.v_max + params.wheelbase();
  require(track.length() > needed, ErrorKind::InsufficientTrack,
          "track of " + format_double(track.length()) + " m is shorter than one buffer at max speed (" +
              format_double(needed) + " m)");

  LoopResult out;
  if (surrogate.meta().noise_enabled != cfg.noise.enabled)
    out.warnings.push_back(std::string("surrogate was trained ") +
                           (surrogate.meta().noise_enabled ? "with" : "without") +
                           " measurement noise but the loop runs " + (cfg.noise.enabled ? "with" : "without") +
                           " it");

  const auto profile = build_track(track);
  vehicle::HalfCarSimulator sim(profile, params, cfg.sample_rate_hz, cfg.dt_internal);
  Rng noise_rng(cfg.noise.seed);
  auto measure = [&](double a) { return cfg.noise.enabled ? a + cfg.noise.sigma * standard_normal(noise_rng) : a; };

  auto& imu = out.imu;
  imu.sample_rate_hz = cfg.sample_rate_hz;
  double v = std::min(cfg.initial_v, ctrl.v_max);
  control::ControllerState state;
  state.last_v_cmd = v;

  auto push_sample = [&](double a, double vk) {
    imu.a_front.push_back(measure(a));
    imu.v_commanded.push_back(vk);
    imu.positions_m.push_back(sim.position());
  };
  push_sample(sim.front_acceleration(), v);

  LoopRecord start;
  start.kind = RecordKind::Start;
  start.v_cmd = v;
  start.mode = state.mode;
  start.gd_true = track.gd_at(0.0);
  out.records.push_back(start);

  struct Pending {
    std::size_t apply_at;
    double v;
  };
  std::deque<Pending> pending;
  std::size_t event = 0;
  std::optional<double> tuned_step;

  while (true) {
    while (!pending.empty() && pending.front().apply_at <= imu.size() - 1) {
      v = pending.front().v;
      pending.pop_front();
    }
    if (!sim.can_advance(v)) break;
    push_sample(sim.advance(v), v);
    const std::size_t n = imu.size();
    if (n < cfg.buffer_len || (n - cfg.buffer_len) % cfg.trigger_stride != 0) continue;

    const std::size_t first = n - cfg.buffer_len;
    const std::span<const double> window(imu.a_front.data() + first, cfg.buffer_len);
    double v_known = 0.0;
    for (std::size_t k = first; k < n; ++k) v_known += imu.v_commanded[k];
    v_known /= static_cast<double>(cfg.buffer_len);

    LoopRecord rec;
    rec.kind = RecordKind::Calibration;
    rec.sample = n - 1;
    rec.t = sim.time();
    rec.x = sim.position();
    rec.window_start_x = imu.positions_m[first];
    rec.gd_true = track.gd_at(rec.x);
    rec.f_obs = design::metric_f(window);
    rec.v_known = v_known;

    calibrate::McmcConfig mc = mcmc;
    mc.seed = derive_seed(cfg.seed, event++);
    if (!cfg.retune_each && tuned_step) {
      mc.initial_step_frac = *tuned_step;
      mc.tune = false;
    }
    try {
      const auto post = calibrate::calibrate(surrogate, {rec.f_obs, v_known, cfg.buffer_len}, mc);
      if (!tuned_step && !post.flags.degenerate_observation) tuned_step = post.final_step;
      rec.gd_hat = post.mean;
      rec.gd_std = post.std;
      if (post.flags.any()) rec.note = post.flags.to_string();
      const auto cmd = cfg.reentry_margin > 0 ? control::step_h(ctrl, state, post.mean, cfg.reentry_margin)
                                              : control::step(ctrl, state, post.mean);
      state = cmd.state;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::CalibrationDegenerate) throw;
      rec.note = std::string("calibration failed: ") + e.what();
    }
    rec.v_cmd = state.last_v_cmd;
    rec.mode = state.mode;
    out.records.push_back(rec);
    pending.push_back({rec.sample + cfg.delay_samples, state.last_v_cmd});
  }

  LoopRecord end;
  end.kind = RecordKind::End;
  end.t = sim.time();
  end.x = sim.position();
  end.v_cmd = v;
  end.mode = state.mode;
  end.gd_true = track.gd_at(end.x);
  end.sample = imu.size() - 1;
  if (out.records.size() > 1) {
    end.gd_hat = out.records.back().gd_hat;
    end.gd_std = out.records.back().gd_std;
    end.f_obs = out.records.back().f_obs;
  }
  out.records.push_back(end);
  return out;
}

struct RmseGroup {
  double gd_true = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

/// RMSE of gd_hat per distinct gd_true over calibration records. With
/// exclude_boundary, records whose buffer window straddles a segment boundary
/// are skipped.
inline std::vector<RmseGroup> evaluate_rmse(std::span<const LoopRecord> trace, const TrackSpec& track,
                                            bool exclude_boundary = false) {
  require(!trace.empty(), ErrorKind::InvalidArgument, "trace is empty");
  std::map<double, std::pair<double, std::size_t>> acc;
  for (const auto& r : trace) {
    if (r.kind != RecordKind::Calibration || !std::isfinite(r.gd_hat)) continue;
    if (exclude_boundary && track.segment_at(r.window_start_x) != track.segment_at(r.x)) continue;
    auto& a = acc[r.gd_true];
    a.first += (r.gd_hat - r.gd_true) * (r.gd_hat - r.gd_true);
    a.second += 1;
  }
  std::vector<RmseGroup> out;
  for (const auto& [gd, a] : acc) out.push_back({gd, std::sqrt(a.first / static_cast<double>(a.second)), a.second});
  return out;
}

inline std::optional<double> rmse_for(std::span<const RmseGroup> groups, double gd_true) {
  for (const auto& g : groups)
    if (g.gd_true == gd_true) return g.rmse;
  return std::nullopt;
}

/// Fills window_start_x of calibration records read back from a trace file.
/// Speed is constant between records, so position is piecewise linear in time
/// through the recorded (t, x) pairs.
inline void reconstruct_window_starts(std::vector<LoopRecord>& trace, std::size_t buffer_len, double sample_rate_hz) {
  const double span = static_cast<double>(buffer_len - 1) / sample_rate_hz;
  for (auto& r : trace) {
    if (r.kind != RecordKind::Calibration) continue;
    const double t0 = r.t - span;
    r.window_start_x = 0.0;
    for (std::size_t j = 1; j < trace.size(); ++j) {
      const auto& a = trace[j - 1];
      const auto& b = trace[j];
      if (t0 >= a.t && t0 <= b.t) {
        r.window_start_x = b.t > a.t ? a.x + (t0 - a.t) * (b.x - a.x) / (b.t - a.t) : a.x;
        break;
      }
    }
  }
}

/// Number of Performance/Safety changes along the trace.
inline std::size_t mode_switches(std::span<const LoopRecord> trace) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].mode != trace[i - 1].mode) ++n;
  return n;
}

}  // namespace roughcal::loop
