#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roughcal/core.hpp"
#include "roughcal/design.hpp"
#include "roughcal/emulator.hpp"
#include "roughcal/terrain.hpp"
#include "roughcal/vehicle.hpp"

namespace roughcal::calibrate {

struct Observation {
  double f_obs = 0.0;  // (m/s^2)^2
  double v = 0.0;      // m/s
  std::size_t n_samples = 1000;

  void validate() const {
    require(std::isfinite(f_obs) && f_obs >= 0, ErrorKind::InvalidArgument,
            "observed metric must be finite and non-negative");
    require(std::isfinite(v) && v > 0, ErrorKind::InvalidArgument, "observation velocity must be positive");
    require(n_samples >= 2, ErrorKind::InvalidArgument, "observation needs at least 2 samples");
  }
};

struct McmcConfig {
  std::size_t n_total = 5000;
  std::size_t n_burn = 1000;
  std::size_t step_tune_iters = 1000;
  std::size_t step_tune_burn = 50;
  std::size_t tune_block = 100;
  std::uint64_t seed = 3;
  double initial_step_frac = 0.05;  // of the GD box width
  double lambda_obs_shape = 1.0;
  double lambda_obs_rate = 1e-3;
  bool tune = true;  // false runs the main chain at initial_step_frac

  void validate() const {
    require(n_burn < n_total, ErrorKind::InvalidArgument, "n_burn must be smaller than n_total");
    require(step_tune_iters >= 1 && step_tune_burn >= 1, ErrorKind::InvalidArgument,
            "tuning counts must be at least 1");
    require(tune_block > step_tune_burn, ErrorKind::InvalidArgument,
            "tuning block must be longer than its discarded prefix");
    require(initial_step_frac > 0 && std::isfinite(initial_step_frac), ErrorKind::InvalidArgument,
            "initial step must be positive");
    require(lambda_obs_shape > 0 && lambda_obs_rate > 0, ErrorKind::InvalidArgument,
            "observation precision prior must have positive shape and rate");
  }

  std::string canonical() const {
    return "n_total=" + std::to_string(n_total) + ";n_burn=" + std::to_string(n_burn) +
           ";tune=" + std::to_string(step_tune_iters) + "/" + std::to_string(step_tune_burn) + "/" +
           std::to_string(tune_block) + ";seed=" + std::to_string(seed) +
           ";step0=" + format_double(initial_step_frac) + ";lambda_obs=" + format_double(lambda_obs_shape) + "," +
           format_double(lambda_obs_rate) + ";" + (tune ? "" : "tune=off;");
  }
};

struct Flags {
  bool boundary_pileup = false;
  bool multimodal = false;
  bool velocity_outside_box = false;
  bool degenerate_observation = false;

  bool any() const { return boundary_pileup || multimodal || velocity_outside_box || degenerate_observation; }
  std::string to_string() const {
    std::string s;
    auto add = [&](bool on, const char* name) {
      if (!on) return;
      if (!s.empty()) s += '|';
      s += name;
    };
    add(boundary_pileup, "boundary");
    add(multimodal, "multimodal");
    add(velocity_outside_box, "v_outside_box");
    add(degenerate_observation, "zero_f");
    return s.empty() ? "none" : s;
  }
};

struct Summary {
  double gd_hat = 0.0;
  double spread = 0.0;
  Flags flags;
};

struct Posterior {
  std::vector<double> samples;
  std::vector<double> lambda_obs;
  double mean = 0.0;
  double std = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double acceptance_rate = 0.0;
  double final_step = 0.0;
  PriorBox prior;
  Flags flags;
};

inline double quantile(std::vector<double> sorted_or_not, double p) {
  require(!sorted_or_not.empty(), ErrorKind::InvalidArgument, "quantile of empty sample");
  std::sort(sorted_or_not.begin(), sorted_or_not.end());
  const double pos = p * static_cast<double>(sorted_or_not.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_or_not.size() - 1);
  return sorted_or_not[lo] + (pos - static_cast<double>(lo)) * (sorted_or_not[hi] - sorted_or_not[lo]);
}

/// At least 25% of the samples within 2% of the box width from either bound.
inline bool boundary_pileup(std::span<const double> samples, double lo, double hi) {
  if (samples.empty()) return false;
  const double tol = 0.02 * (hi - lo);
  std::size_t near = 0;
  for (double s : samples)
    if (s <= lo + tol || s >= hi - tol) ++near;
  return static_cast<double>(near) >= 0.25 * static_cast<double>(samples.size());
}

/// Histogram valley test: in a lightly smoothed 30-bin histogram, two local
/// peaks of at least 10% of the tallest bin with a valley between them lower
/// than half the smaller peak.
inline bool multimodal(std::span<const double> samples) {
  if (samples.size() < 50) return false;
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  if (*mx - *mn <= 0) return false;
  constexpr int kBins = 30;
  std::vector<double> h(kBins, 0.0);
  for (double s : samples) {
    const int b = static_cast<int>((s - *mn) / (*mx - *mn) * kBins);
    h[static_cast<std::size_t>(std::clamp(b, 0, kBins - 1))] += 1.0;
  }
  std::vector<double> sm(kBins);
  for (int i = 0; i < kBins; ++i) {
    const double l = h[static_cast<std::size_t>(std::max(i - 1, 0))];
    const double r = h[static_cast<std::size_t>(std::min(i + 1, kBins - 1))];
    sm[static_cast<std::size_t>(i)] = 0.25 * l + 0.5 * h[static_cast<std::size_t>(i)] + 0.25 * r;
  }
  const double top = *std::max_element(sm.begin(), sm.end());
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < sm.size(); ++i) {
    const double l = i > 0 ? sm[i - 1] : -1.0;
    const double r = i + 1 < sm.size() ? sm[i + 1] : -1.0;
    if (sm[i] >= 0.1 * top && sm[i] > l && sm[i] >= r) peaks.push_back(i);
  }
  for (std::size_t k = 1; k < peaks.size(); ++k) {
    const auto a = peaks[k - 1], b = peaks[k];
    const double valley = *std::min_element(sm.begin() + static_cast<std::ptrdiff_t>(a),
                                            sm.begin() + static_cast<std::ptrdiff_t>(b) + 1);
    if (valley < 0.5 * std::min(sm[a], sm[b])) return true;
  }
  return false;
}

inline Summary posterior_summary(std::span<const double> samples, double gd_min, double gd_max) {
  require(!samples.empty(), ErrorKind::InvalidArgument, "posterior has no samples");
  Summary s;
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double x : samples) var += (x - mean) * (x - mean);
  s.gd_hat = mean;
  s.spread = samples.size() > 1 ? std::sqrt(var / static_cast<double>(samples.size() - 1)) : 0.0;
  s.flags.boundary_pileup = boundary_pileup(samples, gd_min, gd_max);
  s.flags.multimodal = multimodal(samples);
  return s;
}

inline Summary posterior_summary(const Posterior& p) {
  Summary s = posterior_summary(p.samples, p.prior.gd_min, p.prior.gd_max);
  s.flags.velocity_outside_box = p.flags.velocity_outside_box;
  s.flags.degenerate_observation = p.flags.degenerate_observation;
  s.flags.boundary_pileup = s.flags.boundary_pileup || p.flags.boundary_pileup;
  return s;
}

/// Unnormalized log posterior of (gd, lambda_obs) given log f_obs, with the
/// uniform GD prior and a Gamma prior on the observation precision.
inline double log_target(const emulator::Surrogate& s, double log_f_obs, double v, double gd, double lambda_obs,
                         const McmcConfig& cfg) {
  const auto& box = s.prior();
  if (!(gd >= box.gd_min && gd <= box.gd_max) || !(lambda_obs > 0)) return -std::numeric_limits<double>::infinity();
  const auto p = s.predict(v, gd);
  const double var = p.log_sd * p.log_sd + p.nugget_sd * p.nugget_sd + 1.0 / lambda_obs;
  const double r = log_f_obs - p.log_mean;
  return -0.5 * r * r / var - 0.5 * std::log(2.0 * std::numbers::pi * var) +
         (cfg.lambda_obs_shape - 1.0) * std::log(lambda_obs) - cfg.lambda_obs_rate * lambda_obs;
}

/// Block random-walk Metropolis over (gd, log lambda_obs). The proposal scale
/// is tuned first in blocks, then the main chain of n_total iterations runs
/// from the tuned state and its first n_burn draws are dropped.
inline Posterior calibrate(const emulator::Surrogate& s, const Observation& obs, const McmcConfig& cfg) {
  obs.validate();
  cfg.validate();
  const auto& box = s.prior();
  Posterior post;
  post.prior = box;
  post.flags.velocity_outside_box = obs.v < box.v_min || obs.v > box.v_max;

  const std::size_t n_keep = cfg.n_total - cfg.n_burn;
  if (obs.f_obs == 0.0) {
    post.samples.assign(n_keep, box.gd_min);
    post.lambda_obs.assign(n_keep, cfg.lambda_obs_shape / cfg.lambda_obs_rate);
    post.mean = post.q025 = post.q50 = post.q975 = box.gd_min;
    post.flags.degenerate_observation = true;
    post.flags.boundary_pileup = true;
    return post;
  }

  const double width = box.gd_max - box.gd_min;
  const double log_f = std::log(obs.f_obs);
  // log lambda_obs moves on the same relative scale as gd
  constexpr double kLogLambdaPerWidth = 20.0;
  Rng rng(cfg.seed);

  double gd = box.roughness().midpoint();
  double log_lam = std::log(cfg.lambda_obs_shape / cfg.lambda_obs_rate);
  double cur = log_target(s, log_f, obs.v, gd, std::exp(log_lam), cfg) + log_lam;
  require(std::isfinite(cur), ErrorKind::CalibrationDegenerate, "calibration start state has zero density");

  double step = cfg.initial_step_frac;
  auto propose = [&]() {
    const double g2 = gd + step * width * standard_normal(rng);
    const double l2 = log_lam + step * kLogLambdaPerWidth * standard_normal(rng);
    const double t = log_target(s, log_f, obs.v, g2, std::exp(l2), cfg) + l2;
    const double u = uniform01(rng);
    if (std::isfinite(t) && std::log(u) < t - cur) {
      gd = g2;
      log_lam = l2;
      cur = t;
      return true;
    }
    return false;
  };

  std::size_t tune_done = 0, tune_accepted = 0;
  while (cfg.tune && tune_done < cfg.step_tune_iters) {
    const std::size_t block = std::min(cfg.tune_block, cfg.step_tune_iters - tune_done);
    std::size_t acc = 0, counted = 0;
    for (std::size_t i = 0; i < block; ++i) {
      const bool a = propose();
      tune_accepted += a ? 1 : 0;
      if (i >= cfg.step_tune_burn) {
        acc += a ? 1 : 0;
        ++counted;
      }
    }
    tune_done += block;
    if (counted == 0) continue;
    const double rate = static_cast<double>(acc) / static_cast<double>(counted);
    if (rate < 0.2) step /= 1.1;
    else if (rate > 0.5) step *= 1.1;
  }
  require(!cfg.tune || tune_accepted > 0, ErrorKind::CalibrationDegenerate,
          "no proposal was accepted during step tuning (f_obs=" + format_double(obs.f_obs) +
              ", v=" + format_double(obs.v) + ")");

  std::size_t accepted = 0;
  post.samples.reserve(n_keep);
  post.lambda_obs.reserve(n_keep);
  for (std::size_t it = 0; it < cfg.n_total; ++it) {
    const bool a = propose();
    if (it >= cfg.n_burn) {
      accepted += a ? 1 : 0;
      post.samples.push_back(gd);
      post.lambda_obs.push_back(std::exp(log_lam));
    }
  }
  post.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n_keep);
  post.final_step = step;

  const Summary sum = posterior_summary(post.samples, box.gd_min, box.gd_max);
  post.mean = sum.gd_hat;
  post.std = sum.spread;
  post.flags.boundary_pileup = sum.flags.boundary_pileup;
  post.flags.multimodal = sum.flags.multimodal;
  post.q025 = quantile(post.samples, 0.025);
  post.q50 = quantile(post.samples, 0.5);
  post.q975 = quantile(post.samples, 0.975);
  return post;
}

// --- grid assessment --------------------------------------------------------

struct AssessmentConfig {
  design::TrainingRunConfig run;
  vehicle::HalfCarParams params;
  vehicle::NoiseSpec noise;
  McmcConfig mcmc;
  std::uint64_t seed = 5;
};

struct AssessmentRow {
  double v = 0.0;
  double gd_true = 0.0;
  std::size_t rep = 0;
  double gd_hat = std::numeric_limits<double>::quiet_NaN();
  double pct_err = std::numeric_limits<double>::quiet_NaN();
  double accept_rate = std::numeric_limits<double>::quiet_NaN();
  double f_obs = std::numeric_limits<double>::quiet_NaN();
  Flags flags;
  std::string error;            // empty on success
  std::vector<double> samples;  // posterior draws, for histograms

  bool ok() const { return error.empty(); }
};

/// Fresh profile at gd, simulated at v; the resulting metric is calibrated.
/// Failures are stored in the row and the grid continues.
inline std::vector<AssessmentRow> grid_assessment(const emulator::Surrogate& s, std::span<const double> v_list,
                                                  std::span<const double> gd_list, std::size_t reps,
                                                  const AssessmentConfig& cfg) {
  const auto& box = s.prior();
  for (double v : v_list)
    require(v >= box.v_min && v <= box.v_max, ErrorKind::InvalidArgument,
            "assessment velocity " + format_double(v) + " is outside the prior box");
  for (double g : gd_list)
    require(g >= box.gd_min && g <= box.gd_max, ErrorKind::InvalidArgument,
            "assessment GD " + format_double(g) + " is outside the prior box");

  std::vector<AssessmentRow> rows;
  std::uint64_t cell = 0;
  for (double v : v_list) {
    for (double g : gd_list) {
      for (std::size_t r = 0; r < reps; ++r) {
        AssessmentRow row;
        row.v = v;
        row.gd_true = g;
        row.rep = r;
        try {
          const std::uint64_t stream = derive_seed(cfg.seed, cell * 1000003ULL + r);
          design::DesignPoint p{v, g, std::nullopt, stream};
          row.f_obs = design::simulate_point(p, static_cast<std::size_t>(stream & 0xffffffffULL), cfg.run,
                                             cfg.params, cfg.noise);
          McmcConfig mc = cfg.mcmc;
          mc.seed = derive_seed(cfg.mcmc.seed, stream);
          const std::size_t n_obs =
              static_cast<std::size_t>(std::floor((cfg.run.length_m - cfg.params.wheelbase()) / v *
                                                  cfg.run.sample_rate_hz)) + 1;
          const auto post = calibrate(s, Observation{row.f_obs, v, std::max<std::size_t>(n_obs, 2)}, mc);
          row.gd_hat = post.mean;
          row.pct_err = 100.0 * (post.mean - g) / g;
          row.accept_rate = post.acceptance_rate;
          row.flags = post.flags;
          row.samples = post.samples;
        } catch (const std::exception& e) {
          row.error = e.what();
        }
        rows.push_back(std::move(row));
      }
      ++cell;
    }
  }
  return rows;
}

}  // namespace roughcal::calibrate
