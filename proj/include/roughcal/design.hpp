#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/random/uniform_int_distribution.hpp>

#include "roughcal/core.hpp"
#include "roughcal/priors.hpp"
#include "roughcal/terrain.hpp"
#include "roughcal/vehicle.hpp"

namespace roughcal::design {

struct DesignPoint {
  double v = 0.0;
  double gd = 0.0;
  std::optional<double> f;  // (m/s^2)^2, set once simulated
  std::uint64_t seed = 0;
};

/// Fixed settings for the per-point training simulations.
struct TrainingRunConfig {
  double length_m = 21.0;
  double spacing_m = 0.006;
  terrain::Band band{};
  double sample_rate_hz = 120.0;
  double dt_internal = vehicle::kDefaultDt;

  std::string canonical() const {
    return "length=" + format_double(length_m) + ";spacing=" + format_double(spacing_m) +
           ";n_min=" + format_double(band.n_min) + ";n_max=" + format_double(band.n_max) +
           ";fs=" + format_double(sample_rate_hz) + ";dt=" + format_double(dt_internal) + ";";
  }
};

struct TrainingSet {
  std::vector<DesignPoint> points;
  PriorBox prior;
  vehicle::NoiseSpec noise;
  std::string vehicle_digest;
  std::string terrain_digest;

  void validate() const {
    prior.validate();
    require(points.size() >= 10, ErrorKind::InvalidArgument,
            "training set needs at least 10 points, got " + std::to_string(points.size()));
    for (const auto& p : points)
      require(p.f && std::isfinite(*p.f) && *p.f >= 0, ErrorKind::InvalidArgument,
              "training outputs must be finite and non-negative");
  }
};

/// McKay Latin hypercube over the prior box: each dimension is cut into n
/// equal strata, every stratum receives exactly one point with a uniform
/// jitter inside it, and the columns are paired by independent permutations.
inline std::vector<DesignPoint> lhs_design(std::size_t n, const PriorBox& prior, std::uint64_t seed) {
  require(n >= 2, ErrorKind::InvalidArgument, "LHS design needs n >= 2");
  prior.validate();
  Rng rng(seed);
  auto permutation = [&] {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
      boost::random::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(perm[i], perm[pick(rng)]);
    }
    return perm;
  };
  const auto perm_v = permutation();
  const auto perm_gd = permutation();
  const double dn = static_cast<double>(n);

  std::vector<DesignPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double uv = (static_cast<double>(perm_v[i]) + uniform01(rng)) / dn;
    const double ug = (static_cast<double>(perm_gd[i]) + uniform01(rng)) / dn;
    out[i].v = prior.v_min + uv * (prior.v_max - prior.v_min);
    out[i].gd = prior.gd_min + ug * (prior.gd_max - prior.gd_min);
    out[i].seed = derive_seed(seed, i);
  }
  return out;
}

/// Variance of the acceleration record normalized by T (not T - 1).
/// Welford's update keeps it stable for long records.
inline double metric_f(std::span<const double> a_front) {
  require(a_front.size() >= 2, ErrorKind::InsufficientData,
          "metric needs at least 2 samples, got " + std::to_string(a_front.size()));
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double a : a_front) {
    ++k;
    const double delta = a - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (a - mean);
  }
  return m2 / static_cast<double>(k);
}

/// Simulates one design point on a fresh profile and returns its metric.
inline double simulate_point(const DesignPoint& point, std::size_t index, const TrainingRunConfig& run,
                             const vehicle::HalfCarParams& params, const vehicle::NoiseSpec& noise) {
  terrain::RoadSpec spec;
  spec.gd_target = point.gd;
  spec.length_m = run.length_m;
  spec.spacing_m = run.spacing_m;
  spec.band = run.band;
  spec.seed = derive_seed(point.seed, 1);
  const auto profile = terrain::generate_profile(spec);

  vehicle::NoiseSpec point_noise = noise;
  point_noise.seed = derive_seed(noise.seed, index);
  const auto imu = vehicle::simulate(profile, point.v, params, run.sample_rate_hz, point_noise, run.dt_internal);
  return metric_f(imu.a_front);
}

/// Runs every design point (in parallel when `threads` != 1); results are
/// stored by point index so completion order never affects the output.
inline TrainingSet build_training_set(std::span<const DesignPoint> design, const PriorBox& prior,
                                      const TrainingRunConfig& run, const vehicle::HalfCarParams& params,
                                      const vehicle::NoiseSpec& noise, unsigned threads = 0) {
  require(!design.empty(), ErrorKind::InvalidArgument, "design is empty");
  params.validate();
  noise.validate();

  TrainingSet ts;
  ts.points.assign(design.begin(), design.end());
  ts.prior = prior;
  ts.noise = noise;
  ts.vehicle_digest = hex_digest(fnv1a(params.canonical()));
  ts.terrain_digest = hex_digest(fnv1a(run.canonical()));

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, design.size()));

  std::vector<std::exception_ptr> errors(design.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < design.size(); i += stride) {
      try {
        ts.points[i].f = simulate_point(design[i], i, run, params, noise);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "design point " + std::to_string(i) + " (v=" + format_double(design[i].v) +
                                ", gd=" + format_double(design[i].gd) + "): " + e.what());
    }
  }
  return ts;
}

}  // namespace roughcal::design
