#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "roughcal/core.hpp"

namespace roughcal {

/// Domain constants shared by design, calibration and the loop.
namespace defaults {
inline constexpr double kVMin = 0.5;
inline constexpr double kVMax = 2.0;
inline constexpr double kGdMin = 200.0;
inline constexpr double kGdMax = 600.0;
inline constexpr double kReferenceFrequency = 0.1;  // n0, cycles/m
inline constexpr double kGdScale = 1e6;
}  // namespace defaults

enum class PriorDim { Velocity, Roughness };

class UniformPrior {
 public:
  UniformPrior(double lower, double upper, PriorDim dim = PriorDim::Roughness)
      : lower_(lower), upper_(upper), dim_(dim) {
    require(std::isfinite(lower) && std::isfinite(upper) && lower < upper,
            ErrorKind::InvalidArgument, "uniform prior needs finite lower < upper");
  }

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double width() const { return upper_ - lower_; }
  double midpoint() const { return 0.5 * (lower_ + upper_); }
  PriorDim dim() const { return dim_; }

  bool contains(double x) const { return x >= lower_ && x <= upper_; }

  double density(double x) const { return contains(x) ? 1.0 / (upper_ - lower_) : 0.0; }

  double log_density(double x) const {
    return contains(x) ? -std::log(upper_ - lower_) : -std::numeric_limits<double>::infinity();
  }

  std::vector<double> sample(std::uint64_t seed, std::size_t n) const {
    require(n >= 1, ErrorKind::InvalidArgument, "sample count must be >= 1");
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& x : out) x = lower_ + (upper_ - lower_) * uniform01(rng);
    return out;
  }

 private:
  double lower_;
  double upper_;
  PriorDim dim_;
};

inline UniformPrior gd_prior() { return {defaults::kGdMin, defaults::kGdMax, PriorDim::Roughness}; }
inline UniformPrior velocity_prior() { return {defaults::kVMin, defaults::kVMax, PriorDim::Velocity}; }

/// Rectangular support of the (v, GD) design and calibration space.
struct PriorBox {
  double v_min = defaults::kVMin;
  double v_max = defaults::kVMax;
  double gd_min = defaults::kGdMin;
  double gd_max = defaults::kGdMax;

  void validate() const {
    require(v_min > 0 && v_min < v_max, ErrorKind::InvalidArgument, "prior box needs 0 < v_min < v_max");
    require(gd_min > 0 && gd_min < gd_max, ErrorKind::InvalidArgument,
            "prior box needs 0 < gd_min < gd_max");
  }
  UniformPrior velocity() const { return {v_min, v_max, PriorDim::Velocity}; }
  UniformPrior roughness() const { return {gd_min, gd_max, PriorDim::Roughness}; }
  bool contains(double v, double gd) const {
    return v >= v_min && v <= v_max && gd >= gd_min && gd <= gd_max;
  }
  bool operator==(const PriorBox&) const = default;
};

}  // namespace roughcal
