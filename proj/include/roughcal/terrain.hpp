#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "roughcal/core.hpp"
#include "roughcal/priors.hpp"

namespace roughcal::terrain {

/// Spatial-frequency band in cycles/m.
struct Band {
  double n_min = 0.01;
  double n_max = 10.0;
  bool operator==(const Band&) const = default;
};

/// Parameters of a stochastic ISO 8608 road. `gd_target` is the one-sided
/// displacement PSD at n0 = 0.1 cycles/m, scaled by 1e6.
struct RoadSpec {
  double gd_target = 450.0;
  double length_m = 100.0;
  double spacing_m = 0.006;
  std::uint64_t seed = 1;
  Band band{};

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidSpec, m); };
    if (!std::isfinite(gd_target) || !std::isfinite(length_m) || !std::isfinite(spacing_m) ||
        !std::isfinite(band.n_min) || !std::isfinite(band.n_max))
      fail("road spec has non-finite parameters");
    if (gd_target <= 0) fail("gd must be positive");
    if (length_m <= 0) fail("length must be positive");
    if (spacing_m <= 0 || spacing_m > length_m) fail("spacing must lie in (0, length]");
    if (band.n_min <= 0 || band.n_min >= band.n_max) fail("band needs 0 < n_min < n_max");
    if (band.n_max > 1.0 / (2.0 * spacing_m) * (1.0 + 1e-12))
      fail("band upper limit " + format_double(band.n_max) + " exceeds Nyquist " +
           format_double(1.0 / (2.0 * spacing_m)));
  }
  bool operator==(const RoadSpec&) const = default;

  std::string canonical() const {
    return "gd=" + format_double(gd_target) + ";length=" + format_double(length_m) +
           ";spacing=" + format_double(spacing_m) + ";seed=" + std::to_string(seed) +
           ";n_min=" + format_double(band.n_min) + ";n_max=" + format_double(band.n_max) + ";";
  }
};

/// Uniformly sampled vertical height field, heights[k] at x = k * spacing.
struct RoadProfile {
  std::vector<double> heights_m;
  double spacing_m = 0.006;
  std::optional<RoadSpec> spec;

  RoadProfile() = default;
  RoadProfile(std::vector<double> heights, double spacing, std::optional<RoadSpec> s = std::nullopt)
      : heights_m(std::move(heights)), spacing_m(spacing), spec(std::move(s)) {
    require(heights_m.size() >= 2, ErrorKind::InvalidArgument, "profile needs at least 2 samples");
    require(std::isfinite(spacing_m) && spacing_m > 0, ErrorKind::InvalidArgument,
            "profile spacing must be positive");
    for (double h : heights_m)
      require(std::isfinite(h), ErrorKind::InvalidArgument, "profile heights must be finite");
  }

  /// Flat road of the given length, heights identically zero.
  static RoadProfile flat(double length_m, double spacing_m) {
    auto n = static_cast<std::size_t>(std::ceil(length_m / spacing_m - 1e-9)) + 1;
    return RoadProfile(std::vector<double>(n, 0.0), spacing_m);
  }

  std::size_t size() const { return heights_m.size(); }
  double length() const { return static_cast<double>(heights_m.size() - 1) * spacing_m; }
};

struct PsdEstimate {
  std::vector<double> frequencies;  // cycles/m
  std::vector<double> values;       // m^3, one-sided
  std::vector<double> smoothed_frequencies;
  std::vector<double> smoothed_values;
  double gd_fitted = 0.0;
  double slope = 0.0;
};

struct RoadClass {
  char label = 'A';
  double gd_lower = 0.0;
  double gd_upper = 0.0;
};

inline std::size_t grid_count(double length_m, double spacing_m) {
  return static_cast<std::size_t>(std::ceil(length_m / spacing_m - 1e-9)) + 1;
}

inline double reference_psd(double gd, double n) {
  const double n0 = defaults::kReferenceFrequency;
  return gd / defaults::kGdScale * (n0 / n) * (n0 / n);
}

/// Spectral-representation synthesis: a sum of cosines on the record's own
/// frequency grid (dn = 1 / (N * spacing)) with deterministic amplitudes
/// sqrt(2 Gd(n) dn) and i.i.d. uniform phases, evaluated through an inverse FFT.
inline RoadProfile generate_profile(const RoadSpec& spec) {
  spec.validate();
  const std::size_t n = grid_count(spec.length_m, spec.spacing_m);
  const double record = static_cast<double>(n) * spec.spacing_m;
  const double dn = 1.0 / record;

  const auto first = static_cast<std::size_t>(std::max(1.0, std::ceil(spec.band.n_min / dn - 1e-9)));
  auto last = static_cast<std::size_t>(std::floor(spec.band.n_max / dn + 1e-9));
  last = std::min(last, (n - 1) / 2);  // strictly below Nyquist

  std::vector<std::complex<double>> spectrum(n, {0.0, 0.0});
  Rng rng(spec.seed);
  const double half_n = 0.5 * static_cast<double>(n);
  for (std::size_t i = first; i <= last; ++i) {
    const double freq = static_cast<double>(i) * dn;
    const double amp = std::sqrt(2.0 * reference_psd(spec.gd_target, freq) * dn);
    const double phase = 2.0 * std::numbers::pi * uniform01(rng);
    spectrum[i] = std::polar(half_n * amp, phase);
    spectrum[n - i] = std::conj(spectrum[i]);
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> field;
  fft.inv(field, spectrum);
  std::vector<double> heights(n);
  for (std::size_t k = 0; k < n; ++k) heights[k] = field[k].real();
  return RoadProfile(std::move(heights), spec.spacing_m, spec);
}

namespace detail {
inline constexpr std::size_t kBinsPerSmoothingBand = 16;
}

/// One-sided periodogram of the mean-removed heights (rectangular window,
/// so the sum of values times dn equals the population variance exactly),
/// plus the slope-constrained GD fit. The fit smooths the periodogram by
/// averaging the n^2-whitened bins in groups of 16 before taking logs, then
/// fits log10(PSD) = log10(Gd(n0)) - 2 log10(n / n0) by least squares with
/// each group weighted by its bin count.
inline PsdEstimate estimate_psd(const RoadProfile& profile, std::optional<Band> band = std::nullopt) {
  const std::size_t n = profile.size();
  require(n >= 64, ErrorKind::InsufficientData, "PSD estimate needs at least 64 samples, got " +
                                                    std::to_string(n));
  const double s = profile.spacing_m;
  const double dn = 1.0 / (static_cast<double>(n) * s);

  double mean = 0.0;
  for (double h : profile.heights_m) mean += h;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t k = 0; k < n; ++k) centered[k] = profile.heights_m[k] - mean;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> coeffs;
  fft.fwd(coeffs, centered);

  PsdEstimate est;
  const std::size_t kmax = n / 2;
  est.frequencies.reserve(kmax);
  est.values.reserve(kmax);
  for (std::size_t k = 1; k <= kmax; ++k) {
    const double one_sided = (2 * k == n) ? 1.0 : 2.0;
    est.frequencies.push_back(static_cast<double>(k) * dn);
    est.values.push_back(one_sided * s / static_cast<double>(n) * std::norm(coeffs[k]));
  }

  Band fit_band = band ? *band : (profile.spec ? profile.spec->band : Band{});
  const double n0 = defaults::kReferenceFrequency;

  // Gather in-band bins into smoothing groups.
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < est.frequencies.size(); ++k) {
    const double f = est.frequencies[k];
    if (f >= fit_band.n_min * (1 - 1e-12) && f <= fit_band.n_max * (1 + 1e-12)) idx.push_back(k);
  }
  require(!idx.empty(), ErrorKind::InsufficientData, "no periodogram bins inside the fit band");

  const std::size_t m = detail::kBinsPerSmoothingBand;
  std::size_t groups = std::max<std::size_t>(1, idx.size() / m);
  double sum_w = 0, sum_wy = 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t begin = g * m;
    const std::size_t end = (g + 1 == groups) ? idx.size() : begin + m;
    double z = 0.0, logn = 0.0;
    for (std::size_t j = begin; j < end; ++j) {
      const double f = est.frequencies[idx[j]];
      z += est.values[idx[j]] * (f / n0) * (f / n0);
      logn += std::log10(f);
    }
    const double w = static_cast<double>(end - begin);
    z /= w;
    logn /= w;
    const double centre = std::pow(10.0, logn);
    const double smooth = z * (n0 / centre) * (n0 / centre);
    est.smoothed_frequencies.push_back(centre);
    est.smoothed_values.push_back(smooth);
    if (z <= 0.0) continue;
    const double y = std::log10(smooth);
    sum_w += w;
    sum_wy += w * (y + 2.0 * (logn - std::log10(n0)));
    sx += w * logn;
    sy += w * y;
    sxx += w * logn * logn;
    sxy += w * logn * y;
  }

  // Powerless groups carry no log-space information; with none left the
  // field is flat in band and GD is exactly zero.
  if (sum_w == 0.0) return est;
  est.gd_fitted = std::pow(10.0, sum_wy / sum_w) * defaults::kGdScale;
  const double denom = sum_w * sxx - sx * sx;
  est.slope = denom > 0 ? (sum_w * sxy - sx * sy) / denom : 0.0;
  return est;
}

inline double estimate_gd(const RoadProfile& profile) { return estimate_psd(profile).gd_fitted; }

inline RoadClass classify(double gd) {
  require(std::isfinite(gd) && gd >= 0, ErrorKind::InvalidArgument, "gd must be non-negative");
  static constexpr double bounds[] = {32, 128, 512, 2048, 8192, 32768, 131072};
  std::size_t cls = 0;
  while (cls < 7 && gd >= bounds[cls]) ++cls;
  RoadClass out;
  out.label = static_cast<char>('A' + cls);
  out.gd_lower = cls == 0 ? 0.0 : bounds[cls - 1];
  out.gd_upper = cls == 7 ? std::numeric_limits<double>::infinity() : bounds[cls];
  return out;
}

/// Linear interpolation between grid heights.
inline double height_at(const RoadProfile& profile, double x) {
  const double len = profile.length();
  if (!(x >= 0.0 && x <= len * (1 + 1e-12)))
    throw Error(ErrorKind::OutOfRange, "x = " + format_double(x) + " outside [0, " + format_double(len) + "]");
  const double u = x / profile.spacing_m;
  const double nearest = std::round(u);
  const auto last = profile.size() - 1;
  if (std::abs(u - nearest) <= 1e-9 * std::max(1.0, nearest))
    return profile.heights_m[std::min(static_cast<std::size_t>(nearest), last)];
  auto k = std::min(static_cast<std::size_t>(u), last - 1);
  const double t = u - static_cast<double>(k);
  return profile.heights_m[k] + t * (profile.heights_m[k + 1] - profile.heights_m[k]);
}

/// Joins segments end to end; each subsequent segment is shifted vertically
/// so its first height coincides with the previous segment's last height, and
/// the shared node is stored once.
inline RoadProfile concat_segments(std::span<const RoadProfile> profiles) {
  require(!profiles.empty(), ErrorKind::InvalidArgument, "no segments to join");
  if (profiles.size() == 1) return profiles.front();
  const double s = profiles.front().spacing_m;
  std::vector<double> out = profiles.front().heights_m;
  for (std::size_t i = 1; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    require(std::abs(p.spacing_m - s) <= 1e-12 * s, ErrorKind::InvalidArgument,
            "segments must share grid spacing");
    const double offset = out.back() - p.heights_m.front();
    for (std::size_t k = 1; k < p.size(); ++k) out.push_back(p.heights_m[k] + offset);
  }
  return RoadProfile(std::move(out), s);
}

}  // namespace roughcal::terrain
