#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace roughcal {

inline constexpr std::string_view kVersion = "1.0.0";

enum class ErrorKind {
  InvalidSpec,
  InvalidArgument,
  InsufficientData,
  OutOfRange,
  IntegrationDiverged,
  StepTooLarge,
  TrainingFailed,
  LoadFailed,
  CalibrationDegenerate,
  InsufficientTrack,
  MissingArtifact,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidSpec: return "invalid-spec";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::IntegrationDiverged: return "integration-diverged";
    case ErrorKind::StepTooLarge: return "step-too-large";
    case ErrorKind::TrainingFailed: return "training-failed";
    case ErrorKind::LoadFailed: return "load-failed";
    case ErrorKind::CalibrationDegenerate: return "calibration-degenerate";
    case ErrorKind::InsufficientTrack: return "insufficient-track";
    case ErrorKind::MissingArtifact: return "missing-artifact";
  }
  return "unknown";
}

/// Every failure in the library is reported through this exception.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

// Boost.Random distributions have a fixed algorithm across platforms, unlike
// the std:: ones, so every stochastic stage draws through these.
using Rng = boost::random::mt19937_64;

/// splitmix64 finalizer; derives independent child seeds from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  return boost::random::uniform_01<double>{}(rng);
}

inline double standard_normal(Rng& rng) {
  return boost::random::normal_distribution<double>{0.0, 1.0}(rng);
}

// Locale-independent shortest round-trip formatting.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::InvalidArgument, "not a number: '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::InvalidArgument, "not an unsigned integer: '" + std::string(s) + "'");
  return v;
}

/// FNV-1a 64-bit, used for config and artifact digests.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex_digest(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace roughcal
