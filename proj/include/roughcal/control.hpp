#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "roughcal/core.hpp"

namespace roughcal::control {

enum class Mode { Performance, Safety };

inline std::string_view to_string(Mode m) { return m == Mode::Safety ? "Safety" : "Performance"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "Safety") return Mode::Safety;
  if (s == "Performance") return Mode::Performance;
  throw Error(ErrorKind::InvalidArgument, "unknown controller mode '" + std::string(s) + "'");
}

/// Affine: v = v_offset + kp * (mid - gd). Literal: v = kp * (mid - gd).
/// Both are clamped to [v_safety, v_max].
enum class Law { Affine, Literal };

inline std::string_view to_string(Law l) { return l == Law::Literal ? "literal" : "affine"; }

inline Law parse_law(std::string_view s) {
  if (s == "affine") return Law::Affine;
  if (s == "literal") return Law::Literal;
  throw Error(ErrorKind::InvalidArgument, "unknown control law '" + std::string(s) + "' (affine | literal)");
}

struct ControllerConfig {
  double gd_min = 250.0;
  double gd_max = 350.0;
  double kp = 0.01;  // m/s per GD unit
  double v_safety = 1.0;
  double v_max = 2.0;
  double v_offset = 1.5;
  Law law = Law::Affine;

  void validate() const {
    for (double x : {gd_min, gd_max, kp, v_safety, v_max, v_offset})
      require(std::isfinite(x), ErrorKind::InvalidArgument, "controller parameters must be finite");
    require(gd_min < gd_max, ErrorKind::InvalidArgument, "controller needs gd_min < gd_max");
    require(v_safety <= v_offset && v_offset <= v_max, ErrorKind::InvalidArgument,
            "controller needs v_safety <= v_offset <= v_max");
    require(kp > 0, ErrorKind::InvalidArgument, "controller gain kp must be positive");
    require(v_safety > 0, ErrorKind::InvalidArgument, "safety velocity must be positive");
  }

  std::string canonical() const {
    return "gd_min=" + format_double(gd_min) + ";gd_max=" + format_double(gd_max) + ";kp=" + format_double(kp) +
           ";v_safety=" + format_double(v_safety) + ";v_max=" + format_double(v_max) +
           ";v_offset=" + format_double(v_offset) + ";law=" + std::string(to_string(law)) + ";";
  }
};

struct ControllerState {
  Mode mode = Mode::Performance;
  double last_gd = 0.0;
  double last_v_cmd = 1.5;
};

struct Command {
  double v_cmd;
  ControllerState state;
};

/// Velocity of the performance branch for a GD estimate.
inline double performance_velocity(const ControllerConfig& cfg, double gd_hat) {
  const double mid = 0.5 * (cfg.gd_min + cfg.gd_max);
  const double gd = std::clamp(gd_hat, cfg.gd_min, cfg.gd_max);
  const double raw = cfg.law == Law::Affine ? cfg.v_offset + cfg.kp * (mid - gd) : cfg.kp * (mid - gd);
  return std::clamp(raw, cfg.v_safety, cfg.v_max);
}

inline Command step(const ControllerConfig& cfg, const ControllerState& state, double gd_hat) {
  require(std::isfinite(gd_hat) && gd_hat >= 0, ErrorKind::InvalidArgument,
          "controller input must be a finite non-negative GD, got " + format_double(gd_hat));
  ControllerState next = state;
  next.last_gd = gd_hat;
  if (gd_hat > cfg.gd_max) {
    next.mode = Mode::Safety;
    next.last_v_cmd = cfg.v_safety;
  } else {
    next.mode = Mode::Performance;
    next.last_v_cmd = performance_velocity(cfg, gd_hat);
  }
  return {next.last_v_cmd, next};
}

/// As step, but leaving Safety needs gd_hat < gd_max - reentry_margin.
inline Command step_h(const ControllerConfig& cfg, const ControllerState& state, double gd_hat,
                      double reentry_margin) {
  require(std::isfinite(reentry_margin) && reentry_margin >= 0, ErrorKind::InvalidArgument,
          "re-entry margin must be non-negative");
  if (state.mode == Mode::Safety && gd_hat <= cfg.gd_max && !(gd_hat < cfg.gd_max - reentry_margin)) {
    require(std::isfinite(gd_hat) && gd_hat >= 0, ErrorKind::InvalidArgument,
            "controller input must be a finite non-negative GD, got " + format_double(gd_hat));
    ControllerState next = state;
    next.last_gd = gd_hat;
    next.last_v_cmd = cfg.v_safety;
    return {cfg.v_safety, next};
  }
  return step(cfg, state, gd_hat);
}

}  // namespace roughcal::control
