#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "roughcal/calibrate.hpp"
#include "roughcal/control.hpp"
#include "roughcal/core.hpp"
#include "roughcal/design.hpp"
#include "roughcal/emulator.hpp"
#include "roughcal/io.hpp"
#include "roughcal/loop.hpp"
#include "roughcal/terrain.hpp"
#include "roughcal/vehicle.hpp"

namespace roughcal::config {

struct DesignSettings {
  std::size_t n = 198;
  std::uint64_t seed = 2024;
  PriorBox prior;
  design::TrainingRunConfig run;
  unsigned threads = 0;
};

/// Everything the pipeline reads from the shared config file.
struct Config {
  terrain::RoadSpec terrain;
  vehicle::HalfCarParams vehicle;
  double sample_rate_hz = 120.0;
  double dt_internal = vehicle::kDefaultDt;
  vehicle::NoiseSpec noise{false, 1.0, 7};
  DesignSettings design;
  emulator::EmulatorConfig emulator;
  calibrate::McmcConfig mcmc;
  control::ControllerConfig control;
  loop::LoopConfig loop;
  loop::TrackSpec track = loop::paper_track();
  bool exclude_boundary = true;
};

inline std::string format_track(const std::vector<loop::Segment>& segs) {
  std::string s;
  for (const auto& g : segs) {
    if (!s.empty()) s += ',';
    s += format_double(g.length_m) + "@" + format_double(g.gd_true);
  }
  return s;
}

/// "50@300,50@500,50@300" -> segments (length@gd).
inline std::vector<loop::Segment> parse_track(const std::string& text) {
  std::vector<loop::Segment> out;
  for (const auto& part : io::split(text)) {
    const auto at = part.find('@');
    require(at != std::string::npos, ErrorKind::InvalidArgument,
            "track segment '" + part + "' must be written length@gd");
    out.push_back({parse_double(part.substr(0, at)), parse_double(part.substr(at + 1))});
  }
  return out;
}

namespace detail {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

inline bool parse_bool(const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw Error(ErrorKind::InvalidArgument, "'" + s + "' is not a boolean");
}

inline std::vector<Field> fields() {
  using C = Config;
  std::vector<Field> f;
  auto dbl = [&](const char* s, const char* k, std::function<double&(C&)> ref) {
    f.push_back({s, k, [ref](const C& c) { return format_double(ref(const_cast<C&>(c))); },
                 [ref](C& c, const std::string& v) { ref(c) = parse_double(v); }});
  };
  auto u64 = [&](const char* s, const char* k, std::function<std::uint64_t&(C&)> ref) {
    f.push_back({s, k, [ref](const C& c) { return std::to_string(ref(const_cast<C&>(c))); },
                 [ref](C& c, const std::string& v) { ref(c) = parse_u64(v); }});
  };
  auto size = [&](const char* s, const char* k, std::function<std::size_t&(C&)> ref) {
    f.push_back({s, k, [ref](const C& c) { return std::to_string(ref(const_cast<C&>(c))); },
                 [ref](C& c, const std::string& v) { ref(c) = static_cast<std::size_t>(parse_u64(v)); }});
  };
  auto flag = [&](const char* s, const char* k, std::function<bool&(C&)> ref) {
    f.push_back({s, k, [ref](const C& c) { return std::string(ref(const_cast<C&>(c)) ? "true" : "false"); },
                 [ref](C& c, const std::string& v) { ref(c) = parse_bool(v); }});
  };

  dbl("terrain", "gd", [](C& c) -> double& { return c.terrain.gd_target; });
  dbl("terrain", "length", [](C& c) -> double& { return c.terrain.length_m; });
  dbl("terrain", "spacing", [](C& c) -> double& { return c.terrain.spacing_m; });
  u64("terrain", "seed", [](C& c) -> std::uint64_t& { return c.terrain.seed; });
  dbl("terrain", "n_min", [](C& c) -> double& { return c.terrain.band.n_min; });
  dbl("terrain", "n_max", [](C& c) -> double& { return c.terrain.band.n_max; });

  dbl("vehicle", "m1", [](C& c) -> double& { return c.vehicle.m1; });
  dbl("vehicle", "m2", [](C& c) -> double& { return c.vehicle.m2; });
  dbl("vehicle", "m3", [](C& c) -> double& { return c.vehicle.m3; });
  dbl("vehicle", "I3", [](C& c) -> double& { return c.vehicle.I3; });
  dbl("vehicle", "K1", [](C& c) -> double& { return c.vehicle.K1; });
  dbl("vehicle", "K2", [](C& c) -> double& { return c.vehicle.K2; });
  dbl("vehicle", "C1", [](C& c) -> double& { return c.vehicle.C1; });
  dbl("vehicle", "C2", [](C& c) -> double& { return c.vehicle.C2; });
  dbl("vehicle", "kt1", [](C& c) -> double& { return c.vehicle.kt1; });
  dbl("vehicle", "kt2", [](C& c) -> double& { return c.vehicle.kt2; });
  dbl("vehicle", "ct1", [](C& c) -> double& { return c.vehicle.ct1; });
  dbl("vehicle", "ct2", [](C& c) -> double& { return c.vehicle.ct2; });
  dbl("vehicle", "b1", [](C& c) -> double& { return c.vehicle.b1; });
  dbl("vehicle", "b2", [](C& c) -> double& { return c.vehicle.b2; });
  dbl("vehicle", "sample_rate_hz", [](C& c) -> double& { return c.sample_rate_hz; });
  dbl("vehicle", "dt_internal", [](C& c) -> double& { return c.dt_internal; });
  flag("vehicle", "noise", [](C& c) -> bool& { return c.noise.enabled; });
  dbl("vehicle", "noise_sigma", [](C& c) -> double& { return c.noise.sigma; });
  u64("vehicle", "noise_seed", [](C& c) -> std::uint64_t& { return c.noise.seed; });

  size("design", "n", [](C& c) -> std::size_t& { return c.design.n; });
  u64("design", "seed", [](C& c) -> std::uint64_t& { return c.design.seed; });
  dbl("design", "v_min", [](C& c) -> double& { return c.design.prior.v_min; });
  dbl("design", "v_max", [](C& c) -> double& { return c.design.prior.v_max; });
  dbl("design", "gd_min", [](C& c) -> double& { return c.design.prior.gd_min; });
  dbl("design", "gd_max", [](C& c) -> double& { return c.design.prior.gd_max; });
  dbl("design", "run_length", [](C& c) -> double& { return c.design.run.length_m; });
  f.push_back({"design", "threads", [](const C& c) { return std::to_string(c.design.threads); },
               [](C& c, const std::string& v) { c.design.threads = static_cast<unsigned>(parse_u64(v)); }});

  size("emulator", "iters", [](C& c) -> std::size_t& { return c.emulator.iters; });
  u64("emulator", "seed", [](C& c) -> std::uint64_t& { return c.emulator.seed; });
  dbl("emulator", "nugget_floor", [](C& c) -> double& { return c.emulator.nugget_floor; });
  flag("emulator", "estimate_nugget", [](C& c) -> bool& { return c.emulator.estimate_nugget; });
  dbl("emulator", "beta_shape", [](C& c) -> double& { return c.emulator.beta_prior.shape; });
  dbl("emulator", "beta_rate", [](C& c) -> double& { return c.emulator.beta_prior.rate; });
  dbl("emulator", "lambda_z_shape", [](C& c) -> double& { return c.emulator.lambda_z_prior.shape; });
  dbl("emulator", "lambda_z_rate", [](C& c) -> double& { return c.emulator.lambda_z_prior.rate; });
  dbl("emulator", "lambda_n_shape", [](C& c) -> double& { return c.emulator.lambda_n_prior.shape; });
  dbl("emulator", "lambda_n_rate", [](C& c) -> double& { return c.emulator.lambda_n_prior.rate; });
  dbl("emulator", "initial_step", [](C& c) -> double& { return c.emulator.initial_step; });

  size("mcmc", "n_total", [](C& c) -> std::size_t& { return c.mcmc.n_total; });
  size("mcmc", "n_burn", [](C& c) -> std::size_t& { return c.mcmc.n_burn; });
  size("mcmc", "step_tune_iters", [](C& c) -> std::size_t& { return c.mcmc.step_tune_iters; });
  size("mcmc", "step_tune_burn", [](C& c) -> std::size_t& { return c.mcmc.step_tune_burn; });
  size("mcmc", "tune_block", [](C& c) -> std::size_t& { return c.mcmc.tune_block; });
  u64("mcmc", "seed", [](C& c) -> std::uint64_t& { return c.mcmc.seed; });
  dbl("mcmc", "initial_step_frac", [](C& c) -> double& { return c.mcmc.initial_step_frac; });
  dbl("mcmc", "lambda_obs_shape", [](C& c) -> double& { return c.mcmc.lambda_obs_shape; });
  dbl("mcmc", "lambda_obs_rate", [](C& c) -> double& { return c.mcmc.lambda_obs_rate; });

  dbl("control", "gd_min", [](C& c) -> double& { return c.control.gd_min; });
  dbl("control", "gd_max", [](C& c) -> double& { return c.control.gd_max; });
  dbl("control", "kp", [](C& c) -> double& { return c.control.kp; });
  dbl("control", "v_safety", [](C& c) -> double& { return c.control.v_safety; });
  dbl("control", "v_max", [](C& c) -> double& { return c.control.v_max; });
  dbl("control", "v_offset", [](C& c) -> double& { return c.control.v_offset; });
  f.push_back({"control", "law", [](const C& c) { return std::string(control::to_string(c.control.law)); },
               [](C& c, const std::string& v) { c.control.law = control::parse_law(v); }});
  dbl("control", "reentry_margin", [](C& c) -> double& { return c.loop.reentry_margin; });

  size("loop", "buffer_len", [](C& c) -> std::size_t& { return c.loop.buffer_len; });
  size("loop", "trigger_stride", [](C& c) -> std::size_t& { return c.loop.trigger_stride; });
  dbl("loop", "initial_v", [](C& c) -> double& { return c.loop.initial_v; });
  size("loop", "delay_samples", [](C& c) -> std::size_t& { return c.loop.delay_samples; });
  flag("loop", "retune_each", [](C& c) -> bool& { return c.loop.retune_each; });
  u64("loop", "seed", [](C& c) -> std::uint64_t& { return c.loop.seed; });
  f.push_back({"loop", "track", [](const C& c) { return format_track(c.track.segments); },
               [](C& c, const std::string& v) { c.track.segments = parse_track(v); }});
  u64("loop", "track_seed", [](C& c) -> std::uint64_t& { return c.track.seed; });
  flag("loop", "exclude_boundary", [](C& c) -> bool& { return c.exclude_boundary; });
  return f;
}

}  // namespace detail

/// Copies the shared vehicle settings into the per-stage structures.
inline void propagate(Config& c) {
  c.design.run.spacing_m = c.terrain.spacing_m;
  c.design.run.band = c.terrain.band;
  c.design.run.sample_rate_hz = c.sample_rate_hz;
  c.design.run.dt_internal = c.dt_internal;
  c.loop.sample_rate_hz = c.sample_rate_hz;
  c.loop.dt_internal = c.dt_internal;
  c.track.spacing_m = c.terrain.spacing_m;
  c.track.band = c.terrain.band;
}

inline void set(Config& c, const std::string& section, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields()) {
    if (f.section == section && f.key == key) {
      f.set(c, value);
      propagate(c);
      return;
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown config key [" + section + "] " + key);
}

inline std::string get(const Config& c, const std::string& section, const std::string& key) {
  for (const auto& f : detail::fields())
    if (f.section == section && f.key == key) return f.get(c);
  throw Error(ErrorKind::InvalidArgument, "unknown config key [" + section + "] " + key);
}

inline Config parse(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config file: ") + e.what());
  }
  Config c;
  for (const auto& [section, body] : tree) {
    require(!body.empty() || !body.data().empty(), ErrorKind::InvalidArgument,
            "config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set(c, section, key, value.data());
  }
  propagate(c);
  return c;
}

inline Config load(const std::string& path) {
  if (path.empty()) {
    Config c;
    propagate(c);
    return c;
  }
  return parse(io::read_file(path));
}

/// Full snapshot in the same INI format the loader accepts.
inline std::string to_ini(const Config& c) {
  std::string out, current;
  for (const auto& f : detail::fields()) {
    if (f.section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

}  // namespace roughcal::config
