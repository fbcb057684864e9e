#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "roughcal/calibrate.hpp"
#include "roughcal/config.hpp"
#include "roughcal/control.hpp"
#include "roughcal/core.hpp"
#include "roughcal/design.hpp"
#include "roughcal/emulator.hpp"
#include "roughcal/io.hpp"
#include "roughcal/loop.hpp"
#include "roughcal/terrain.hpp"
#include "roughcal/vehicle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roughcal;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingArtifact:
    case ErrorKind::LoadFailed:
      return 3;
    case ErrorKind::IntegrationDiverged:
    case ErrorKind::TrainingFailed:
    case ErrorKind::CalibrationDegenerate:
      return 4;
    default:
      return 2;
  }
}

/// What a command produced, for the manifest and --json-summary.
struct Outcome {
  json summary = json::object();
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
};

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

json digests(const std::vector<std::string>& paths) {
  json j = json::object();
  for (const auto& p : paths) j[p] = fs::exists(p) ? io::file_digest(p) : std::string("missing");
  return j;
}

void write_manifest(const std::vector<std::string>& args, const config::Config& cfg, const Outcome& out,
                    double wall_s) {
  if (out.outputs.empty()) return;
  json m;
  m["tool"] = "roughcal";
  m["version"] = kVersion;
  m["cwd"] = fs::current_path().string();
  m["argv"] = args;
  m["config"] = config::to_ini(cfg);
  m["seeds"] = out.seeds;
  m["inputs"] = digests(out.inputs);
  m["outputs"] = digests(out.outputs);
  m["timings"] = {{"wall_s", wall_s}};
  io::write_file(manifest_path_for(out.outputs.front()), m.dump(2) + "\n");
}

std::string surrogate_hint(const std::string& path, char c) {
  const bool noisy = c == 'B';
  return "surrogate for case " + std::string(1, c) + " not found at " + path +
         "; build it with `roughcal design" + (noisy ? " --noise" : "") + " --out ts_" + std::string(1, c) +
         ".csv` followed by `roughcal train --training-set ts_" + std::string(1, c) + ".csv --out " + path + "`";
}

struct Cli {
  CLI::App app{"Road roughness calibration toolkit", "roughcal"};
  std::string config_path;
  std::vector<std::string> overrides;
  bool json_summary = false;
  std::optional<std::uint64_t> seed;

  // gen-terrain
  std::optional<double> gd, length, spacing;
  std::string out;
  // analyze
  std::string profile_path;
  // design / simulate
  std::optional<std::size_t> n;
  bool noise = false;
  std::optional<unsigned> threads;
  std::optional<double> v;
  // train
  std::string training_set;
  std::optional<std::size_t> iters;
  bool pin_nugget = false;
  // calibrate
  std::string surrogate;
  std::optional<double> f;
  std::optional<std::size_t> n_samples;
  // run-loop
  std::string case_name = "A";
  std::string artifacts = ".";
  std::optional<std::uint64_t> track_seed, noise_seed;
  std::optional<std::size_t> delay;
  // assess
  std::vector<double> v_list{0.75, 1.25, 1.75};
  std::vector<double> gd_list{250, 300, 350, 400, 450, 500, 550};
  std::size_t reps = 1;
  std::string samples_out;
  // eval-rmse
  std::string trace;
  std::optional<bool> exclude_boundary;
  // replay
  std::string manifest;

  CLI::App* gen = nullptr;
  CLI::App* analyze = nullptr;
  CLI::App* design = nullptr;
  CLI::App* simulate = nullptr;
  CLI::App* train = nullptr;
  CLI::App* calib = nullptr;
  CLI::App* runloop = nullptr;
  CLI::App* assess = nullptr;
  CLI::App* rmse = nullptr;
  CLI::App* replay = nullptr;

  Cli() {
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    app.add_option("--config", config_path, "shared INI config file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override a config value: section.key=value");
    app.add_flag("--json-summary", json_summary, "print a machine-readable summary");
    app.add_option("--seed", seed, "main seed of the command");

    gen = app.add_subcommand("gen-terrain", "generate a road profile");
    gen->add_option("--gd", gd, "target GD");
    gen->add_option("--length", length, "length in m");
    gen->add_option("--spacing", spacing, "grid pitch in m");
    gen->add_option("--out", out, "profile CSV")->required();

    analyze = app.add_subcommand("analyze", "estimate and classify GD of a profile");
    analyze->add_option("profile", profile_path, "profile CSV")->required()->check(CLI::ExistingFile);

    design = app.add_subcommand("design", "LHS design and training-set simulation");
    design->add_option("--n", n, "number of design points");
    design->add_flag("--noise", noise, "add measurement noise (Case B training set)");
    design->add_option("--threads", threads, "worker threads (0 = hardware)");
    design->add_option("--out", out, "training-set CSV")->required();

    simulate = app.add_subcommand("simulate", "run the half car over a profile");
    simulate->add_option("--profile", profile_path, "profile CSV")->required();
    simulate->add_option("--v", v, "constant speed in m/s")->required();
    simulate->add_flag("--noise", noise, "add measurement noise");
    simulate->add_option("--out", out, "IMU CSV")->required();

    train = app.add_subcommand("train", "fit the GP surrogate");
    train->add_option("--training-set", training_set, "training-set CSV")->required();
    train->add_option("--iters", iters, "MCMC iterations for the hyperparameters");
    train->add_flag("--pin-nugget", pin_nugget, "keep the nugget at its floor (interpolating emulator)");
    train->add_option("--out", out, "surrogate file")->required();

    calib = app.add_subcommand("calibrate", "posterior over GD for one observation");
    calib->add_option("--surrogate", surrogate, "surrogate file")->required();
    calib->add_option("--f", f, "observed metric f")->required();
    calib->add_option("--v", v, "known speed in m/s")->required();
    calib->add_option("--n-samples", n_samples, "buffer length behind f");
    calib->add_option("--out", out, "posterior CSV");

    runloop = app.add_subcommand("run-loop", "closed-loop run over a track");
    runloop->add_option("--case", case_name, "A (no noise) or B (noise)")->check(CLI::IsMember({"A", "B"}));
    runloop->add_option("--surrogate", surrogate, "surrogate file (default <artifacts>/surrogate_<case>.json)");
    runloop->add_option("--artifacts", artifacts, "directory holding surrogate_A.json / surrogate_B.json");
    runloop->add_option("--track-seed", track_seed, "track realization seed");
    runloop->add_option("--noise-seed", noise_seed, "measurement noise seed");
    runloop->add_option("--delay", delay, "calibration latency in samples");
    runloop->add_option("--out", out, "trace CSV")->required();

    assess = app.add_subcommand("assess", "grid assessment of calibration accuracy");
    assess->add_option("--surrogate", surrogate, "surrogate file")->required();
    assess->add_option("--v-list", v_list, "velocities")->delimiter(',');
    assess->add_option("--gd-list", gd_list, "GD values")->delimiter(',');
    assess->add_option("--reps", reps, "repetitions per cell");
    assess->add_option("--samples-out", samples_out, "posterior draws per cell (CSV)");
    assess->add_option("--out", out, "assessment CSV")->required();

    rmse = app.add_subcommand("eval-rmse", "per-roughness RMSE of a loop trace");
    rmse->add_option("--trace", trace, "trace CSV")->required()->check(CLI::ExistingFile);
    rmse->add_option("--exclude-boundary", exclude_boundary, "skip windows that straddle a segment boundary");

    replay = app.add_subcommand("replay", "re-run a command from its manifest and compare outputs");
    replay->add_option("--manifest", manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
  }
};

config::Config load_config(const Cli& cli) {
  auto cfg = config::load(cli.config_path);
  for (const auto& o : cli.overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    require(eq != std::string::npos && dot != std::string::npos && dot < eq, ErrorKind::InvalidArgument,
            "--set expects section.key=value, got '" + o + "'");
    config::set(cfg, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
  }
  return cfg;
}

Outcome cmd_gen(const Cli& cli, config::Config& cfg) {
  if (cli.gd) cfg.terrain.gd_target = *cli.gd;
  if (cli.length) cfg.terrain.length_m = *cli.length;
  if (cli.spacing) cfg.terrain.spacing_m = *cli.spacing;
  if (cli.seed) cfg.terrain.seed = *cli.seed;
  const auto profile = terrain::generate_profile(cfg.terrain);
  io::write_file(cli.out, io::profile_csv(profile));
  Outcome o;
  o.outputs = {cli.out};
  o.seeds["terrain"] = cfg.terrain.seed;
  o.summary = {{"samples", profile.size()}, {"length_m", profile.length()}, {"gd_target", cfg.terrain.gd_target}};
  return o;
}

Outcome cmd_analyze(const Cli& cli, config::Config& cfg) {
  const auto profile = io::parse_profile(io::read_file(cli.profile_path));
  const auto est = terrain::estimate_psd(profile, cfg.terrain.band);
  const auto cls = terrain::classify(est.gd_fitted);
  Outcome o;
  o.inputs = {cli.profile_path};
  o.summary = {{"gd_fitted", est.gd_fitted}, {"slope", est.slope}, {"class", std::string(1, cls.label)},
               {"samples", profile.size()}};
  return o;
}

Outcome cmd_design(const Cli& cli, config::Config& cfg) {
  if (cli.n) cfg.design.n = *cli.n;
  if (cli.seed) cfg.design.seed = *cli.seed;
  if (cli.threads) cfg.design.threads = *cli.threads;
  if (cli.noise) cfg.noise.enabled = true;
  const auto points = design::lhs_design(cfg.design.n, cfg.design.prior, cfg.design.seed);
  const auto ts = design::build_training_set(points, cfg.design.prior, cfg.design.run, cfg.vehicle, cfg.noise,
                                             cfg.design.threads);
  io::save_training_set(ts, cli.out);
  double fmin = *ts.points.front().f, fmax = fmin;
  for (const auto& p : ts.points) {
    fmin = std::min(fmin, *p.f);
    fmax = std::max(fmax, *p.f);
  }
  Outcome o;
  o.outputs = {cli.out, io::meta_path(cli.out)};
  o.seeds["design"] = cfg.design.seed;
  o.seeds["noise"] = cfg.noise.seed;
  o.summary = {{"points", ts.points.size()}, {"noise", cfg.noise.enabled}, {"f_min", fmin}, {"f_max", fmax}};
  return o;
}

Outcome cmd_simulate(const Cli& cli, config::Config& cfg) {
  if (cli.noise) cfg.noise.enabled = true;
  if (cli.seed) cfg.noise.seed = *cli.seed;
  const auto profile = io::parse_profile(io::read_file(cli.profile_path));
  const auto imu = vehicle::simulate(profile, *cli.v, cfg.vehicle, cfg.sample_rate_hz, cfg.noise, cfg.dt_internal);
  io::write_file(cli.out, io::imu_csv(imu));
  Outcome o;
  o.inputs = {cli.profile_path};
  o.outputs = {cli.out};
  o.seeds["noise"] = cfg.noise.seed;
  o.summary = {{"samples", imu.size()}, {"f", design::metric_f(imu.a_front)}, {"v", *cli.v}};
  return o;
}

Outcome cmd_train(const Cli& cli, config::Config& cfg) {
  if (cli.iters) cfg.emulator.iters = *cli.iters;
  if (cli.seed) cfg.emulator.seed = *cli.seed;
  if (cli.pin_nugget) cfg.emulator.estimate_nugget = false;
  const auto ts = io::load_training_set(cli.training_set);
  emulator::TrainReport rep;
  const auto s = emulator::train(ts, cfg.emulator, &rep);
  emulator::save(s, cli.out);
  const auto loo = s.leave_one_out();
  std::vector<double> err;
  for (const auto& l : loo) err.push_back(std::abs(l.f_pred - l.f_true));
  std::sort(err.begin(), err.end());
  Outcome o;
  o.inputs = {cli.training_set, io::meta_path(cli.training_set)};
  o.outputs = {cli.out};
  o.seeds["emulator"] = cfg.emulator.seed;
  const auto& h = s.hyper();
  o.summary = {{"beta_v", h.beta_v},       {"beta_gd", h.beta_gd},
               {"lambda_z", h.lambda_z},   {"lambda_n", h.lambda_n},
               {"acceptance", rep.acceptance_rate}, {"loo_median_abs_error", err[err.size() / 2]},
               {"noise", s.meta().noise_enabled}};
  return o;
}

emulator::Surrogate load_surrogate(const std::string& path, const config::Config& cfg, Outcome& o) {
  auto res = emulator::load(path, cfg.design.prior);
  for (auto& w : res.warnings) o.warnings.push_back(std::move(w));
  o.inputs.push_back(path);
  return std::move(res.surrogate);
}

Outcome cmd_calibrate(const Cli& cli, config::Config& cfg) {
  if (cli.seed) cfg.mcmc.seed = *cli.seed;
  Outcome o;
  const auto s = load_surrogate(cli.surrogate, cfg, o);
  const calibrate::Observation obs{*cli.f, *cli.v, cli.n_samples.value_or(cfg.loop.buffer_len)};
  const auto post = calibrate::calibrate(s, obs, cfg.mcmc);
  if (!cli.out.empty()) {
    io::write_file(cli.out, io::posterior_csv(post));
    o.outputs = {cli.out};
  }
  o.seeds["mcmc"] = cfg.mcmc.seed;
  o.summary = {{"gd_hat", post.mean},   {"std", post.std},         {"q025", post.q025},
               {"q50", post.q50},       {"q975", post.q975},       {"acceptance_rate", post.acceptance_rate},
               {"n_samples", post.samples.size()}, {"flags", post.flags.to_string()}};
  return o;
}

Outcome cmd_run_loop(const Cli& cli, config::Config& cfg) {
  const char c = cli.case_name.front();
  const std::string path =
      cli.surrogate.empty() ? (fs::path(cli.artifacts) / ("surrogate_" + cli.case_name + ".json")).string()
                            : cli.surrogate;
  if (!fs::exists(path)) throw Error(ErrorKind::MissingArtifact, surrogate_hint(path, c));
  if (cli.seed) cfg.loop.seed = *cli.seed;
  if (cli.track_seed) cfg.track.seed = *cli.track_seed;
  if (cli.delay) cfg.loop.delay_samples = *cli.delay;
  cfg.loop.noise = cfg.noise;
  cfg.loop.noise.enabled = c == 'B';
  if (cli.noise_seed) cfg.loop.noise.seed = *cli.noise_seed;

  Outcome o;
  const auto s = load_surrogate(path, cfg, o);
  const auto res = loop::run(cfg.track, cfg.loop, cfg.vehicle, s, cfg.mcmc, cfg.control);
  for (const auto& w : res.warnings) o.warnings.push_back(w);
  io::write_file(cli.out, io::trace_csv(res.records));
  o.outputs = {cli.out};
  o.seeds["loop"] = cfg.loop.seed;
  o.seeds["track"] = cfg.track.seed;
  o.seeds["noise"] = cfg.loop.noise.seed;
  o.seeds["mcmc"] = cfg.mcmc.seed;
  json groups = json::array();
  for (const auto& g : loop::evaluate_rmse(res.records, cfg.track, cfg.exclude_boundary))
    groups.push_back({{"gd_true", g.gd_true}, {"rmse", g.rmse}, {"count", g.count}});
  o.summary = {{"case", cli.case_name},
               {"records", res.records.size()},
               {"mode_switches", loop::mode_switches(res.records)},
               {"control_law", std::string(control::to_string(cfg.control.law))},
               {"surrogate_digest", s.meta().config_digest},
               {"rmse", groups}};
  return o;
}

Outcome cmd_assess(const Cli& cli, config::Config& cfg) {
  calibrate::AssessmentConfig ac;
  ac.run = cfg.design.run;
  ac.params = cfg.vehicle;
  ac.mcmc = cfg.mcmc;
  Outcome o;
  const auto s = load_surrogate(cli.surrogate, cfg, o);
  ac.noise = cfg.noise;
  ac.noise.enabled = s.meta().noise_enabled;
  if (cli.seed) ac.seed = *cli.seed;
  const auto rows = calibrate::grid_assessment(s, cli.v_list, cli.gd_list, cli.reps, ac);
  io::write_file(cli.out, io::assessment_csv(rows));
  o.outputs = {cli.out};
  if (!cli.samples_out.empty()) {
    io::write_file(cli.samples_out, io::assessment_samples_csv(rows));
    o.outputs.push_back(cli.samples_out);
  }
  o.seeds["assess"] = ac.seed;
  o.seeds["mcmc"] = cfg.mcmc.seed;
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok() ? 0 : 1;
  o.summary = {{"rows", rows.size()}, {"failed", failed}};
  return o;
}

Outcome cmd_rmse(const Cli& cli, config::Config& cfg) {
  auto records = io::parse_trace(io::read_file(cli.trace));
  loop::reconstruct_window_starts(records, cfg.loop.buffer_len, cfg.sample_rate_hz);
  const bool excl = cli.exclude_boundary.value_or(cfg.exclude_boundary);
  Outcome o;
  o.inputs = {cli.trace};
  json groups = json::array();
  for (const auto& g : loop::evaluate_rmse(records, cfg.track, excl))
    groups.push_back({{"gd_true", g.gd_true}, {"rmse", g.rmse}, {"count", g.count}});
  o.summary = {{"exclude_boundary", excl}, {"rmse", groups}, {"mode_switches", loop::mode_switches(records)}};
  return o;
}

void print_summary(const Outcome& o, bool as_json, std::ostream& os) {
  if (as_json) {
    json j = o.summary;
    j["warnings"] = o.warnings;
    j["outputs"] = o.outputs;
    os << j.dump() << "\n";
    return;
  }
  for (const auto& [k, v] : o.summary.items()) os << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
  for (const auto& p : o.outputs) os << "wrote " << p << "\n";
}

int run(const std::vector<std::string>& args, bool record_manifest);

int cmd_replay(const Cli& cli) {
  const auto m = json::parse(io::read_file(cli.manifest));
  const auto argv = m.at("argv").get<std::vector<std::string>>();
  const auto recorded = m.at("outputs");
  const auto cwd = fs::current_path();
  fs::current_path(m.at("cwd").get<std::string>());
  int rc = 0;
  try {
    rc = run(argv, false);
  } catch (...) {
    fs::current_path(cwd);
    throw;
  }
  std::vector<std::string> mismatched;
  for (const auto& [path, digest] : recorded.items()) {
    const std::string now = fs::exists(path) ? io::file_digest(path) : "missing";
    if (now != digest.get<std::string>()) mismatched.push_back(path);
  }
  fs::current_path(cwd);
  if (rc != 0) return rc;
  json out = {{"replayed", argv}, {"outputs", recorded.size()}, {"mismatched", mismatched},
              {"identical", mismatched.empty()}};
  if (cli.json_summary) {
    std::cout << out.dump() << "\n";
  } else {
    std::cout << (mismatched.empty() ? "replay identical: " : "replay differs: ") << recorded.size()
              << " output(s) checked\n";
    for (const auto& p : mismatched) std::cout << "  differs: " << p << "\n";
  }
  return mismatched.empty() ? 0 : 4;
}

int run(const std::vector<std::string>& args, bool record_manifest) {
  Cli cli;
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    cli.app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return cli.app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return cli.app.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.app.exit(e);
    return 2;
  }

  try {
    if (cli.replay->parsed()) return cmd_replay(cli);
    auto cfg = load_config(cli);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    if (cli.gen->parsed()) o = cmd_gen(cli, cfg);
    else if (cli.analyze->parsed()) o = cmd_analyze(cli, cfg);
    else if (cli.design->parsed()) o = cmd_design(cli, cfg);
    else if (cli.simulate->parsed()) o = cmd_simulate(cli, cfg);
    else if (cli.train->parsed()) o = cmd_train(cli, cfg);
    else if (cli.calib->parsed()) o = cmd_calibrate(cli, cfg);
    else if (cli.runloop->parsed()) o = cmd_run_loop(cli, cfg);
    else if (cli.assess->parsed()) o = cmd_assess(cli, cfg);
    else if (cli.rmse->parsed()) o = cmd_rmse(cli, cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& w : o.warnings) std::cerr << "warning: " << w << "\n";
    if (record_manifest) write_manifest(args, cfg, o, wall);
    print_summary(o, cli.json_summary, std::cout);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, true);
}
