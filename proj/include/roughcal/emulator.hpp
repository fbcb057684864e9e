#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "roughcal/core.hpp"
#include "roughcal/design.hpp"
#include "roughcal/priors.hpp"

namespace roughcal::emulator {

/// Squared-exponential GP hyperparameters on [0,1]^2-scaled inputs:
/// k(x, x') = exp(-beta_v dv^2 - beta_gd dgd^2) / lambda_z + [x = x'] / lambda_n.
struct SurrogateHyper {
  double beta_v = 2.0;
  double beta_gd = 2.0;
  double lambda_z = 1.0;
  double lambda_n = 1000.0;

  bool valid() const {
    for (double x : {beta_v, beta_gd, lambda_z, lambda_n})
      if (!std::isfinite(x) || x <= 0) return false;
    return true;
  }
  bool operator==(const SurrogateHyper&) const = default;
};

struct GammaPrior {
  double shape;
  double rate;
  double log_density(double x) const { return (shape - 1.0) * std::log(x) - rate * x; }
};

struct EmulatorConfig {
  std::size_t iters = 30000;
  std::uint64_t seed = 11;
  double nugget_floor = 1e-8;
  GammaPrior beta_prior{2.0, 1.0};
  GammaPrior lambda_z_prior{5.0, 5.0};
  GammaPrior lambda_n_prior{3.0, 0.003};
  double initial_step = 0.1;  // log-space random-walk std
  // false pins the nugget at the floor (interpolating emulator)
  bool estimate_nugget = true;

  std::string canonical() const {
    auto g = [](const GammaPrior& p) { return format_double(p.shape) + "," + format_double(p.rate); };
    return "iters=" + std::to_string(iters) + ";seed=" + std::to_string(seed) +
           ";floor=" + format_double(nugget_floor) + ";beta=" + g(beta_prior) + ";lz=" + g(lambda_z_prior) +
           ";ln=" + g(lambda_n_prior) + ";step=" + format_double(initial_step) +
           ";nugget=" + (estimate_nugget ? "est" : "floor") + ";";
  }
};

/// Training inputs in [0,1]^2 (v, gd) and standardized log outputs.
struct GpData {
  Eigen::MatrixX2d x;
  Eigen::VectorXd y;
};

inline Eigen::MatrixXd covariance(const Eigen::MatrixX2d& x, const SurrogateHyper& h, double nugget_floor) {
  const auto n = x.rows();
  Eigen::MatrixXd k(n, n);
  const double sig = 1.0 / h.lambda_z;
  const double diag = sig + 1.0 / h.lambda_n + nugget_floor;
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = diag;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double dv = x(i, 0) - x(j, 0);
      const double dg = x(i, 1) - x(j, 1);
      const double c = sig * std::exp(-h.beta_v * dv * dv - h.beta_gd * dg * dg);
      k(i, j) = c;
      k(j, i) = c;
    }
  }
  return k;
}

/// Gaussian log marginal likelihood; empty when the covariance is not PD.
inline std::optional<double> log_marginal_likelihood(const GpData& data, const SurrogateHyper& h,
                                                     double nugget_floor) {
  if (!h.valid()) return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(covariance(data.x, h, nugget_floor));
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd w = llt.matrixL().solve(data.y);
  double logdet = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  const double n = static_cast<double>(data.y.size());
  const double ll = -0.5 * w.squaredNorm() - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(ll)) return std::nullopt;
  return ll;
}

struct Prediction {
  double log_mean = 0.0;  // predictive mean of log f
  double log_sd = 0.0;    // latent GP sd of log f
  double nugget_sd = 0.0; // realization scatter of log f captured by the nugget
  bool outside_box = false;

  /// exp of the log-space mean.
  double mean() const { return std::exp(log_mean); }
  /// Lognormal spread implied by the latent log-space sd.
  double sd() const { return mean() * std::sqrt(std::expm1(log_sd * log_sd)); }
};

/// Provenance carried with a trained surrogate.
struct SurrogateMeta {
  std::string config_digest;
  bool noise_enabled = false;
  double noise_sigma = 0.0;
  bool operator==(const SurrogateMeta&) const = default;
};

struct LooResult {
  double f_true;
  double f_pred;
  double log_sd;
};

/// Trained GP emulator of log f over (v, gd). Immutable once built; the
/// Cholesky factor is recomputed from the stored data on construction.
class Surrogate {
 public:
  Surrogate(const PriorBox& prior, GpData data, double log_mean, double log_scale, const SurrogateHyper& hyper,
            double nugget_floor, SurrogateMeta meta = {})
      : prior_(prior),
        data_(std::move(data)),
        log_mean_(log_mean),
        log_scale_(log_scale),
        hyper_(hyper),
        nugget_floor_(nugget_floor),
        meta_(std::move(meta)) {
    prior_.validate();
    require(hyper_.valid(), ErrorKind::TrainingFailed, "surrogate hyperparameters must be positive and finite");
    require(data_.x.rows() == data_.y.size() && data_.y.size() >= 2, ErrorKind::TrainingFailed,
            "surrogate needs matching inputs and outputs");
    require(log_scale_ > 0 && std::isfinite(log_scale_), ErrorKind::TrainingFailed,
            "output scale must be positive");
    const Eigen::MatrixXd k = covariance(data_.x, hyper_, nugget_floor_);
    llt_.compute(k);
    if (llt_.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
      const auto ev = es.eigenvalues();
      throw Error(ErrorKind::TrainingFailed,
                  "training covariance is not positive definite (eigenvalues in [" + format_double(ev.minCoeff()) +
                      ", " + format_double(ev.maxCoeff()) + "], condition " +
                      format_double(ev.maxCoeff() / std::abs(ev.minCoeff())) + ")");
    }
    alpha_ = llt_.solve(data_.y);
  }

  const PriorBox& prior() const { return prior_; }
  const GpData& data() const { return data_; }
  const SurrogateHyper& hyper() const { return hyper_; }
  double log_mean_offset() const { return log_mean_; }
  double log_scale() const { return log_scale_; }
  double nugget_floor() const { return nugget_floor_; }
  const SurrogateMeta& meta() const { return meta_; }
  std::size_t size() const { return static_cast<std::size_t>(data_.y.size()); }

  std::array<double, 2> scale_inputs(double v, double gd) const {
    return {(v - prior_.v_min) / (prior_.v_max - prior_.v_min),
            (gd - prior_.gd_min) / (prior_.gd_max - prior_.gd_min)};
  }
  double standardize(double f) const { return (std::log(f) - log_mean_) / log_scale_; }
  double destandardize(double y) const { return std::exp(y * log_scale_ + log_mean_); }

  /// Training output f of point i, recovered from the stored standardized log.
  double training_f(std::size_t i) const { return destandardize(data_.y(static_cast<Eigen::Index>(i))); }

  Prediction predict(double v, double gd) const {
    const auto xs = scale_inputs(v, gd);
    const auto n = data_.x.rows();
    const double sig = 1.0 / hyper_.lambda_z;
    Eigen::VectorXd kstar(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dv = xs[0] - data_.x(i, 0);
      const double dg = xs[1] - data_.x(i, 1);
      kstar(i) = sig * std::exp(-hyper_.beta_v * dv * dv - hyper_.beta_gd * dg * dg);
    }
    const double mean_std = kstar.dot(alpha_);
    const Eigen::VectorXd w = llt_.matrixL().solve(kstar);
    const double var_std = std::max(sig - w.squaredNorm(), sig * 1e-12);

    Prediction p;
    p.log_mean = mean_std * log_scale_ + log_mean_;
    p.log_sd = std::sqrt(var_std) * log_scale_;
    p.nugget_sd = std::sqrt(1.0 / hyper_.lambda_n + nugget_floor_) * log_scale_;
    p.outside_box = !prior_.contains(v, gd);
    return p;
  }

  /// Closed-form leave-one-out predictions at the stored hyperparameters.
  std::vector<LooResult> leave_one_out() const {
    const auto n = data_.x.rows();
    const Eigen::MatrixXd kinv = llt_.solve(Eigen::MatrixXd::Identity(n, n));
    std::vector<LooResult> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = data_.y(i) - alpha_(i) / kinv(i, i);
      out.push_back({destandardize(data_.y(i)), destandardize(mu), std::sqrt(1.0 / kinv(i, i)) * log_scale_});
    }
    return out;
  }

  /// Same data, different hyperparameters.
  Surrogate with_hyper(const SurrogateHyper& h) const {
    return Surrogate(prior_, data_, log_mean_, log_scale_, h, nugget_floor_, meta_);
  }

 private:
  PriorBox prior_;
  GpData data_;
  double log_mean_;
  double log_scale_;
  SurrogateHyper hyper_;
  double nugget_floor_;
  SurrogateMeta meta_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

struct TrainReport {
  double acceptance_rate = 0.0;
  double final_step = 0.0;
  double log_likelihood = 0.0;
  std::vector<std::array<double, 4>> retained;  // natural-scale hyper samples
};

/// Scaled inputs and standardized log outputs of a training set.
inline GpData make_gp_data(const design::TrainingSet& ts, double& log_mean, double& log_scale) {
  const auto n = static_cast<Eigen::Index>(ts.points.size());
  GpData d{Eigen::MatrixX2d(n, 2), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = ts.points[static_cast<std::size_t>(i)];
    require(p.f && *p.f > 0 && std::isfinite(*p.f), ErrorKind::TrainingFailed,
            "training output " + std::to_string(i) + " must be positive for the log transform");
    d.x(i, 0) = (p.v - ts.prior.v_min) / (ts.prior.v_max - ts.prior.v_min);
    d.x(i, 1) = (p.gd - ts.prior.gd_min) / (ts.prior.gd_max - ts.prior.gd_min);
    d.y(i) = std::log(*p.f);
  }
  log_mean = d.y.mean();
  log_scale = std::sqrt((d.y.array() - log_mean).square().sum() / static_cast<double>(n));
  if (!(log_scale > 0)) log_scale = 1.0;
  d.y = (d.y.array() - log_mean) / log_scale;
  return d;
}

/// Precision standing in for "no nugget beyond the floor".
inline constexpr double kPinnedNuggetPrecision = 1e300;

inline double log_hyper_prior(const SurrogateHyper& h, const EmulatorConfig& cfg) {
  double lp = cfg.beta_prior.log_density(h.beta_v) + cfg.beta_prior.log_density(h.beta_gd) +
              cfg.lambda_z_prior.log_density(h.lambda_z);
  if (cfg.estimate_nugget) lp += cfg.lambda_n_prior.log_density(h.lambda_n);
  return lp;
}

/// Identifies the training configuration a surrogate came from.
inline std::string config_digest(const design::TrainingSet& ts, const EmulatorConfig& cfg) {
  return hex_digest(fnv1a(cfg.canonical() + ts.vehicle_digest + ts.terrain_digest +
                          (ts.noise.enabled ? "noise=1" : "noise=0")));
}

/// Random-walk Metropolis over the log hyperparameters. The proposal scale
/// adapts during the first half of the chain (which is discarded); the point
/// estimate is the mean of the retained samples.
inline Surrogate train(const design::TrainingSet& ts, const EmulatorConfig& cfg, TrainReport* report = nullptr) {
  ts.validate();
  require(cfg.iters >= 1000, ErrorKind::InvalidArgument,
          "emulator training needs at least 1000 iterations, got " + std::to_string(cfg.iters));
  double log_mean = 0, log_scale = 1;
  GpData data = make_gp_data(ts, log_mean, log_scale);

  const int dims = cfg.estimate_nugget ? 4 : 3;
  auto to_hyper = [&](const std::array<double, 4>& t) {
    return SurrogateHyper{std::exp(t[0]), std::exp(t[1]), std::exp(t[2]),
                          cfg.estimate_nugget ? std::exp(t[3]) : kPinnedNuggetPrecision};
  };
  // Log-space posterior including the log-transform Jacobian.
  auto log_post = [&](const std::array<double, 4>& t) {
    const auto h = to_hyper(t);
    const auto ll = log_marginal_likelihood(data, h, cfg.nugget_floor);
    if (!ll) return -std::numeric_limits<double>::infinity();
    double jac = 0.0;
    for (int k = 0; k < dims; ++k) jac += t[k];
    return *ll + log_hyper_prior(h, cfg) + jac;
  };

  Rng rng(cfg.seed);
  std::array<double, 4> cur{std::log(2.0), std::log(2.0), std::log(1.0), std::log(1000.0)};
  double cur_lp = log_post(cur);
  require(std::isfinite(cur_lp), ErrorKind::TrainingFailed, "initial hyperparameters give a non-PD covariance");

  const std::size_t burn = cfg.iters / 2;
  double step = cfg.initial_step;
  std::size_t accepted_window = 0, accepted_kept = 0;
  std::array<double, 4> sum{};
  std::vector<std::array<double, 4>> kept;
  kept.reserve(cfg.iters - burn);

  for (std::size_t it = 0; it < cfg.iters; ++it) {
    std::array<double, 4> prop = cur;
    for (int k = 0; k < dims; ++k) prop[k] = cur[k] + step * standard_normal(rng);
    const double prop_lp = log_post(prop);
    const double u = uniform01(rng);
    const bool accept = std::isfinite(prop_lp) && std::log(u) < prop_lp - cur_lp;
    if (accept) {
      cur = prop;
      cur_lp = prop_lp;
    }
    if (it < burn) {
      accepted_window += accept ? 1 : 0;
      if ((it + 1) % 100 == 0) {
        const double rate = static_cast<double>(accepted_window) / 100.0;
        if (rate < 0.15) step /= 1.2;
        else if (rate > 0.35) step *= 1.2;
        accepted_window = 0;
      }
    } else {
      accepted_kept += accept ? 1 : 0;
      const auto h = to_hyper(cur);
      const std::array<double, 4> nat{h.beta_v, h.beta_gd, h.lambda_z, h.lambda_n};
      for (int k = 0; k < 4; ++k) sum[k] += nat[k];
      kept.push_back(nat);
    }
  }

  const double m = static_cast<double>(kept.size());
  const SurrogateHyper point{sum[0] / m, sum[1] / m, sum[2] / m,
                             cfg.estimate_nugget ? sum[3] / m : kPinnedNuggetPrecision};
  const std::string digest = config_digest(ts, cfg);
  Surrogate s(ts.prior, std::move(data), log_mean, log_scale, point, cfg.nugget_floor,
              SurrogateMeta{digest, ts.noise.enabled, ts.noise.enabled ? ts.noise.sigma : 0.0});
  if (report) {
    report->acceptance_rate = static_cast<double>(accepted_kept) / m;
    report->final_step = step;
    report->log_likelihood = log_marginal_likelihood(s.data(), point, cfg.nugget_floor).value_or(
        -std::numeric_limits<double>::infinity());
    report->retained = std::move(kept);
  }
  return s;
}

// --- persistence ------------------------------------------------------------

inline constexpr std::string_view kSurrogateFormat = "roughcal-surrogate";
inline constexpr int kSurrogateVersion = 1;

inline nlohmann::json surrogate_payload(const Surrogate& s) {
  nlohmann::json j;
  const auto& p = s.prior();
  j["prior"] = {{"v_min", p.v_min}, {"v_max", p.v_max}, {"gd_min", p.gd_min}, {"gd_max", p.gd_max}};
  const auto& h = s.hyper();
  j["hyper"] = {{"beta_v", h.beta_v}, {"beta_gd", h.beta_gd}, {"lambda_z", h.lambda_z}, {"lambda_n", h.lambda_n}};
  j["standardization"] = {{"log_mean", s.log_mean_offset()}, {"log_scale", s.log_scale()}};
  j["nugget_floor"] = s.nugget_floor();
  j["config_digest"] = s.meta().config_digest;
  j["noise"] = {{"enabled", s.meta().noise_enabled}, {"sigma", s.meta().noise_sigma}};
  auto xs = nlohmann::json::array();
  auto ys = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.data().x.rows(); ++i) {
    xs.push_back({s.data().x(i, 0), s.data().x(i, 1)});
    ys.push_back(s.data().y(i));
  }
  j["inputs_scaled"] = std::move(xs);
  j["outputs_std"] = std::move(ys);
  return j;
}

inline std::string payload_digest(const nlohmann::json& payload) { return hex_digest(fnv1a(payload.dump())); }

inline std::string serialize(const Surrogate& s) {
  nlohmann::json doc;
  doc["format"] = kSurrogateFormat;
  doc["version"] = kSurrogateVersion;
  doc["payload"] = surrogate_payload(s);
  doc["digest"] = payload_digest(doc["payload"]);
  return doc.dump(1);
}

inline void save(const Surrogate& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::InvalidArgument, "cannot write surrogate file " + path);
  out << serialize(s) << '\n';
  require(static_cast<bool>(out), ErrorKind::InvalidArgument, "failed writing surrogate file " + path);
}

struct LoadResult {
  Surrogate surrogate;
  std::vector<std::string> warnings;
};

inline LoadResult deserialize(const std::string& text, const std::optional<PriorBox>& expected_prior = std::nullopt) {
  auto fail = [](const std::string& m) -> Error { return Error(ErrorKind::LoadFailed, m); };
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("surrogate file is not valid: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kSurrogateFormat) throw fail("not a surrogate file");
    if (doc.at("version").get<int>() != kSurrogateVersion)
      throw fail("surrogate version " + std::to_string(doc.at("version").get<int>()) + " unsupported (expected " +
                 std::to_string(kSurrogateVersion) + ")");
    const auto& payload = doc.at("payload");
    if (payload_digest(payload) != doc.at("digest").get<std::string>()) throw fail("surrogate digest mismatch");

    PriorBox prior{payload.at("prior").at("v_min").get<double>(), payload.at("prior").at("v_max").get<double>(),
                   payload.at("prior").at("gd_min").get<double>(), payload.at("prior").at("gd_max").get<double>()};
    const auto& hj = payload.at("hyper");
    SurrogateHyper hyper{hj.at("beta_v").get<double>(), hj.at("beta_gd").get<double>(),
                         hj.at("lambda_z").get<double>(), hj.at("lambda_n").get<double>()};
    const auto& xs = payload.at("inputs_scaled");
    const auto& ys = payload.at("outputs_std");
    if (xs.size() != ys.size()) throw fail("surrogate inputs and outputs differ in length");
    const auto n = static_cast<Eigen::Index>(xs.size());
    GpData data{Eigen::MatrixX2d(n, 2), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = xs.at(static_cast<std::size_t>(i));
      data.x(i, 0) = row.at(0).get<double>();
      data.x(i, 1) = row.at(1).get<double>();
      data.y(i) = ys.at(static_cast<std::size_t>(i)).get<double>();
    }
    LoadResult res{Surrogate(prior, std::move(data), payload.at("standardization").at("log_mean").get<double>(),
                             payload.at("standardization").at("log_scale").get<double>(), hyper,
                             payload.at("nugget_floor").get<double>(),
                             SurrogateMeta{payload.at("config_digest").get<std::string>(),
                                           payload.at("noise").at("enabled").get<bool>(),
                                           payload.at("noise").at("sigma").get<double>()}),
                   {}};
    if (expected_prior && !(*expected_prior == prior))
      res.warnings.push_back("surrogate prior box [" + format_double(prior.v_min) + ", " + format_double(prior.v_max) +
                             "] x [" + format_double(prior.gd_min) + ", " + format_double(prior.gd_max) +
                             "] differs from the runtime configuration");
    return res;
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("surrogate file is malformed: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::LoadFailed) throw;
    throw fail(std::string("surrogate file is inconsistent: ") + e.what());
  }
}

inline LoadResult load(const std::string& path, const std::optional<PriorBox>& expected_prior = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "surrogate file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), expected_prior);
}

}  // namespace roughcal::emulator
