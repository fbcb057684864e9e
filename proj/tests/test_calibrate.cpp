#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>

#include "roughcal/calibrate.hpp"
#include "support.hpp"

using namespace roughcal;
using namespace roughcal::calibrate;

namespace {

const emulator::Surrogate& sur() { return fixtures::reference_surrogate(false); }

Observation synthetic(double v, double gd) { return {sur().predict(v, gd).mean(), v, 1000}; }

// Posterior mean of GD by direct quadrature: uniform prior times the emulator
// likelihood with lambda_obs integrated out against its Gamma prior.
double grid_posterior_mean(const emulator::Surrogate& s, const Observation& obs, const McmcConfig& cfg) {
  const auto& box = s.prior();
  const int n_gd = 400, n_lam = 3000;
  const double lo = std::log(1e-6), hi = std::log(1e9), dl = (hi - lo) / n_lam;
  std::vector<double> logw(n_gd), gds(n_gd);
  for (int i = 0; i < n_gd; ++i) {
    const double gd = box.gd_min + (i + 0.5) * (box.gd_max - box.gd_min) / n_gd;
    const auto p = s.predict(obs.v, gd);
    const double base = p.log_sd * p.log_sd + p.nugget_sd * p.nugget_sd;
    const double r = std::log(obs.f_obs) - p.log_mean;
    // integrate over t = log lambda with the Jacobian lambda
    std::vector<double> terms(n_lam);
    for (int j = 0; j < n_lam; ++j) {
      const double t = lo + (j + 0.5) * dl;
      const double lam = std::exp(t);
      const double var = base + 1.0 / lam;
      terms[static_cast<std::size_t>(j)] = -0.5 * r * r / var - 0.5 * std::log(2 * std::numbers::pi * var) +
                                           cfg.lambda_obs_shape * t - cfg.lambda_obs_rate * lam;
    }
    const double m = *std::max_element(terms.begin(), terms.end());
    double acc = 0;
    for (double x : terms) acc += std::exp(x - m);
    logw[static_cast<std::size_t>(i)] = m + std::log(acc * dl);
    gds[static_cast<std::size_t>(i)] = gd;
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  double z = 0, num = 0;
  for (int i = 0; i < n_gd; ++i) {
    const double w = std::exp(logw[static_cast<std::size_t>(i)] - m);
    z += w;
    num += w * gds[static_cast<std::size_t>(i)];
  }
  return num / z;
}

double median_abs(const std::vector<AssessmentRow>& rows, double v, double gd) {
  std::vector<double> e;
  for (const auto& r : rows)
    if (r.v == v && r.gd_true == gd && r.ok()) e.push_back(std::abs(r.pct_err));
  std::sort(e.begin(), e.end());
  return e.empty() ? std::nan("") : e[e.size() / 2];
}

}  // namespace

TEST(Calibrate, InteriorSyntheticObservation) {
  const auto post = calibrate::calibrate(sur(), synthetic(1.25, 400), McmcConfig{});
  EXPECT_NEAR(post.mean, 400, 0.15 * 400);
  EXPECT_EQ(post.samples.size(), 4000u);
  EXPECT_EQ(post.lambda_obs.size(), 4000u);
}

TEST(Calibrate, PosteriorInvariants) {
  for (auto [v, gd] : {std::pair{1.25, 400.0}, {0.75, 300.0}, {1.75, 500.0}, {1.0, 250.0}}) {
    const auto post = calibrate::calibrate(sur(), synthetic(v, gd), McmcConfig{});
    const auto [mn, mx] = std::minmax_element(post.samples.begin(), post.samples.end());
    EXPECT_GE(*mn, 200.0);
    EXPECT_LE(*mx, 600.0);
    EXPECT_GE(post.mean, *mn);
    EXPECT_LE(post.mean, *mx);
    EXPECT_LE(post.q025, post.q50);
    EXPECT_LE(post.q50, post.q975);
    EXPECT_GE(post.acceptance_rate, 0.1);
    EXPECT_LE(post.acceptance_rate, 0.7);
    EXPECT_GT(post.std, 0.0);
  }
}

TEST(Calibrate, RetainedCountFollowsConfig) {
  McmcConfig cfg;
  cfg.n_total = 1500;
  cfg.n_burn = 300;
  EXPECT_EQ(calibrate::calibrate(sur(), synthetic(1.0, 350), cfg).samples.size(), 1200u);
}

TEST(Calibrate, DeterministicChain) {
  const auto a = calibrate::calibrate(sur(), synthetic(1.5, 450), McmcConfig{});
  const auto b = calibrate::calibrate(sur(), synthetic(1.5, 450), McmcConfig{});
  EXPECT_EQ(a.samples, b.samples);
  McmcConfig other;
  other.seed = 4;
  EXPECT_NE(a.samples, calibrate::calibrate(sur(), synthetic(1.5, 450), other).samples);
}

TEST(Calibrate, UntunedChainKeepsInitialStep) {
  McmcConfig cfg;
  cfg.tune = false;
  cfg.initial_step_frac = 0.08;
  const auto post = calibrate::calibrate(sur(), synthetic(1.25, 400), cfg);
  EXPECT_EQ(post.final_step, 0.08);
  EXPECT_EQ(post.samples.size(), 4000u);
  EXPECT_NEAR(post.mean, 400, 0.15 * 400);
}

TEST(Calibrate, MatchesGridIntegration) {
  const McmcConfig cfg;
  for (auto [v, gd] : {std::pair{1.25, 400.0}, {0.75, 300.0}, {1.75, 500.0}}) {
    const auto obs = synthetic(v, gd);
    const double oracle = grid_posterior_mean(sur(), obs, cfg);
    const double mcmc = calibrate::calibrate(sur(), obs, cfg).mean;
    EXPECT_NEAR(mcmc, oracle, 0.02 * oracle) << "v=" << v << " gd=" << gd;
  }
}

TEST(Calibrate, MonotoneInObservedMetric) {
  for (double v : {0.8, 1.25, 1.7}) {
    const double fa = sur().predict(v, 300).mean(), fb = sur().predict(v, 480).mean();
    ASSERT_LT(fa, fb);
    const double ma = calibrate::calibrate(sur(), {fa, v, 1000}, McmcConfig{}).mean;
    const double mb = calibrate::calibrate(sur(), {fb, v, 1000}, McmcConfig{}).mean;
    EXPECT_LE(ma, mb + 0.05 * 400);
  }
}

TEST(Calibrate, ZeroMetricPilesAtLowerBound) {
  const auto post = calibrate::calibrate(sur(), {0.0, 1.0, 1000}, McmcConfig{});
  ASSERT_EQ(post.samples.size(), 4000u);
  for (double s : post.samples) EXPECT_EQ(s, 200.0);
  EXPECT_TRUE(post.flags.boundary_pileup);
  EXPECT_TRUE(post.flags.degenerate_observation);
}

TEST(Calibrate, NoAcceptedMoveIsDegenerate) {
  McmcConfig cfg;
  cfg.initial_step_frac = 1e6;  // every proposal leaves the box
  try {
    calibrate::calibrate(sur(), synthetic(1.0, 400), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CalibrationDegenerate);
  }
}

TEST(Calibrate, VelocityOutsideBoxIsFlagged) {
  const auto post = calibrate::calibrate(sur(), {sur().predict(2.0, 400).mean(), 2.2, 1000}, McmcConfig{});
  EXPECT_TRUE(post.flags.velocity_outside_box);
}

TEST(Calibrate, InvalidInputs) {
  EXPECT_THROW(calibrate::calibrate(sur(), {-1.0, 1.0, 1000}, McmcConfig{}), Error);
  EXPECT_THROW(calibrate::calibrate(sur(), {1.0, 0.0, 1000}, McmcConfig{}), Error);
  EXPECT_THROW(calibrate::calibrate(sur(), {1.0, 1.0, 1}, McmcConfig{}), Error);
  McmcConfig bad;
  bad.n_burn = bad.n_total;
  EXPECT_THROW(calibrate::calibrate(sur(), {1.0, 1.0, 1000}, bad), Error);
}

TEST(Summary, DegenerateSamples) {
  const std::vector<double> s(500, 400.0);
  const auto sum = posterior_summary(s, 200, 600);
  EXPECT_EQ(sum.gd_hat, 400.0);
  EXPECT_EQ(sum.spread, 0.0);
  EXPECT_FALSE(sum.flags.any());
}

TEST(Summary, UniformSamples) {
  const auto s = gd_prior().sample(3, 20000);
  const auto sum = posterior_summary(s, 200, 600);
  EXPECT_NEAR(sum.gd_hat, 400, 4.0);
  EXPECT_NEAR(sum.spread, 400 / std::sqrt(12.0), 3.0);
  EXPECT_FALSE(sum.flags.boundary_pileup);
  EXPECT_FALSE(sum.flags.multimodal);
}

TEST(Summary, BoundaryPileup) {
  std::vector<double> s;
  for (int i = 0; i < 300; ++i) s.push_back(200 + 8.0 * i / 300.0);
  for (int i = 0; i < 700; ++i) s.push_back(380 + 40.0 * i / 700.0);
  EXPECT_TRUE(posterior_summary(s, 200, 600).flags.boundary_pileup);
}

TEST(Summary, MultimodalityCheck) {
  Rng rng(1);
  std::vector<double> one, two;
  for (int i = 0; i < 4000; ++i) {
    one.push_back(400 + 20 * standard_normal(rng));
    two.push_back((i % 2 ? 280 : 520) + 15 * standard_normal(rng));
  }
  EXPECT_FALSE(multimodal(one));
  EXPECT_TRUE(multimodal(two));
}

TEST(Assessment, EmptyListGivesEmptyTable) {
  const std::vector<double> none, gds{300};
  EXPECT_TRUE(grid_assessment(sur(), none, gds, 3, AssessmentConfig{}).empty());
}

TEST(Assessment, ListsMustLieInBox) {
  const std::vector<double> vs{2.5}, gds{300};
  EXPECT_THROW(grid_assessment(sur(), vs, gds, 1, AssessmentConfig{}), Error);
}

TEST(Assessment, InteriorCellBeatsCorner) {
  const std::vector<double> vs1{1.25}, gd1{400}, vs2{0.75}, gd2{250};
  const auto a = grid_assessment(sur(), vs1, gd1, 3, AssessmentConfig{});
  const auto b = grid_assessment(sur(), vs2, gd2, 3, AssessmentConfig{});
  ASSERT_EQ(a.size(), 3u);
  for (const auto& r : a) {
    EXPECT_TRUE(r.ok()) << r.error;
    EXPECT_EQ(r.samples.size(), 4000u);
  }
  EXPECT_LT(median_abs(a, 1.25, 400), median_abs(b, 0.75, 250));
}

TEST(Assessment, RowsAreReproducible) {
  const std::vector<double> vs{1.0}, gds{350, 450};
  const auto a = grid_assessment(sur(), vs, gds, 2, AssessmentConfig{});
  const auto b = grid_assessment(sur(), vs, gds, 2, AssessmentConfig{});
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].gd_hat, b[i].gd_hat);
    EXPECT_EQ(a[i].f_obs, b[i].f_obs);
  }
  EXPECT_NE(a[0].f_obs, a[1].f_obs);  // reps see different profiles
}
