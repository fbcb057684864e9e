#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "roughcal/design.hpp"
#include "support.hpp"

using namespace roughcal;
using namespace roughcal::design;

namespace {

void expect_one_per_stratum(const std::vector<DesignPoint>& pts, const PriorBox& box) {
  const auto n = pts.size();
  std::vector<int> v_hits(n, 0), g_hits(n, 0);
  for (const auto& p : pts) {
    const auto kv = static_cast<std::size_t>((p.v - box.v_min) / (box.v_max - box.v_min) * static_cast<double>(n));
    const auto kg = static_cast<std::size_t>((p.gd - box.gd_min) / (box.gd_max - box.gd_min) * static_cast<double>(n));
    ASSERT_LT(kv, n);
    ASSERT_LT(kg, n);
    ++v_hits[kv];
    ++g_hits[kg];
  }
  for (std::size_t k = 0; k < n; ++k) {
    EXPECT_EQ(v_hits[k], 1) << "v stratum " << k;
    EXPECT_EQ(g_hits[k], 1) << "gd stratum " << k;
  }
}

double two_pass_variance(const std::vector<double>& a) {
  long double mean = 0;
  for (double x : a) mean += x;
  mean /= static_cast<long double>(a.size());
  long double acc = 0;
  for (double x : a) acc += (x - mean) * (x - mean);
  return static_cast<double>(acc / static_cast<long double>(a.size()));
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

TrainingRunConfig short_run() {
  TrainingRunConfig r;
  r.length_m = 6.0;
  return r;
}

}  // namespace

TEST(Lhs, PaperSizeStrata) {
  const PriorBox box;
  const auto pts = lhs_design(198, box, 2024);
  ASSERT_EQ(pts.size(), 198u);
  expect_one_per_stratum(pts, box);
}

TEST(Lhs, StratumOccupancyForSeveralSizes) {
  const PriorBox box;
  for (std::size_t n : {2u, 10u, 198u})
    for (std::uint64_t seed : {1u, 2u, 3u}) expect_one_per_stratum(lhs_design(n, box, seed), box);
}

TEST(Lhs, MinimalDesignSplitsHalves) {
  const PriorBox box;
  const auto pts = lhs_design(2, box, 77);
  EXPECT_NE(pts[0].v < 1.25, pts[1].v < 1.25);
  EXPECT_NE(pts[0].gd < 400, pts[1].gd < 400);
}

TEST(Lhs, DeterministicAndRejectsTinyDesigns) {
  const PriorBox box;
  const auto a = lhs_design(50, box, 9), b = lhs_design(50, box, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].v, b[i].v);
    EXPECT_EQ(a[i].gd, b[i].gd);
    EXPECT_EQ(a[i].seed, b[i].seed);
  }
  EXPECT_THROW(lhs_design(1, box, 9), Error);
}

TEST(Metric, Examples) {
  const std::vector<double> c(10, 3.25), alt{1, -1, 1, -1}, two{0, 2};
  EXPECT_EQ(metric_f(c), 0.0);
  EXPECT_DOUBLE_EQ(metric_f(alt), 1.0);
  EXPECT_DOUBLE_EQ(metric_f(two), 1.0);
  const std::vector<double> one{1.0};
  try {
    metric_f(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(Metric, MatchesTwoPassVariance) {
  Rng rng(123);
  for (std::size_t len : {2u, 17u, 1000u, 100000u}) {
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> a(len);
      const double offset = 100.0 * standard_normal(rng);
      for (double& x : a) x = offset + 3.0 * standard_normal(rng);
      const double ref = two_pass_variance(a);
      EXPECT_NEAR(metric_f(a), ref, 1e-12 * ref) << len;
    }
  }
}

TEST(TrainingSet, EmptyDesignRejected) {
  const std::vector<DesignPoint> none;
  EXPECT_THROW(build_training_set(none, PriorBox{}, short_run(), vehicle::HalfCarParams{}, vehicle::NoiseSpec{}),
               Error);
}

TEST(TrainingSet, DeterministicAcrossThreadCounts) {
  const PriorBox box;
  const auto pts = lhs_design(12, box, 5);
  const auto a = build_training_set(pts, box, short_run(), vehicle::HalfCarParams{}, vehicle::NoiseSpec{}, 1);
  const auto b = build_training_set(pts, box, short_run(), vehicle::HalfCarParams{}, vehicle::NoiseSpec{}, 3);
  const auto c = build_training_set(pts, box, short_run(), vehicle::HalfCarParams{}, vehicle::NoiseSpec{}, 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(*a.points[i].f, *b.points[i].f);
    EXPECT_EQ(*a.points[i].f, *c.points[i].f);
  }
  EXPECT_EQ(a.vehicle_digest, b.vehicle_digest);
  EXPECT_EQ(a.terrain_digest, b.terrain_digest);
}

TEST(TrainingSet, NoisyVariantDiffers) {
  const PriorBox box;
  const auto pts = lhs_design(10, box, 6);
  const auto clean = build_training_set(pts, box, short_run(), vehicle::HalfCarParams{}, vehicle::NoiseSpec{});
  const auto noisy = build_training_set(pts, box, short_run(), vehicle::HalfCarParams{}, {true, 1.0, 7});
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_GT(*noisy.points[i].f, *clean.points[i].f * 0.5);
  EXPECT_TRUE(noisy.noise.enabled);
}

TEST(TrainingSet, ReferenceSetIsFiniteAndPositive) {
  const auto& ts = fixtures::reference_training_set(false);
  ASSERT_EQ(ts.points.size(), 198u);
  for (const auto& p : ts.points) {
    ASSERT_TRUE(p.f.has_value());
    EXPECT_TRUE(std::isfinite(*p.f));
    EXPECT_GT(*p.f, 0.0);
  }
}

TEST(TrainingSet, MetricRisesWithRoughnessAtFixedSpeed) {
  // Points are grouped into narrow speed bands so v is nearly fixed inside each.
  const auto& ts = fixtures::reference_training_set(false);
  auto pts = ts.points;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.v < b.v; });
  const std::size_t bands = 9, per = pts.size() / bands;
  double sum = 0;
  for (std::size_t b = 0; b < bands; ++b) {
    std::vector<double> gd, f;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      gd.push_back(pts[i].gd);
      f.push_back(*pts[i].f);
    }
    const double rho = spearman(gd, f);
    sum += rho;
    EXPECT_GT(rho, 0.5) << "band " << b;
  }
  EXPECT_GE(sum / static_cast<double>(bands), 0.8);
}

TEST(TrainingSet, ValidateRequiresTenFinitePoints) {
  TrainingSet ts;
  ts.points.resize(9, DesignPoint{1.0, 300.0, 1.0, 1});
  EXPECT_THROW(ts.validate(), Error);
  ts.points.resize(10, DesignPoint{1.0, 300.0, 1.0, 1});
  EXPECT_NO_THROW(ts.validate());
  ts.points[3].f = std::nan("");
  EXPECT_THROW(ts.validate(), Error);
}
