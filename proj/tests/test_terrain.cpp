#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "roughcal/terrain.hpp"

using namespace roughcal;
using namespace roughcal::terrain;

namespace {

RoadSpec spec_at(double gd, std::uint64_t seed, double length = 100.0) {
  RoadSpec s;
  s.gd_target = gd;
  s.length_m = length;
  s.seed = seed;
  return s;
}

double variance(const std::vector<double>& h) {
  const double m = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(h.size());
  double acc = 0.0;
  for (double x : h) acc += (x - m) * (x - m);
  return acc / static_cast<double>(h.size());
}

}  // namespace

TEST(Generate, GridSizeAndSpacing) {
  const auto p = generate_profile(spec_at(450, 1));
  EXPECT_EQ(p.size(), static_cast<std::size_t>(std::ceil(100.0 / 0.006)) + 1);
  EXPECT_DOUBLE_EQ(p.spacing_m, 0.006);
  ASSERT_TRUE(p.spec.has_value());
}

TEST(Generate, SingleRealizationNearTarget) {
  const auto est = estimate_psd(generate_profile(spec_at(450, 42)));
  EXPECT_NEAR(est.gd_fitted, 450.0, 0.15 * 450.0);
}

TEST(Generate, DeterministicPerSeed) {
  const auto a = generate_profile(spec_at(450, 3));
  const auto b = generate_profile(spec_at(450, 3));
  const auto c = generate_profile(spec_at(450, 4));
  EXPECT_EQ(a.heights_m, b.heights_m);
  EXPECT_NE(a.heights_m, c.heights_m);
}

TEST(Generate, RejectsInvalidSpecs) {
  auto s = spec_at(-5, 1);
  try {
    generate_profile(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidSpec);
    EXPECT_NE(std::string(e.what()).find("gd must be positive"), std::string::npos);
  }
  s = spec_at(450, 1);
  s.band.n_max = 1.0 / (2 * s.spacing_m) + 1.0;
  EXPECT_THROW(generate_profile(s), Error);
  s = spec_at(450, 1);
  s.length_m = std::nan("");
  EXPECT_THROW(generate_profile(s), Error);
  s = spec_at(450, 1);
  s.band.n_min = 5;
  s.band.n_max = 1;
  EXPECT_THROW(generate_profile(s), Error);
}

TEST(Generate, ZeroMean) {
  const auto p = generate_profile(spec_at(300, 8));
  const double m = std::accumulate(p.heights_m.begin(), p.heights_m.end(), 0.0) / static_cast<double>(p.size());
  EXPECT_LT(std::abs(m), 1e-12);
}

TEST(Estimate, CosineHasAnalyticPower) {
  // 5000 samples at 6 mm span 30 m, so n0 = 0.1 sits on bin 3.
  const double a = 1e-3;
  std::vector<double> h(5000);
  for (std::size_t k = 0; k < h.size(); ++k)
    h[k] = a * std::cos(2 * std::numbers::pi * 0.1 * static_cast<double>(k) * 0.006);
  const auto est = estimate_psd(RoadProfile(h, 0.006));
  const auto peak = std::max_element(est.values.begin(), est.values.end()) - est.values.begin();
  EXPECT_NEAR(est.frequencies[static_cast<std::size_t>(peak)], 0.1, 1e-12);
  const double dn = est.frequencies[1] - est.frequencies[0];
  EXPECT_NEAR(est.values[static_cast<std::size_t>(peak)] * dn, a * a / 2, 1e-12 * a * a);
  double total = 0.0;
  for (double v : est.values) total += v * dn;
  EXPECT_NEAR(total, a * a / 2, 1e-12 * a * a);
}

TEST(Estimate, FlatProfileHasZeroGd) {
  const auto est = estimate_psd(RoadProfile::flat(10.0, 0.006));
  EXPECT_EQ(est.gd_fitted, 0.0);
}

TEST(Estimate, TooFewSamples) {
  try {
    estimate_psd(RoadProfile(std::vector<double>(63, 0.0), 0.006));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(Estimate, FrequenciesIncreasingValuesNonNegative) {
  const auto est = estimate_psd(generate_profile(spec_at(450, 9, 20)));
  for (std::size_t k = 0; k < est.frequencies.size(); ++k) {
    EXPECT_GT(est.frequencies[k], 0.0);
    EXPECT_GE(est.values[k], 0.0);
    if (k > 0) EXPECT_GT(est.frequencies[k], est.frequencies[k - 1]);
  }
  EXPECT_GE(est.gd_fitted, 0.0);
}

TEST(TerrainProperty, RoundTripMeanOverRealizations) {
  for (double gd : {300.0, 450.0, 500.0}) {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 30; ++s) sum += estimate_psd(generate_profile(spec_at(gd, 1000 + s))).gd_fitted;
    EXPECT_NEAR(sum / 30.0, gd, 0.10 * gd) << "gd=" << gd;
  }
}

TEST(TerrainProperty, ParsevalAgainstHeightVariance) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = generate_profile(spec_at(450, 70 + s, 50));
    const auto est = estimate_psd(p);
    const double dn = est.frequencies[1] - est.frequencies[0];
    double total = 0.0;
    for (double v : est.values) total += v * dn;
    EXPECT_NEAR(total, variance(p.heights_m), 0.05 * variance(p.heights_m));
  }
}

TEST(TerrainProperty, AmplitudeScalingIsQuadratic) {
  const auto p = generate_profile(spec_at(450, 12));
  const double g = estimate_psd(p).gd_fitted;
  for (double c : {0.5, 3.0, 10.0}) {
    auto h = p.heights_m;
    for (double& x : h) x *= c;
    const double gc = estimate_psd(RoadProfile(h, p.spacing_m, p.spec)).gd_fitted;
    EXPECT_NEAR(gc, c * c * g, 1e-9 * c * c * g);
  }
}

TEST(TerrainProperty, FittedSlopeNearMinusTwo) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto est = estimate_psd(generate_profile(spec_at(450, 200 + s)));
    EXPECT_GE(est.slope, -2.3);
    EXPECT_LE(est.slope, -1.7);
  }
}

TEST(Classify, TableBoundaries) {
  EXPECT_EQ(classify(450).label, 'C');
  EXPECT_EQ(classify(32).label, 'B');
  EXPECT_EQ(classify(31.999).label, 'A');
  EXPECT_EQ(classify(0).label, 'A');
  EXPECT_EQ(classify(200000).label, 'H');
  EXPECT_EQ(classify(131072).label, 'H');
  EXPECT_EQ(classify(128).gd_lower, 128);
  EXPECT_EQ(classify(128).gd_upper, 512);
  EXPECT_TRUE(std::isinf(classify(1e9).gd_upper));
}

TEST(Classify, RejectsNegative) {
  try {
    classify(-1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(Classify, TotalAndMonotone) {
  char prev = 'A';
  for (double g = 0; g < 3e5; g += 7.5) {
    const char c = classify(g).label;
    EXPECT_GE(c, prev);
    EXPECT_LE(c, 'H');
    prev = c;
  }
}

TEST(HeightAt, GridNodesMidpointsAndEnds) {
  const RoadProfile p({0.0, 0.002, 0.001, -0.003}, 0.006);
  EXPECT_EQ(height_at(p, 0.006), 0.002);
  EXPECT_EQ(height_at(p, 2 * 0.006), 0.001);
  EXPECT_NEAR(height_at(p, 0.003), 0.001, 1e-15);
  EXPECT_EQ(height_at(p, p.length()), -0.003);
  EXPECT_EQ(height_at(p, 0.0), 0.0);
}

TEST(HeightAt, OutsideIsOutOfRange) {
  const RoadProfile p({0.0, 1.0}, 0.5);
  for (double x : {-0.1, 0.6}) {
    try {
      height_at(p, x);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::OutOfRange);
    }
  }
}

TEST(Concat, PaperTrackLength) {
  std::vector<RoadProfile> segs;
  for (double gd : {300.0, 500.0, 300.0}) segs.push_back(generate_profile(spec_at(gd, 5, 50)));
  const auto track = concat_segments(segs);
  EXPECT_NEAR(track.length(), segs[0].length() + segs[1].length() + segs[2].length(), 1e-9);
  EXPECT_GE(track.length(), 150.0);
}

TEST(Concat, SingleIsIdentity) {
  const auto p = generate_profile(spec_at(300, 5, 10));
  const std::vector<RoadProfile> one{p};
  EXPECT_EQ(concat_segments(one).heights_m, p.heights_m);
}

TEST(Concat, ShiftsForContinuity) {
  const std::vector<RoadProfile> segs{RoadProfile({0.01, 0.01, 0.01}, 0.1), RoadProfile({-0.02, -0.02}, 0.1)};
  const auto j = concat_segments(segs);
  EXPECT_EQ(j.size(), 4u);
  for (double h : j.heights_m) EXPECT_DOUBLE_EQ(h, 0.01);
}

TEST(Concat, MismatchedSpacing) {
  const std::vector<RoadProfile> segs{RoadProfile({0, 0}, 0.1), RoadProfile({0, 0}, 0.2)};
  try {
    concat_segments(segs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(Profile, RejectsNonFiniteAndShort) {
  EXPECT_THROW(RoadProfile({0.0}, 0.006), Error);
  EXPECT_THROW(RoadProfile({0.0, std::nan("")}, 0.006), Error);
}
