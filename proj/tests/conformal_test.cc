#include "safenav/conformal.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/beta.hpp>
#include <numeric>
#include <random>

#include "safenav/errors.hpp"
#include "synthetic.hpp"

namespace safenav {
namespace {

TrainingTuple TupleWithErrorShift(const PolarError& e_prev, const PolarError& shift, double dt) {
  const Pose target{1.0, 2.0, 0.3};
  TrainingTuple t;
  t.dt = dt;
  t.optimal_state = target;
  t.prev_state = pose_from_polar_error(e_prev, target);
  const PolarError e_nom = polar_error(step_nominal(t.prev_state, t.applied_input, dt), target);
  t.measured_state = pose_from_polar_error(
      {e_nom.rho + shift.rho, e_nom.gamma + shift.gamma, e_nom.delta + shift.delta}, target);
  return t;
}

TEST(ExtractDiscrepancy, PerfectPredictionIsZero) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    auto x = testing::make_tuple(rng, 0.0, 0.0);
    const auto s = extract_discrepancy(x.tuple);
    ASSERT_TRUE(s.has_value());
    EXPECT_LT(s->matched_norm, 1e-9);
    EXPECT_LT(s->unmatched_mag, 1e-12);
  }
}

TEST(ExtractDiscrepancy, FullyMatchedResidual) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    auto x = testing::make_tuple(rng, 0.3, 0.0);
    const auto s = extract_discrepancy(x.tuple);
    ASSERT_TRUE(s.has_value());
    EXPECT_NEAR(s->matched_norm, 0.3, 1e-9);
    EXPECT_LT(s->unmatched_mag, 1e-12);
  }
}

TEST(ExtractDiscrepancy, OnAxisExample) {
  const TrainingTuple t = TupleWithErrorShift({0.5, 0.0, 0.0}, {0.05, 0.0, 0.02}, 0.05);
  const auto s = extract_discrepancy(t);
  ASSERT_TRUE(s.has_value());
  // G = 0.05 [[-1, 0], [0, -1], [0, 0]]: G^T G = 0.0025 I.
  EXPECT_NEAR(s->matched[0], -1.0, 1e-12);
  EXPECT_NEAR(s->matched[1], 0.0, 1e-12);
  EXPECT_NEAR(s->matched_norm, 1.0, 1e-12);
  EXPECT_NEAR(s->unmatched_mag, 0.02, 1e-12);
}

TEST(ExtractDiscrepancy, MatchesNormalEquationsOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.05, 0.05), rho(0.1, 0.5), ang(-1.2, 1.2);
  for (int i = 0; i < 500; ++i) {
    const PolarError e{rho(rng), ang(rng), ang(rng)};
    const PolarError shift{u(rng), u(rng), u(rng)};
    const TrainingTuple t = TupleWithErrorShift(e, shift, 0.05);
    const PolarError e_prev = polar_error(t.prev_state, t.optimal_state);
    // Hand-rolled 2x2 normal equations.
    const double c = std::cos(e_prev.gamma), s = std::sin(e_prev.gamma) / e_prev.rho, dt = 0.05;
    const double g[3][2] = {{-c * dt, 0}, {s * dt, -dt}, {s * dt, 0}};
    const double r[3] = {shift.rho, shift.gamma, shift.delta};
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (int k = 0; k < 3; ++k) {
      a11 += g[k][0] * g[k][0];
      a12 += g[k][0] * g[k][1];
      a22 += g[k][1] * g[k][1];
      b1 += g[k][0] * r[k];
      b2 += g[k][1] * r[k];
    }
    const double det = a11 * a22 - a12 * a12;
    const double x1 = (a22 * b1 - a12 * b2) / det, x2 = (a11 * b2 - a12 * b1) / det;
    double res = 0;
    for (int k = 0; k < 3; ++k) {
      const double d = r[k] - g[k][0] * x1 - g[k][1] * x2;
      res += d * d;
    }
    const auto sample = extract_discrepancy(t);
    ASSERT_TRUE(sample.has_value());
    EXPECT_NEAR(sample->matched[0], x1, 1e-7 * (1 + std::abs(x1)));
    EXPECT_NEAR(sample->matched[1], x2, 1e-7 * (1 + std::abs(x2)));
    EXPECT_NEAR(sample->unmatched_mag, std::sqrt(res), 1e-10);
  }
}

TEST(ExtractDiscrepancy, PythagorasOnAxis) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.05, 0.05), rho(0.1, 0.5);
  for (int i = 0; i < 200; ++i) {
    const PolarError shift{u(rng), u(rng), u(rng)};
    const TrainingTuple t = TupleWithErrorShift({rho(rng), 0.0, 0.0}, shift, 0.05);
    const auto s = extract_discrepancy(t);
    ASSERT_TRUE(s.has_value());
    const double total = shift.rho * shift.rho + shift.gamma * shift.gamma + shift.delta * shift.delta;
    const double matched_part = 0.0025 * s->matched_norm * s->matched_norm;
    EXPECT_NEAR(total, matched_part + s->unmatched_mag * s->unmatched_mag, 1e-9);
  }
}

TEST(ExtractDiscrepancy, DeadZoneIsSkipped) {
  TrainingTuple t;
  t.prev_state = {0, 0, 0};
  t.optimal_state = {0.001, 0, 0};
  t.measured_state = {0.002, 0, 0};
  EXPECT_FALSE(extract_discrepancy(t).has_value());
}

TEST(ExtractDiscrepancy, MidpointRuleAgreesAtSmallSteps) {
  std::mt19937_64 rng(5);
  CalibrationConfig mid;
  mid.rule = IntegralRule::kMidpoint;
  for (int i = 0; i < 200; ++i) {
    auto x = testing::make_tuple(rng, 0.2, 0.01);
    const auto a = extract_discrepancy(x.tuple), b = extract_discrepancy(x.tuple, mid);
    ASSERT_TRUE(a && b);
    EXPECT_NEAR(a->matched_norm, b->matched_norm, 0.05);
    EXPECT_NEAR(a->unmatched_mag, b->unmatched_mag, 0.005);
  }
}

TEST(WrapOutlier, DetectsFlippedAngle) {
  TrainingTuple t;
  t.optimal_state = {0, 0, kPi - 0.01};
  t.prev_state = {-0.3, 0.0, 0.0};
  t.measured_state = {-0.3, 0.0, 0.0};
  t.applied_input = {0.0, 0.0};
  EXPECT_FALSE(has_wrap_outlier(t));
  // Nominal delta sits just below pi; a small measured change pushes it over.
  t.measured_state.y = 0.02;
  EXPECT_TRUE(has_wrap_outlier(t));
}

TEST(ConformalQuantile, IndexForThreeThousandSamples) {
  EXPECT_EQ(quantile_index(3000, 0.005), 2986u);
  std::vector<double> scores(3000);
  std::iota(scores.begin(), scores.end(), 1.0);
  std::shuffle(scores.begin(), scores.end(), std::mt19937_64(9));
  const QuantileResult q = conformal_quantile(scores, 0.005);
  EXPECT_EQ(q.index, 2986u);
  EXPECT_EQ(q.value, 2986.0);
  EXPECT_FALSE(q.insufficient);
}

TEST(ConformalQuantile, NineteenScores) {
  std::vector<double> scores(19);
  std::iota(scores.begin(), scores.end(), 1.0);
  const QuantileResult q = conformal_quantile(scores, 0.05);
  EXPECT_EQ(q.index, 19u);
  EXPECT_EQ(q.value, 19.0);
}

TEST(ConformalQuantile, ConstantScores) {
  for (double eps : {0.01, 0.1, 0.5, 0.9}) {
    EXPECT_EQ(conformal_quantile(std::vector<double>(200, 0.37), eps).value, 0.37);
  }
}

TEST(ConformalQuantile, InsufficientSamplesGiveInfinity) {
  const QuantileResult q = conformal_quantile(std::vector<double>(10, 1.0), 0.05);
  EXPECT_TRUE(q.insufficient);
  EXPECT_TRUE(std::isinf(q.value));
  EXPECT_EQ(q.index, 11u);
  EXPECT_EQ(min_samples_for(0.05), 19u);
  EXPECT_EQ(min_samples_for(0.005), 199u);
}

TEST(ConformalQuantile, MonotoneInRisk) {
  std::mt19937_64 rng(10);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> scores(1000);
  for (double& s : scores) s = ex(rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps = 0.002; eps < 0.99; eps += 0.007) {
    const double z = conformal_quantile(scores, eps).value;
    EXPECT_LE(z, prev);
    prev = z;
  }
}

TEST(ConformalQuantile, MarginalCoverageOverSeeds) {
  constexpr int kCal = 1000, kTest = 1000, kSeeds = 60;
  for (double eps : {0.01, 0.05, 0.2}) {
    const double margin = 1.645 * std::sqrt(eps * (1 - eps) / kTest);
    int bad = 0;
    double mean_violation = 0.0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      std::gamma_distribution<double> dist(2.0, 0.1);
      std::vector<double> cal(kCal);
      for (double& s : cal) s = dist(rng);
      const double z = conformal_quantile(cal, eps).value;
      int over = 0;
      for (int i = 0; i < kTest; ++i) over += dist(rng) > z;
      const double rate = static_cast<double>(over) / kTest;
      mean_violation += rate / kSeeds;
      bad += rate > eps + margin;
    }
    EXPECT_LE(mean_violation, eps + 3 * std::sqrt(eps / (kTest * kSeeds)));
    EXPECT_LE(bad, kSeeds / 10) << eps;
  }
}

TEST(Calibrate, UniformDisturbanceMatchesOrderStatistics) {
  constexpr std::size_t kL = 3000;
  constexpr double kEps = 0.005;
  const std::size_t k = quantile_index(kL, kEps);
  // Z / a ~ Beta(k, L + 1 - k) for uniforms on [0, a].
  const boost::math::beta_distribution<double> order(k, kL + 1 - k);
  const double p_matched = boost::math::cdf(order, 0.40 / 0.4) - boost::math::cdf(order, 0.39 / 0.4);
  const double p_unmatched = boost::math::cdf(order, 1.0) - boost::math::cdf(order, 0.0295 / 0.03);
  ASSERT_GT(p_matched * p_unmatched, 0.95);

  int inside = 0;
  constexpr int kSeeds = 20;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    const auto data = testing::tuples_of(testing::make_uniform_dataset(rng, kL + 500, 0.4, 0.03));
    CalibrationConfig cfg;
    cfg.epsilon = kEps;
    cfg.subsample = kL;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const CalibrationReport r = calibrate(data, cfg);
    EXPECT_EQ(r.bounds.sample_count, kL);
    EXPECT_EQ(r.quantile_index, 2986u);
    const bool ok = r.bounds.z_matched >= 0.39 && r.bounds.z_matched <= 0.40 + 1e-9 &&
                    r.bounds.z_unmatched >= 0.0295 && r.bounds.z_unmatched <= 0.03 + 1e-9;
    inside += ok;
  }
  EXPECT_GE(inside, 19);
}

TEST(Calibrate, DeterministicAndOrderOnlyMattersThroughDraw) {
  std::mt19937_64 rng(77);
  auto data = testing::tuples_of(testing::make_uniform_dataset(rng, 600, 0.4, 0.03));
  CalibrationConfig cfg;
  cfg.epsilon = 0.05;
  cfg.subsample = 400;
  cfg.seed = 5;
  const auto a = calibrate(data, cfg), b = calibrate(data, cfg);
  EXPECT_EQ(a.bounds.z_matched, b.bounds.z_matched);
  EXPECT_EQ(a.bounds.z_unmatched, b.bounds.z_unmatched);

  // Using every tuple removes the draw, so permutations cannot matter.
  cfg.subsample = data.size();
  const auto full = calibrate(data, cfg);
  std::shuffle(data.begin(), data.end(), rng);
  const auto shuffled = calibrate(data, cfg);
  EXPECT_EQ(full.bounds.z_matched, shuffled.bounds.z_matched);
  EXPECT_EQ(full.bounds.z_unmatched, shuffled.bounds.z_unmatched);
}

TEST(Calibrate, TooSmallDatasetNamesCounts) {
  std::mt19937_64 rng(1);
  const auto data = testing::tuples_of(testing::make_uniform_dataset(rng, 100, 0.4, 0.03));
  CalibrationConfig cfg;
  cfg.subsample = 3000;
  try {
    calibrate(data, cfg);
    FAIL() << "expected InsufficientData";
  } catch (const InsufficientData& e) {
    EXPECT_EQ(e.required(), 3000u);
    EXPECT_EQ(e.available(), 100u);
    EXPECT_NE(std::string(e.what()).find("3000"), std::string::npos);
  }
  cfg.subsample = 50;
  cfg.epsilon = 0.005;
  EXPECT_THROW(calibrate(data, cfg), InsufficientData);
}

TEST(Calibrate, MeanOffsetScoreRemovesBias) {
  std::mt19937_64 rng(12);
  std::vector<TrainingTuple> data;
  for (int i = 0; i < 400; ++i) data.push_back(testing::make_tuple(rng, 0.3, 0.0).tuple);
  CalibrationConfig cfg;
  cfg.epsilon = 0.1;
  cfg.subsample = 400;
  const auto raw = calibrate(data, cfg);
  EXPECT_NEAR(raw.bounds.z_matched, 0.3, 1e-9);
  cfg.score = ScoreMode::kMeanOffset;
  const auto centred = calibrate(data, cfg);
  EXPECT_GT(centred.bounds.z_matched, 0.0);
  EXPECT_LE(centred.bounds.z_matched, 0.6 + 1e-9);
}

TEST(Recalibrate, MatchesDirectQuantile) {
  std::mt19937_64 rng(13);
  std::vector<DiscrepancySample> samples;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> m;
  for (int i = 0; i < 500; ++i) {
    DiscrepancySample s;
    s.matched_norm = u(rng);
    s.unmatched_mag = 0.1 * u(rng);
    m.push_back(s.matched_norm);
    samples.push_back(s);
  }
  std::sort(m.begin(), m.end());
  const DiscrepancyBounds b = recalibrate(samples, 0.1);
  EXPECT_EQ(b.z_matched, m[quantile_index(500, 0.1) - 1]);
  EXPECT_EQ(b.epsilon, 0.1);
}

}  // namespace
}  // namespace safenav
