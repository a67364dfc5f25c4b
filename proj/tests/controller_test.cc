#include "safenav/controller.hpp"

#include <gtest/gtest.h>

#include <random>

#include "safenav/errors.hpp"

namespace safenav {
namespace {

constexpr Gains kDefaultGains{0.3, 0.15, 1.0, 1000.0};

TEST(Kappa, OnAxisUsesSmallAngleLimit) {
  const VelocityCmd u = kappa({0.5, 0.0, 0.0}, kDefaultGains);
  EXPECT_DOUBLE_EQ(u.v, 0.15);
  EXPECT_DOUBLE_EQ(u.omega, 0.0);
}

TEST(Kappa, OffAxisFullForm) {
  const VelocityCmd u = kappa({0.2, kPi / 4, 0.0}, kDefaultGains, {ErrorForm::kFull, 0.05});
  // 0.3 * 0.2 * cos(pi/4); 0.15 * pi/4 + 0.3 * (0.5 / (pi/4)) * (pi/4)
  EXPECT_NEAR(u.v, 0.0424264068711928, 1e-12);
  EXPECT_NEAR(u.omega, 0.15 * kPi / 4 + 0.15, 1e-12);
  EXPECT_NEAR(u.v, 0.04243, 5e-6);
  EXPECT_NEAR(u.omega, 0.26781, 5e-6);
}

TEST(Kappa, ZeroAnglesGiveZeroTurn) {
  for (double rho : {0.06, 0.3, 1.0, 7.0}) EXPECT_EQ(kappa({rho, 0.0, 0.0}, kDefaultGains).omega, 0.0);
}

TEST(Kappa, SmallAngleLimitIsContinuous) {
  for (double g : {0.9e-6, 1.1e-6, -1.1e-6}) {
    const double omega = kappa({0.5, g, 0.1}, kDefaultGains, {ErrorForm::kFull, 0.05}).omega;
    EXPECT_NEAR(omega, 0.15 * g + 0.3 * (g + 0.1), 1e-12) << g;
  }
}

TEST(Kappa, DeadZoneIsConverged) {
  EXPECT_EQ(kappa({0.01, 0.3, 0.2}, kDefaultGains), (VelocityCmd{0, 0}));
  EXPECT_EQ(kappa_iss({0.0, 0.3, 0.2}, kDefaultGains), (VelocityCmd{0, 0}));
}

TEST(KappaIss, ReducedFormExample) {
  const VelocityCmd u = kappa_iss({0.5, 0.0, 0.0}, kDefaultGains);
  EXPECT_NEAR(u.v, 0.1505, 1e-15);
  EXPECT_NEAR(u.omega, 0.0, 1e-15);
}

TEST(KappaIss, LargeWeightRecoversNominalLaw) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> rho(0.06, 0.5), ang(-1.5, 1.5);
  Gains g = kDefaultGains;
  g.lambda1 = 1e300;
  for (ErrorForm form : {ErrorForm::kReduced, ErrorForm::kFull}) {
    for (int i = 0; i < 200; ++i) {
      const PolarError e{rho(rng), ang(rng), ang(rng)};
      EXPECT_EQ(kappa_iss(e, g, {form, 0.05}), kappa(e, g, {form, 0.05}));
    }
  }
}

TEST(KappaIss, FullFormSubtractsTransposedInputMatrix) {
  const PolarError e{0.4, 0.3, -0.2};
  Gains g = kDefaultGains;
  g.lambda1 = 2.0;
  const VelocityCmd base = kappa(e, g, {ErrorForm::kFull, 0.05});
  const VelocityCmd u = kappa_iss(e, g, {ErrorForm::kFull, 0.05});
  const double s = std::sin(e.gamma) / e.rho;
  EXPECT_NEAR(u.v, base.v - (-std::cos(e.gamma) * e.rho + s * e.gamma + s * e.delta) / 2.0, 1e-15);
  EXPECT_NEAR(u.omega, base.omega - (-e.gamma) / 2.0, 1e-15);
}

TEST(Lyapunov, Examples) {
  EXPECT_EQ(lyapunov({0, 0, 0}, 1.0), 0.0);
  EXPECT_EQ(lyapunov({1, 0, 0}, 3.7), 0.5);
  EXPECT_NEAR(lyapunov({0.3, 0.4, 0.5}, 1.0), 0.25, 1e-15);
  EXPECT_NEAR(lyapunov({0.3, 0.4, 0.5}, 1.0, ErrorForm::kReduced), 0.125, 1e-15);
}

TEST(Lyapunov, QuadraticBoundsOnDomain) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> rho(0.05, 0.5), ang(-kPi / 2, kPi / 2);
  const TubeParams tube;
  for (int i = 0; i < 10000; ++i) {
    const PolarError e{rho(rng), ang(rng), ang(rng)};
    const double v = lyapunov(e, 1.0, ErrorForm::kReduced);
    const double n2 = e.reduced_norm() * e.reduced_norm();
    EXPECT_GE(v, tube.alpha1 * n2 * (1 - 1e-15));
    EXPECT_LE(v, tube.alpha2 * n2 * (1 + 1e-15));
  }
}

// RK4 on e' = g_p(e) kappa(e).
PolarError rk4(const PolarError& e, double dt, const Gains& g, ErrorForm form) {
  auto f = [&](const PolarError& x) {
    const VelocityCmd u = kappa(x, g, {form, 0.0});
    const PolarErrorRate r = polar_error_rate(x, u, 0.0, form);
    return PolarError{r.rho, r.gamma, r.delta};
  };
  auto add = [](const PolarError& a, const PolarError& b, double s) {
    return PolarError{a.rho + s * b.rho, a.gamma + s * b.gamma, a.delta + s * b.delta};
  };
  const PolarError k1 = f(e), k2 = f(add(e, k1, dt / 2)), k3 = f(add(e, k2, dt / 2)), k4 = f(add(e, k3, dt));
  return {e.rho + dt / 6 * (k1.rho + 2 * k2.rho + 2 * k3.rho + k4.rho),
          e.gamma + dt / 6 * (k1.gamma + 2 * k2.gamma + 2 * k3.gamma + k4.gamma),
          e.delta + dt / 6 * (k1.delta + 2 * k2.delta + 2 * k3.delta + k4.delta)};
}

void CheckConvergence(ErrorForm form, double horizon_s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> rho(0.05, 0.5), ang(-kPi / 2 + 1e-3, kPi / 2 - 1e-3);
  constexpr double kDt = 0.02;
  const int steps = static_cast<int>(horizon_s / kDt);
  for (int trial = 0; trial < 1000; ++trial) {
    PolarError e{rho(rng), ang(rng), form == ErrorForm::kFull ? ang(rng) : 0.0};
    double v = lyapunov(e, kDefaultGains.k3, form);
    for (int k = 0; k < steps; ++k) {
      e = rk4(e, kDt, kDefaultGains, form);
      const double next = lyapunov(e, kDefaultGains.k3, form);
      ASSERT_LE(next, v * (1 + 1e-12)) << "trial " << trial << " step " << k;
      v = next;
    }
    EXPECT_LT(e.rho, 1e-3) << trial;
    EXPECT_LT(std::abs(e.gamma), 1e-3) << trial;
  }
}

TEST(ClosedLoop, DefaultLawConvergesWithinAMinute) { CheckConvergence(ErrorForm::kReduced, 60.0, 4); }

// The (gamma, delta) pair of the full form is an underdamped mode decaying at
// k2/2 per second, so it gets a longer window.
TEST(ClosedLoop, FullLawConvergesMonotonically) { CheckConvergence(ErrorForm::kFull, 150.0, 5); }

TEST(IssWeightBound, PrintedWeightIsNotInvariantButBoundIs) {
  const double z = 0.423;
  const double bound = iss_weight_bound(kDefaultGains, z);
  ASSERT_TRUE(std::isfinite(bound));
  EXPECT_LT(bound, 1000.0);

  auto worst_rate = [&](double lambda1) {
    // Max over the level set of dV/dt under the worst admissible disturbance.
    double worst = -1e300;
    const double radius = z / std::sqrt(2.0);
    for (int i = 1; i < 20000; ++i) {
      const double phi = -kPi / 2 + kPi * i / 20000.0;
      const PolarError e{radius * std::cos(phi), radius * std::sin(phi), 0.0};
      Gains g = kDefaultGains;
      g.lambda1 = lambda1;
      const VelocityCmd u = kappa_iss(e, g, {ErrorForm::kReduced, 0.0});
      const double av = -std::cos(e.gamma) * e.rho + std::sin(e.gamma) / e.rho * e.gamma;
      const double aw = -e.gamma;
      worst = std::max(worst, av * u.v + aw * u.omega + z * std::hypot(av, aw));
    }
    return worst;
  };
  EXPECT_GT(worst_rate(1000.0), 0.0);
  EXPECT_LT(worst_rate(0.5 * bound), 0.0);
}

TEST(TubeRadius, ConfigAReferenceRadii) {
  const TubeParams tube;
  const DiscrepancyBounds b{0.423, 0.025, 0.005, 3000};
  EXPECT_NEAR(tube_radius(0.0, b, tube), 0.089465, 1e-6);
  EXPECT_NEAR(tube_radius(0.0, b, tube), 0.090, 0.05 * 0.090);
  EXPECT_NEAR(tube_radius(0.05, b, tube), 0.090, 0.05 * 0.090);
}

TEST(TubeRadius, ConfigBReferenceRadii) {
  const TubeParams tube;
  const DiscrepancyBounds b{2.153, 0.034, 0.001, 3000};
  EXPECT_NEAR(tube_radius(0.0, b, tube), 2.3177, 1e-4);
  EXPECT_NEAR(tube_radius(0.05, b, tube), 2.320, 0.05 * 2.320);
}

TEST(TubeRadius, NoUnmatchedDriftMeansConstantTube) {
  const TubeParams tube;
  const DiscrepancyBounds b{0.5, 0.0, 0.01, 100};
  for (double tau : {0.0, 0.05, 1.0, 10.0}) EXPECT_DOUBLE_EQ(tube_radius(tau, b, tube), 0.125);
}

TEST(TubeRadius, BlowUpThrows) {
  const TubeParams tube;
  const DiscrepancyBounds b{0.5, 20.0, 0.01, 100};
  EXPECT_THROW(tube_radius(0.05, b, tube), TubeBlowUp);
}

TEST(TubeRadius, Monotone) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> z(0.0, 2.0), zp(0.0, 0.5), tau(0.0, 0.05);
  const TubeParams tube;
  for (int i = 0; i < 2000; ++i) {
    const DiscrepancyBounds b{z(rng), zp(rng), 0.01, 100};
    const double t0 = tau(rng), t1 = t0 + tau(rng);
    if (b.z_unmatched * t1 * std::exp(tube.lipschitz_V * t1) >= tube.alpha1 * 0.99) continue;
    EXPECT_LE(tube_radius(t0, b, tube), tube_radius(t1, b, tube));
    DiscrepancyBounds more = b;
    more.z_matched += 0.01;
    EXPECT_LT(tube_radius(t0, b, tube), tube_radius(t0, more, tube));
    more = b;
    more.z_unmatched += 0.01;
    if (t0 > 0 && b.z_matched > 0) EXPECT_LT(tube_radius(t0, b, tube), tube_radius(t0, more, tube));
  }
}

TEST(ComposeCommand, Examples) {
  const Limits limits;
  EXPECT_EQ(compose_command({0, 0}, {0.0, 0.0, 0.0}, kDefaultGains, limits), (VelocityCmd{0, 0}));
  const VelocityCmd sum = compose_command({0.5, 0.1}, {0.5, 0.0, 0.0}, kDefaultGains, limits);
  EXPECT_NEAR(sum.v, 0.6505, 1e-15);
  EXPECT_NEAR(sum.omega, 0.1, 1e-15);
  // kappa_iss gives (0.2, 0) at rho = 0.2/(0.3 + 1/1000).
  const VelocityCmd sat = compose_command({1.9, 0}, {0.2 / 0.301, 0.0, 0.0}, kDefaultGains, limits);
  EXPECT_EQ(sat.v, 2.0);
  EXPECT_EQ(sat.omega, 0.0);
}

TEST(ComposeCommand, AlwaysWithinLimits) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5.0, 5.0), rho(0.0, 3.0), ang(-kPi, kPi);
  const Limits limits;
  for (int i = 0; i < 5000; ++i) {
    const VelocityCmd c = compose_command({u(rng), u(rng)}, {rho(rng), ang(rng), ang(rng)}, kDefaultGains, limits);
    EXPECT_LE(std::abs(c.v), limits.v_max);
    EXPECT_LE(std::abs(c.omega), limits.omega_max);
    EXPECT_EQ(clamp(c, limits), c);
  }
}

TEST(Validation, RejectsNonPositive) {
  Gains g = kDefaultGains;
  g.k3 = 0.0;
  EXPECT_THROW(g.validate(), ConfigError);
  TubeParams t;
  t.alpha2 = 0.1;
  EXPECT_THROW(t.validate(), ConfigError);
  DiscrepancyBounds b;
  b.epsilon = 1.0;
  EXPECT_THROW(b.validate(), ConfigError);
}

}  // namespace
}  // namespace safenav
