#include "safenav/mppi.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "safenav/errors.hpp"

namespace safenav {
namespace {

constexpr double kCap = 13500.0;

DiscrepancyCostMap EmptyMap(int size = 200) {
  return inflate(OccupancyGrid({size, size, 0.05, {0, 0}}, kFree), 0, 0.1, kCap);
}

std::vector<Vec2> Held(Vec2 p, int horizon) { return std::vector<Vec2>(horizon + 1, p); }

TEST(LethalThreshold, DefaultFromLimits) {
  EXPECT_NEAR(default_lethal_threshold(CostWeights{}.q_stage, Limits{}, 30), 13500.0, 1e-9);
}

TEST(Rollout, ZeroInputsHoldPose) {
  const auto traj = rollout({0.3, -0.2, 1.0}, std::vector<VelocityCmd>(30), Limits{}, 0.05);
  ASSERT_EQ(traj.size(), 31u);
  for (const Pose& p : traj) EXPECT_EQ(p, (Pose{0.3, -0.2, 1.0}));
}

TEST(Rollout, StraightLine) {
  const auto traj = rollout({0, 0, 0}, std::vector<VelocityCmd>(30, {1, 0}), Limits{}, 0.05);
  EXPECT_NEAR(traj.back().x, 1.5, 1e-12);
  EXPECT_EQ(traj.back().y, 0.0);
  EXPECT_EQ(traj.back().theta, 0.0);
}

TEST(Rollout, InputsAreClamped) {
  const auto a = rollout({0, 0, 0}, std::vector<VelocityCmd>(10, {5, 0}), Limits{}, 0.05);
  const auto b = rollout({0, 0, 0}, std::vector<VelocityCmd>(10, {2, 0}), Limits{}, 0.05);
  EXPECT_EQ(a, b);
}

TEST(TrajectoryCost, PerfectTrackingIsFree) {
  const std::vector<Pose> traj(31, Pose{0.5, 0.5, 0});
  const CostBreakdown c = trajectory_cost(traj, std::vector<VelocityCmd>(30), Held({0.5, 0.5}, 30), EmptyMap(),
                                          CostWeights{}, 0.09);
  EXPECT_EQ(c.total, 0.0);
}

TEST(TrajectoryCost, SingleStageOffset) {
  std::vector<Pose> traj(2, Pose{0, 0, 0});
  traj[0].x = 0.1;
  const CostBreakdown c =
      trajectory_cost(traj, std::vector<VelocityCmd>(1), Held({0, 0}, 1), EmptyMap(), CostWeights{}, 1.0);
  EXPECT_NEAR(c.tracking, 0.5, 1e-12);
  EXPECT_EQ(c.iss_penalty, 0.0);
}

TEST(TrajectoryCost, InitialStepPenalty) {
  std::vector<Pose> traj{{0, 0, 0}, {0.1, 0, 0}};
  const std::vector<VelocityCmd> u{{2, 0}};
  EXPECT_EQ(trajectory_cost(traj, u, Held({0, 0}, 1), EmptyMap(), CostWeights{}, 0.09).iss_penalty, 10000.0);
  EXPECT_EQ(trajectory_cost(traj, u, Held({0, 0}, 1), EmptyMap(), CostWeights{}, 0.11).iss_penalty, 0.0);
}

TEST(TrajectoryCost, LethalCellDominates) {
  OccupancyGrid g({40, 40, 0.05, {0, 0}}, kFree);
  g.at(25, 20) = kOccupied;
  const DiscrepancyCostMap map = inflate(g, 1, 0.1, kCap);
  const auto u = std::vector<VelocityCmd>(10, {0.5, 0});
  const auto traj = rollout({0, 0.025, 0}, u, Limits{}, 0.05);
  std::vector<Vec2> ref;
  for (const Pose& p : traj) ref.push_back({p.x, p.y});
  const CostBreakdown c = trajectory_cost(traj, u, ref, map, CostWeights{}, 1.0);
  EXPECT_GE(c.total, kCap);
  EXPECT_GE(c.collision, kCap);
}

TEST(TrajectoryCost, TrackingIsCapped) {
  std::vector<Pose> traj(31, Pose{0, 0, 0});
  const CostBreakdown c = trajectory_cost(traj, std::vector<VelocityCmd>(30), Held({4.0, 4.0}, 30), EmptyMap(),
                                          CostWeights{}, 1.0);
  EXPECT_EQ(c.tracking, kCap);
}

TEST(Aggregate, SingleSampleTakesItsPerturbation) {
  MppiParams p;
  const std::vector<VelocityCmd> u{{0.2, 0.1}, {0.3, -0.1}};
  const std::vector<std::vector<VelocityCmd>> d{{{0.5, 0.5}, {-0.1, 0.2}}};
  const auto out = aggregate(u, d, {123.0}, p);
  EXPECT_DOUBLE_EQ(out[0].v, 0.7);
  EXPECT_DOUBLE_EQ(out[1].omega, 0.1);
}

TEST(Aggregate, EqualCostsAverageAtZeroNominal) {
  MppiParams p;
  const std::vector<VelocityCmd> u(3);
  std::vector<std::vector<VelocityCmd>> d{{{1, 2}, {0, 0}, {3, 3}}, {{3, 0}, {1, 1}, {-3, 1}}};
  const auto out = aggregate(u, d, {5.0, 5.0}, p);
  EXPECT_DOUBLE_EQ(out[0].v, 2.0);
  EXPECT_DOUBLE_EQ(out[0].omega, 1.0);
  EXPECT_DOUBLE_EQ(out[2].v, 0.0);
}

TEST(Aggregate, TwoSampleWeights) {
  const auto w = importance_weights({0.0, std::log(3.0)}, {}, 1.0);
  EXPECT_NEAR(w[0], 0.75, 1e-15);
  EXPECT_NEAR(w[1], 0.25, 1e-15);
}

TEST(Aggregate, CouplingTermFollowsSelectedForm) {
  MppiParams p;
  p.sigma = {0.5, 2.0};
  const std::vector<VelocityCmd> u{{1.0, 2.0}};
  const std::vector<VelocityCmd> d{{0.25, -1.0}};
  // 1 * (1 + 0.5) / 0.5 + 2 * (2 - 2) / 2
  EXPECT_DOUBLE_EQ(control_coupling(u, d, p), 3.0);
  p.form = WeightForm::kConventional;
  EXPECT_DOUBLE_EQ(control_coupling(u, d, p), 1.5);
}

TEST(ImportanceWeights, ProbabilityVectorWithHugeCosts) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> cost(0.0, 1e6), coup(-100.0, 100.0), lam(1e-9, 10.0);
  for (int i = 0; i < 2000; ++i) {
    const int n = 1 + static_cast<int>(rng() % 50);
    std::vector<double> c(n), k(n);
    for (int j = 0; j < n; ++j) {
      c[j] = cost(rng);
      k[j] = coup(rng);
    }
    const auto w = importance_weights(c, k, lam(rng));
    double s = 0;
    for (double x : w) {
      ASSERT_TRUE(std::isfinite(x));
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ImportanceWeights, ZeroTemperatureSelectsArgmin) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> cost(0.0, 100.0), pert(-1.0, 1.0);
  MppiParams p;
  p.lambda = 1e-9;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 20;
    std::vector<double> c(n);
    std::vector<std::vector<VelocityCmd>> d(n, std::vector<VelocityCmd>(5));
    for (int j = 0; j < n; ++j) {
      c[j] = cost(rng);
      for (auto& x : d[j]) x = {pert(rng), pert(rng)};
    }
    const int best = static_cast<int>(std::min_element(c.begin(), c.end()) - c.begin());
    const auto out = aggregate(std::vector<VelocityCmd>(5), d, c, p);
    for (int k = 0; k < 5; ++k) {
      EXPECT_EQ(out[k].v, d[best][k].v);
      EXPECT_EQ(out[k].omega, d[best][k].omega);
    }
  }
}

TEST(ShiftWarmStart, ShiftsAndFillsFromFlatness) {
  std::vector<VelocityCmd> prev;
  for (int i = 0; i < 30; ++i) prev.push_back({0.01 * i, -0.01 * i});
  const auto out = shift_warm_start(prev, sample(Line{{0, 0}, {1, 0}}, 2.0));
  ASSERT_EQ(out.size(), 30u);
  for (int i = 0; i < 29; ++i) EXPECT_EQ(out[i], prev[i + 1]);
  EXPECT_EQ(out.back(), (VelocityCmd{1, 0}));

  const auto ones = shift_warm_start(std::vector<VelocityCmd>(30, {1, 0}), sample(Line{{0, 0}, {1, 0}}, 0.0));
  for (const auto& u : ones) EXPECT_EQ(u, (VelocityCmd{1, 0}));
  const auto stop = shift_warm_start(prev, sample(Hold{{1, 1}}, 0.0));
  EXPECT_EQ(stop.back(), (VelocityCmd{0, 0}));
}

TEST(Plan, EquilibriumStaysPut) {
  MppiParams p;
  MppiPlanner planner(p, CostWeights{}, Limits{});
  const PlanResult r = planner.plan({0, 0, 0}, Held({0, 0}, 30), EmptyMap(), 0.09, std::vector<VelocityCmd>(30));
  ASSERT_EQ(r.states.size(), 31u);
  EXPECT_EQ(r.states[0], (Pose{0, 0, 0}));
  for (const Pose& s : r.states) EXPECT_LT(std::hypot(s.x, s.y), 0.05);
  double mean = 0;
  for (double c : planner.last_costs()) mean += c / planner.last_costs().size();
  EXPECT_LT(r.total_cost, 0.25 * mean);
  const double best = *std::min_element(planner.last_costs().begin(), planner.last_costs().end());
  EXPECT_LE(r.total_cost, 1.05 * best);
  EXPECT_TRUE(r.collision_free);
  EXPECT_TRUE(r.initial_error_ok);
}

TEST(Plan, EquilibriumAverageIsZeroAtHighTemperature) {
  MppiParams p;
  p.lambda = 1e4;
  MppiPlanner planner(p, CostWeights{}, Limits{});
  const PlanResult r = planner.plan({0, 0, 0}, Held({0, 0}, 30), EmptyMap(), 0.09, std::vector<VelocityCmd>(30));
  // Near-uniform weights over 2000 samples: standard error about 0.01.
  for (const auto& u : r.inputs) {
    EXPECT_LT(std::abs(u.v), 0.05);
    EXPECT_LT(std::abs(u.omega), 0.05);
  }
  EXPECT_LT(r.total_cost, 0.5);
}

TEST(Plan, SeededPlansAreBitIdentical) {
  MppiParams p;
  p.seed = 99;
  OccupancyGrid g({80, 80, 0.05, {0, 0}}, kFree);
  for (int iy = 30; iy < 50; ++iy) g.at(45, iy) = kOccupied;
  const DiscrepancyCostMap map = inflate(g, 3, 0.1, kCap);
  std::vector<Vec2> ref;
  for (int k = 0; k <= 30; ++k) ref.push_back({-1.0 + 0.05 * k, 0.0});
  const std::vector<VelocityCmd> warm(30, {1.0, 0.0});
  MppiPlanner a(p, CostWeights{}, Limits{}), b(p, CostWeights{}, Limits{});
  for (int cycle = 0; cycle < 3; ++cycle) {
    const PlanResult ra = a.plan({-1, 0, 0}, ref, map, 0.09, warm);
    const PlanResult rb = b.plan({-1, 0, 0}, ref, map, 0.09, warm);
    ASSERT_EQ(ra.inputs.size(), rb.inputs.size());
    for (std::size_t k = 0; k < ra.inputs.size(); ++k) EXPECT_EQ(ra.inputs[k], rb.inputs[k]);
    EXPECT_EQ(ra.total_cost, rb.total_cost);
    EXPECT_EQ(a.last_costs(), b.last_costs());
  }
}

TEST(Plan, PassesThroughGapInWall) {
  // Wall at x in [0, 0.1] with a gap for y in [-0.2, 0.4]; reference runs along y = 0.
  ObstacleSet walls;
  walls.boxes.push_back({0.0, -2.0, 0.1, -0.2});
  walls.boxes.push_back({0.0, 0.4, 0.1, 2.0});
  const GridGeometry geo{80, 80, 0.05, {0, 0}};
  const OccupancyGrid grid = rasterize(walls, geo);
  const DiscrepancyCostMap map = inflate(grid, 2, 0.1, kCap);
  std::vector<Vec2> ref;
  for (int k = 0; k <= 30; ++k) ref.push_back({-0.8 + 0.04 * k, 0.0});

  int good = 0;
  for (int seed = 0; seed < 100; ++seed) {
    MppiParams p;
    p.seed = static_cast<std::uint64_t>(seed);
    MppiPlanner planner(p, CostWeights{}, Limits{});
    const PlanResult r = planner.plan({-0.8, 0.0, 0.0}, ref, map, 0.09, std::vector<VelocityCmd>(30, {0.8, 0.0}));
    bool crossed = false, clear = true;
    for (const Pose& s : r.states) {
      crossed |= s.x > 0.1;
      const auto c = cell_of(geo, {s.x, s.y});
      clear &= c.has_value() && !map.lethal_at(c->ix, c->iy);
    }
    EXPECT_EQ(r.collision_free, clear) << seed;
    good += r.collision_free && clear && crossed;
  }
  EXPECT_GE(good, 95);
}

TEST(Plan, CollisionFreeCertificateKeepsBufferClear) {
  // N cells of lethal stencil cover a 0.4 m disc once the cell diagonal is paid for.
  const GridGeometry geo{100, 100, 0.05, {0, 0}};
  const int n = buffer_cells(0.1, 0.3 + 0.05 / std::sqrt(2.0), 0.05);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-2.0, 2.0), size(0.05, 0.5), ang(-kPi, kPi);
  int certified = 0;
  for (int trial = 0; trial < 40; ++trial) {
    ObstacleSet o;
    for (int i = 0; i < 5; ++i) {
      const double x = pos(rng), y = pos(rng), s = size(rng);
      o.boxes.push_back({x, y, x + s, y + s});
    }
    const OccupancyGrid grid = rasterize(o, geo);
    const DiscrepancyCostMap map = inflate(grid, n, 0.1, kCap);
    Pose start{pos(rng), pos(rng), ang(rng)};
    while (o.distance({start.x, start.y}) < 0.6) start = {pos(rng), pos(rng), ang(rng)};
    std::vector<Vec2> ref;
    for (int k = 0; k <= 30; ++k) {
      ref.push_back({start.x + 0.05 * k * std::cos(start.theta), start.y + 0.05 * k * std::sin(start.theta)});
    }
    MppiParams p;
    p.seed = static_cast<std::uint64_t>(trial);
    p.sample_count = 500;
    MppiPlanner planner(p, CostWeights{}, Limits{});
    const PlanResult r = planner.plan(start, ref, map, 0.11, std::vector<VelocityCmd>(30, {1.0, 0.0}));
    if (!r.collision_free) continue;
    ++certified;
    EXPECT_TRUE(testing::BufferedPathClear(grid, r.states, 0.4)) << trial;
  }
  EXPECT_GT(certified, 10);
}

TEST(Plan, RetriesUntilInitialStepFitsTube) {
  MppiParams p;
  p.max_attempts = 5;
  MppiPlanner planner(p, CostWeights{}, Limits{});
  // A tiny r0 with a far reference: the first step can only pass if it barely moves.
  std::vector<Vec2> ref;
  for (int k = 0; k <= 30; ++k) ref.push_back({0.06 * k, 0.0});
  const PlanResult r = planner.plan({0, 0, 0}, ref, EmptyMap(), 1e-9, std::vector<VelocityCmd>(30, {2.0, 0.0}));
  EXPECT_FALSE(r.initial_error_ok);
  EXPECT_EQ(r.attempts, 5);
}

TEST(Plan, RejectsBadShapes) {
  MppiPlanner planner(MppiParams{}, CostWeights{}, Limits{});
  EXPECT_THROW(planner.plan({0, 0, 0}, Held({0, 0}, 10), EmptyMap(), 0.1, std::vector<VelocityCmd>(30)),
               ConfigError);
  EXPECT_THROW(planner.plan({0, 0, 0}, Held({0, 0}, 30), EmptyMap(), 0.1, std::vector<VelocityCmd>(29)),
               ConfigError);
  MppiParams bad;
  bad.lambda = 0;
  EXPECT_THROW(MppiPlanner(bad, CostWeights{}, Limits{}), ConfigError);
  CostWeights w;
  w.q_stage(0, 0) = -1;
  EXPECT_THROW(MppiPlanner(MppiParams{}, w, Limits{}), ConfigError);
}

}  // namespace
}  // namespace safenav
