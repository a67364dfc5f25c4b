#pragma once

// Discrepancy-aware MPPI: sampled rollouts on the nominal model, cost-map
// collision cost, importance-weighted aggregation and warm-start shifting.

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "safenav/controller.hpp"
#include "safenav/core.hpp"
#include "safenav/gridmap.hpp"
#include "safenav/reference.hpp"

namespace safenav {

enum class WeightForm {
  kFullCoupling,  // -C/lambda - sum u^T S^-1 (u + 2 delta)
  kConventional,  // -C/lambda - 1/2 sum u^T S^-1 (u + 2 delta)
};

struct MppiParams {
  int horizon = 30;
  double dt = 0.05;
  int sample_count = 2000;
  Eigen::Vector2d sigma{0.2, 0.2};  // diagonal of the perturbation covariance
  double lambda = 0.1;
  std::uint64_t seed = 0;
  WeightForm form = WeightForm::kFullCoupling;
  int max_attempts = 5;  // resampling budget for the initial-error check

  void validate() const;
};

// Per-step weight on the cost-map term: 1, or 1/k^2 for the k-th step.
enum class CollisionSchedule { kUniform, kInverseSquare };

struct CostWeights {
  Eigen::Matrix2d q_stage = Eigen::Vector2d(50.0, 50.0).asDiagonal();
  Eigen::Matrix2d q_terminal = Eigen::Vector2d(200.0, 200.0).asDiagonal();
  Eigen::Matrix2d r_input = Eigen::Vector2d(1.0, 1.0).asDiagonal();
  double alpha_iss = 10000.0;
  double cap = 13500.0;  // lethal threshold
  bool track_reference = true;  // false drops the tracking and input terms
  CollisionSchedule schedule = CollisionSchedule::kUniform;

  void validate() const;
};

// n_h * lambda_max(Q) * (v_max n_h dt)^2: the tracking cost of the largest
// displacement reachable within the horizon, held for every stage.
double default_lethal_threshold(const Eigen::Matrix2d& q_stage, const Limits& limits, int horizon);

struct CostBreakdown {
  double tracking = 0.0;   // capped
  double collision = 0.0;
  double iss_penalty = 0.0;
  double total = 0.0;
  int lethal_steps = 0;
};

struct PlanResult {
  std::vector<Pose> states;          // horizon + 1
  std::vector<VelocityCmd> inputs;   // horizon, within limits
  CostBreakdown cost;
  double total_cost = 0.0;
  bool collision_free = false;       // total cost below the cap and no lethal step
  bool initial_error_ok = false;     // |p_1 - p_0| < r0
  int attempts = 0;
};

// Per-step clamp then explicit Euler.
std::vector<Pose> rollout(const Pose& start, const std::vector<VelocityCmd>& inputs, const Limits& limits,
                          double dt);

CostBreakdown trajectory_cost(const std::vector<Pose>& traj, const std::vector<VelocityCmd>& inputs,
                              const std::vector<Vec2>& reference, const DiscrepancyCostMap& costmap,
                              const CostWeights& weights, double r0);

// Normalized importance weights from per-sample costs and control-coupling terms.
std::vector<double> importance_weights(const std::vector<double>& costs, const std::vector<double>& coupling,
                                       double lambda);

// sum_i u_i^T S^-1 (u_i + 2 delta_i), scaled by 1/2 for the conventional form.
double control_coupling(const std::vector<VelocityCmd>& nominal, const std::vector<VelocityCmd>& delta,
                        const MppiParams& params);

// U* = U + sum_j w_j Delta^j.
std::vector<VelocityCmd> aggregate(const std::vector<VelocityCmd>& nominal,
                                   const std::vector<std::vector<VelocityCmd>>& perturbations,
                                   const std::vector<double>& costs, const MppiParams& params);

// Left shift by one; the last slot comes from the flatness map of the reference tail.
std::vector<VelocityCmd> shift_warm_start(const std::vector<VelocityCmd>& previous, const ReferencePoint& tail);

// Warm-start sequence with the number of samples perturbing it.
struct WarmGroup {
  std::vector<VelocityCmd> inputs;
  int samples = 0;
};

class MppiPlanner {
 public:
  MppiPlanner(MppiParams params, CostWeights weights, Limits limits);

  const MppiParams& params() const { return params_; }
  const CostWeights& weights() const { return weights_; }
  const Limits& limits() const { return limits_; }

  // reference holds horizon + 1 positions starting at the current time.
  PlanResult plan(const Pose& state, const std::vector<Vec2>& reference, const DiscrepancyCostMap& costmap,
                  double r0, const std::vector<VelocityCmd>& warm);

  // Joint aggregation over several warm starts.
  PlanResult plan(const Pose& state, const std::vector<Vec2>& reference, const DiscrepancyCostMap& costmap,
                  double r0, const std::vector<WarmGroup>& groups);

  // Total cost of each sample in the last attempt, in sample order.
  const std::vector<double>& last_costs() const { return costs_; }

 private:
  double evaluate_sample(const Pose& state, const std::vector<VelocityCmd>& nominal, const double* delta,
                         const std::vector<Vec2>& reference, const DiscrepancyCostMap& costmap, double r0) const;

  MppiParams params_;
  CostWeights weights_;
  Limits limits_;
  std::mt19937_64 rng_;
  std::vector<double> noise_;  // sample-major, horizon x 2 per sample
  std::vector<double> costs_;
  std::vector<double> coupling_;
};

// Convenience wrapper: r0 from the tube, fresh planner seeded from params.
PlanResult plan(const Pose& state, const std::vector<Vec2>& reference, const DiscrepancyCostMap& costmap,
                const DiscrepancyBounds& bounds, const TubeParams& tube, const MppiParams& params,
                const CostWeights& weights, const std::vector<VelocityCmd>& warm, const Limits& limits = {});

}  // namespace safenav
