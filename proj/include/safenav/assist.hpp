#pragma once

// Driver assist: score the projected joystick trajectory on the cost map and
// override it with MPPI over joystick and turn-in-place warm starts.

#include <cstdint>
#include <optional>
#include <vector>

#include "safenav/controller.hpp"
#include "safenav/core.hpp"
#include "safenav/gridmap.hpp"
#include "safenav/mppi.hpp"

namespace safenav {

struct JoystickCmd {
  double v = 0.0;
  double omega = 0.0;
  double timestamp = 0.0;
};

enum class AssistMode { kPassThrough, kOverride };

struct AssistParams {
  Limits joystick_limits;  // +-2 m/s, +-2 rad/s
  int horizon = 30;
  double dt = 0.05;
  int sample_count = 5000;
  double lambda = 0.05;
  Eigen::Vector2d sigma{0.0625, 0.0625};  // variances, 0.25 std
  double joystick_fraction = 0.8;
  CollisionSchedule threshold_schedule = CollisionSchedule::kUniform;
  CollisionSchedule override_schedule = CollisionSchedule::kInverseSquare;
  double lethal = 13500.0;
  double alpha_iss = 10000.0;
  std::uint64_t seed = 0;
  int max_attempts = 5;

  void validate() const;
};

struct AssistDecision {
  AssistMode mode = AssistMode::kPassThrough;
  VelocityCmd command;
  double joystick_cost = 0.0;
  std::vector<Pose> projected;      // joystick rollout, horizon + 1 poses
  std::optional<PlanResult> plan;   // set in override
  bool emergency_stop = false;      // planner failed its initial-step check
};

// Zero-order hold of the clamped joystick command; horizon + 1 poses.
std::vector<Pose> project_joystick(const Pose& pose, const JoystickCmd& joy, int horizon, double dt,
                                   const Limits& limits = {});

// sum_{k>=1} w_k query_cost(p_k); tracking and input terms are zero.
double joystick_cost(const std::vector<Pose>& traj, const DiscrepancyCostMap& costmap,
                     CollisionSchedule schedule = CollisionSchedule::kInverseSquare);

struct SampleSplit {
  int joystick = 0;
  int turn_in_place = 0;
};

// floor(fraction * n) joystick samples, the rest turn-in-place.
SampleSplit allocate_samples(int n, double fraction);

class DriverAssist {
 public:
  DriverAssist(AssistParams params, Gains gains, Limits vehicle_limits);

  AssistDecision step(const Pose& state, const JoystickCmd& joy, const DiscrepancyCostMap& costmap,
                      const DiscrepancyBounds& bounds, const TubeParams& tube);

  const AssistParams& params() const { return params_; }

 private:
  AssistParams params_;
  Gains gains_;
  Limits limits_;
  MppiPlanner planner_;
};

// One-shot form with a freshly seeded planner.
AssistDecision assist_step(const Pose& state, const JoystickCmd& joy, const DiscrepancyCostMap& costmap,
                           const DiscrepancyBounds& bounds, const TubeParams& tube, const AssistParams& params,
                           const Gains& gains = {}, const Limits& vehicle_limits = {});

}  // namespace safenav
