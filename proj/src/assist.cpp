#include "safenav/assist.hpp"

#include <cmath>

#include "safenav/errors.hpp"

namespace safenav {

namespace {

MppiParams planner_params(const AssistParams& p) {
  p.validate();
  MppiParams m;
  m.horizon = p.horizon;
  m.dt = p.dt;
  m.sample_count = p.sample_count;
  m.sigma = p.sigma;
  m.lambda = p.lambda;
  m.seed = p.seed;
  m.max_attempts = p.max_attempts;
  return m;
}

CostWeights override_weights(const AssistParams& p) {
  CostWeights w;
  w.track_reference = false;
  w.schedule = p.override_schedule;
  w.cap = p.lethal;
  w.alpha_iss = p.alpha_iss;
  return w;
}

}  // namespace

void AssistParams::validate() const {
  joystick_limits.validate();
  if (horizon < 1) throw ConfigError("assist: horizon must be at least 1");
  if (!(dt > 0.0)) throw ConfigError("assist: dt must be positive");
  if (sample_count < 1) throw ConfigError("assist: sample_count must be at least 1");
  if (!(joystick_fraction >= 0.0 && joystick_fraction <= 1.0)) {
    throw ConfigError("assist: joystick_fraction must lie in [0, 1]");
  }
  if (!(lethal > 0.0)) throw ConfigError("assist: lethal must be positive");
}

std::vector<Pose> project_joystick(const Pose& pose, const JoystickCmd& joy, int horizon, double dt,
                                   const Limits& limits) {
  if (horizon < 1) throw ConfigError("project_joystick: horizon must be at least 1");
  const VelocityCmd u = clamp({joy.v, joy.omega}, limits);
  std::vector<Pose> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  out.push_back(pose);
  for (int k = 0; k < horizon; ++k) out.push_back(step_nominal(out.back(), u, dt));
  return out;
}

double joystick_cost(const std::vector<Pose>& traj, const DiscrepancyCostMap& costmap, CollisionSchedule schedule) {
  double c = 0.0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double w = schedule == CollisionSchedule::kUniform ? 1.0 : 1.0 / (static_cast<double>(k) * k);
    c += w * query_cost(costmap, {traj[k].x, traj[k].y});
  }
  return c;
}

SampleSplit allocate_samples(int n, double fraction) {
  const int joy = static_cast<int>(std::floor(fraction * n));
  return {joy, n - joy};
}

DriverAssist::DriverAssist(AssistParams params, Gains gains, Limits vehicle_limits)
    : params_(std::move(params)),
      gains_(gains),
      limits_(vehicle_limits),
      planner_(planner_params(params_), override_weights(params_), vehicle_limits) {
  gains_.validate();
}

AssistDecision DriverAssist::step(const Pose& state, const JoystickCmd& joy, const DiscrepancyCostMap& costmap,
                                  const DiscrepancyBounds& bounds, const TubeParams& tube) {
  AssistDecision d;
  const VelocityCmd joy_cmd = clamp({joy.v, joy.omega}, params_.joystick_limits);
  d.projected = project_joystick(state, joy, params_.horizon, params_.dt, params_.joystick_limits);
  d.joystick_cost = joystick_cost(d.projected, costmap, params_.threshold_schedule);
  if (d.joystick_cost < params_.lethal) {
    d.mode = AssistMode::kPassThrough;
    d.command = joy_cmd;
    return d;
  }

  d.mode = AssistMode::kOverride;
  const SampleSplit split = allocate_samples(params_.sample_count, params_.joystick_fraction);
  std::vector<WarmGroup> groups;
  groups.push_back({std::vector<VelocityCmd>(static_cast<std::size_t>(params_.horizon), joy_cmd), split.joystick});
  groups.push_back({std::vector<VelocityCmd>(static_cast<std::size_t>(params_.horizon), {0.0, joy_cmd.omega}),
                    split.turn_in_place});
  std::vector<Vec2> reference;
  reference.reserve(d.projected.size());
  for (const Pose& p : d.projected) reference.push_back({p.x, p.y});

  const double r0 = tube_radius(0.0, bounds, tube);
  PlanResult plan = planner_.plan(state, reference, costmap, r0, groups);
  if (!plan.initial_error_ok) {
    d.emergency_stop = true;
    d.command = clamp({0.0, joy_cmd.omega}, limits_);
  } else {
    d.command = compose_command(plan.inputs[0], polar_error(state, plan.states[1]), gains_, limits_);
  }
  d.plan = std::move(plan);
  return d;
}

AssistDecision assist_step(const Pose& state, const JoystickCmd& joy, const DiscrepancyCostMap& costmap,
                           const DiscrepancyBounds& bounds, const TubeParams& tube, const AssistParams& params,
                           const Gains& gains, const Limits& vehicle_limits) {
  DriverAssist assist(params, gains, vehicle_limits);
  return assist.step(state, joy, costmap, bounds, tube);
}

}  // namespace safenav
