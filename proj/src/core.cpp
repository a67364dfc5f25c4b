#include "safenav/core.hpp"

#include <algorithm>

#include "safenav/errors.hpp"

namespace safenav {

double wrap_angle(double angle) {
  if (angle > -kPi && angle <= kPi) return angle;
  double wrapped = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

void Limits::validate() const {
  if (!(v_max > 0.0) || !(omega_max > 0.0)) throw ConfigError("limits: v_max and omega_max must be positive");
  if (!(rho_dz > 0.0) || !(rho_dz < rho_max)) throw ConfigError("limits: require 0 < rho_dz < rho_max");
  if (!(dt > 0.0)) throw ConfigError("limits: dt must be positive");
}

VelocityCmd clamp(const VelocityCmd& cmd, const Limits& limits) {
  return {std::clamp(cmd.v, -limits.v_max, limits.v_max),
          std::clamp(cmd.omega, -limits.omega_max, limits.omega_max)};
}

namespace {

struct PoseRate {
  double x, y, theta;
};

PoseRate unicycle_rate(double theta, const VelocityCmd& cmd) {
  return {cmd.v * std::cos(theta), cmd.v * std::sin(theta), cmd.omega};
}

}  // namespace

Pose step_nominal(const Pose& pose, const VelocityCmd& cmd, double dt, Integrator integrator) {
  if (integrator == Integrator::kEuler) {
    const PoseRate r = unicycle_rate(pose.theta, cmd);
    return {pose.x + r.x * dt, pose.y + r.y * dt, wrap_angle(pose.theta + r.theta * dt)};
  }
  const PoseRate k1 = unicycle_rate(pose.theta, cmd);
  const PoseRate k2 = unicycle_rate(pose.theta + 0.5 * dt * k1.theta, cmd);
  const PoseRate k3 = unicycle_rate(pose.theta + 0.5 * dt * k2.theta, cmd);
  const PoseRate k4 = unicycle_rate(pose.theta + dt * k3.theta, cmd);
  const double w = dt / 6.0;
  return {pose.x + w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
          pose.y + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
          wrap_angle(pose.theta + w * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta))};
}

std::pair<Pose, VelocityCmd> flat_reference(const ReferencePoint& ref) {
  const double xd = ref.velocity.x;
  const double yd = ref.velocity.y;
  const double speed_sq = xd * xd + yd * yd;
  if (speed_sq == 0.0) throw HeadingUndefined();

  const double heading = std::atan2(yd, xd);
  const double s = std::sin(heading);
  // Branch on the exact zero of sin(heading), as the flatness map is written.
  const double v = (s == 0.0) ? xd / std::cos(heading) : yd / s;
  const double omega = (xd * ref.acceleration.y - yd * ref.acceleration.x) / speed_sq;
  return {Pose{ref.position.x, ref.position.y, heading}, VelocityCmd{v, omega}};
}

std::pair<Pose, VelocityCmd> flat_reference_or_stop(const ReferencePoint& ref) {
  if (ref.velocity.x == 0.0 && ref.velocity.y == 0.0) {
    return {Pose{ref.position.x, ref.position.y, 0.0}, VelocityCmd{}};
  }
  return flat_reference(ref);
}

bool PolarError::saturated() const {
  constexpr double kHalfPi = kPi / 2.0;
  return !(std::abs(gamma) < kHalfPi) || !(std::abs(delta) < kHalfPi);
}

PolarError polar_error(const Pose& current, const Pose& target) {
  const double dx = target.x - current.x;
  const double dy = target.y - current.y;
  PolarError e;
  e.rho = std::hypot(dx, dy);
  e.gamma = wrap_angle(std::atan2(dy, dx) - current.theta);
  e.delta = wrap_angle(e.gamma + current.theta - target.theta);
  return e;
}

Pose pose_from_polar_error(const PolarError& e, const Pose& target) {
  // delta = bearing - theta*, gamma = bearing - theta
  const double bearing = target.theta + e.delta;
  const double theta = wrap_angle(bearing - e.gamma);
  return {target.x - e.rho * std::cos(bearing), target.y - e.rho * std::sin(bearing), theta};
}

PolarError clamp_to_domain(const PolarError& e, bool* saturated) {
  const double bound = std::nextafter(kPi / 2.0, 0.0);
  PolarError out = e;
  out.gamma = std::clamp(e.gamma, -bound, bound);
  out.delta = std::clamp(e.delta, -bound, bound);
  if (saturated != nullptr) *saturated = (out.gamma != e.gamma) || (out.delta != e.delta);
  return out;
}

PolarInputMatrix polar_input_matrix(const PolarError& e) {
  const double s = std::sin(e.gamma) / e.rho;
  return {{{-std::cos(e.gamma), 0.0}, {s, -1.0}, {s, 0.0}}};
}

PolarErrorRate polar_error_rate(const PolarError& e, const VelocityCmd& du, double rho_dz,
                                ErrorForm form) {
  if (e.rho < rho_dz || e.rho <= 0.0) throw IllConditioned(e.rho);
  const PolarInputMatrix g = polar_input_matrix(e);
  PolarErrorRate rate;
  rate.rho = g[0][0] * du.v + g[0][1] * du.omega;
  rate.gamma = g[1][0] * du.v + g[1][1] * du.omega;
  if (form == ErrorForm::kFull) rate.delta = g[2][0] * du.v + g[2][1] * du.omega;
  return rate;
}

}  // namespace safenav
