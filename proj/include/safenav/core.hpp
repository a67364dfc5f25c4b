#pragma once

// Nominal unicycle model, polar tracking error and flatness-based references.

#include <array>
#include <cmath>
#include <numbers>
#include <utility>

namespace safenav {

inline constexpr double kPi = std::numbers::pi;

// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

struct Pose {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // rad, (-pi, pi]

  bool operator==(const Pose&) const = default;
};

struct VelocityCmd {
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s

  bool operator==(const VelocityCmd&) const = default;
};

inline VelocityCmd operator+(VelocityCmd a, VelocityCmd b) { return {a.v + b.v, a.omega + b.omega}; }
inline VelocityCmd operator-(VelocityCmd a, VelocityCmd b) { return {a.v - b.v, a.omega - b.omega}; }
inline VelocityCmd operator*(double s, VelocityCmd a) { return {s * a.v, s * a.omega}; }

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Vec2&) const = default;
};

// Actuation bounds, dead zone and control period.
struct Limits {
  double v_max = 2.0;      // symmetric bound on |v|
  double omega_max = 2.0;  // symmetric bound on |omega|
  double rho_dz = 0.05;    // dead-zone radius
  double rho_max = 0.5;
  double dt = 0.05;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

VelocityCmd clamp(const VelocityCmd& cmd, const Limits& limits);

enum class Integrator { kEuler, kRk4 };

// One step of x' = g(x) u.
Pose step_nominal(const Pose& pose, const VelocityCmd& cmd, double dt,
                  Integrator integrator = Integrator::kEuler);

// Reference position with its first two time derivatives.
struct ReferencePoint {
  Vec2 position;
  Vec2 velocity;
  Vec2 acceleration;
};

// Flatness map from a reference point to the nominal pose and input.
// Throws HeadingUndefined when the reference velocity is zero.
std::pair<Pose, VelocityCmd> flat_reference(const ReferencePoint& ref);

// As flat_reference, but a stationary reference yields a zero input at heading 0.
std::pair<Pose, VelocityCmd> flat_reference_or_stop(const ReferencePoint& ref);

// Tracking error in polar coordinates: distance to the target, bearing of the
// target in the body frame, and bearing relative to the target heading.
struct PolarError {
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 0.0;

  bool converged(double rho_dz) const { return rho < rho_dz; }
  // Outside (-pi/2, pi/2) in gamma or delta.
  bool saturated() const;
  double norm() const { return std::sqrt(rho * rho + gamma * gamma + delta * delta); }
  double reduced_norm() const { return std::sqrt(rho * rho + gamma * gamma); }
};

PolarError polar_error(const Pose& current, const Pose& target);

// Inverse of polar_error for a fixed target: the pose whose error to `target` is `e`.
Pose pose_from_polar_error(const PolarError& e, const Pose& target);

// Clamps gamma and delta into the open operating domain; sets *saturated when
// anything moved.
PolarError clamp_to_domain(const PolarError& e, bool* saturated = nullptr);

enum class ErrorForm {
  kReduced,  // (rho, gamma) with the 2x2 input matrix
  kFull,     // (rho, gamma, delta) with the 3x2 input matrix
};

// 3x2 input matrix of the polar error dynamics, row-major: rows (rho, gamma, delta).
using PolarInputMatrix = std::array<std::array<double, 2>, 3>;

PolarInputMatrix polar_input_matrix(const PolarError& e);

struct PolarErrorRate {
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 0.0;  // zero in the reduced form
};

// de/dt = g_p(e) du. Throws IllConditioned when e.rho < rho_dz.
PolarErrorRate polar_error_rate(const PolarError& e, const VelocityCmd& du, double rho_dz,
                                ErrorForm form = ErrorForm::kFull);

}  // namespace safenav
