#include "safenav/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "safenav/errors.hpp"

namespace safenav {

namespace {

constexpr double kSincThreshold = 1e-6;

// sin(g) cos(g) / g with its limit at 0.
double sin_cos_over(double gamma) {
  if (std::abs(gamma) < kSincThreshold) return 1.0;
  return std::sin(gamma) * std::cos(gamma) / gamma;
}

}  // namespace

void Gains::validate() const {
  if (!(k1 > 0.0 && k2 > 0.0 && k3 > 0.0 && lambda1 > 0.0)) {
    throw ConfigError("gains: k1, k2, k3 and lambda1 must be strictly positive");
  }
}

void TubeParams::validate() const {
  if (!(alpha1 > 0.0) || !(alpha1 <= alpha2)) throw ConfigError("tube: require 0 < alpha1 <= alpha2");
  if (!(alpha3_slope > 0.0)) throw ConfigError("tube: alpha3_slope must be positive");
  if (!(lipschitz_V > 0.0)) throw ConfigError("tube: lipschitz_V must be positive");
  if (!(dt > 0.0)) throw ConfigError("tube: dt must be positive");
}

void DiscrepancyBounds::validate() const {
  if (!(z_matched >= 0.0) || !(z_unmatched >= 0.0)) throw ConfigError("bounds: Z values must be nonnegative");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("bounds: epsilon must lie in (0, 1)");
  if (sample_count == 0) throw ConfigError("bounds: sample_count must be positive");
}

VelocityCmd kappa(const PolarError& e, const Gains& gains, const ControlOptions& opts) {
  if (e.converged(opts.rho_dz)) return {};
  const double c = std::cos(e.gamma);
  const double delta_term = opts.form == ErrorForm::kFull ? gains.k3 * e.delta : 0.0;
  return {gains.k1 * e.rho * c,
          gains.k2 * e.gamma + gains.k1 * sin_cos_over(e.gamma) * (e.gamma + delta_term)};
}

VelocityCmd kappa_iss(const PolarError& e, const Gains& gains, const ControlOptions& opts) {
  if (e.converged(opts.rho_dz)) return {};
  const VelocityCmd nominal = kappa(e, gains, opts);
  const PolarInputMatrix g = polar_input_matrix(e);
  double gt_v = g[0][0] * e.rho + g[1][0] * e.gamma;
  double gt_w = g[0][1] * e.rho + g[1][1] * e.gamma;
  if (opts.form == ErrorForm::kFull) {
    gt_v += g[2][0] * e.delta;
    gt_w += g[2][1] * e.delta;
  }
  return {nominal.v - gt_v / gains.lambda1, nominal.omega - gt_w / gains.lambda1};
}

double lyapunov(const PolarError& e, double k3, ErrorForm form) {
  const double base = e.rho * e.rho + e.gamma * e.gamma;
  if (form == ErrorForm::kReduced) return 0.5 * base;
  return 0.5 * (base + k3 * e.delta * e.delta);
}

double iss_weight_bound(const Gains& gains, double z_matched, int samples) {
  if (z_matched <= 0.0) return std::numeric_limits<double>::infinity();
  // Boundary of {V_hat <= Z^2/4}: rho^2 + gamma^2 = Z^2/2, rho > 0.
  const double radius = z_matched / std::sqrt(2.0);
  double bound = std::numeric_limits<double>::infinity();
  for (int i = 1; i < samples; ++i) {
    const double phi = -kPi / 2.0 + kPi * i / samples;
    PolarError e{radius * std::cos(phi), radius * std::sin(phi), 0.0};
    const double c = std::cos(e.gamma), s = std::sin(e.gamma);
    const double a_v = -c * e.rho + s * e.gamma / e.rho;
    const double a_w = -e.gamma;
    const double a_norm = std::hypot(a_v, a_w);
    // e^T g_hat kappa_hat = -(k1 rho^2 cos^2 + k2 gamma^2)
    const double decay = gains.k1 * e.rho * e.rho * c * c + gains.k2 * e.gamma * e.gamma;
    // dV/dt = -decay - |a|^2/lambda1 + |a| Z under the worst disturbance.
    const double excess = a_norm * z_matched - decay;
    if (excess > 0.0) bound = std::min(bound, a_norm * a_norm / excess);
  }
  return bound;
}

double tube_radius(double tau, const DiscrepancyBounds& bounds, const TubeParams& tube) {
  const double denom = tube.alpha1 - bounds.z_unmatched * tau * std::exp(tube.lipschitz_V * tau);
  if (!(denom > 0.0)) {
    throw TubeBlowUp("tube radius undefined: Z_perp tau exp(l_V tau) >= alpha1 at tau = " +
                     std::to_string(tau));
  }
  return bounds.z_matched * bounds.z_matched / (4.0 * denom);
}

TubeRadii tube_radii(const DiscrepancyBounds& bounds, const TubeParams& tube) {
  return {tube_radius(0.0, bounds, tube), tube_radius(tube.dt, bounds, tube)};
}

VelocityCmd compose_command(const VelocityCmd& u_star, const PolarError& e, const Gains& gains,
                            const Limits& limits, ErrorForm form) {
  return clamp(u_star + kappa_iss(e, gains, {form, limits.rho_dz}), limits);
}

}  // namespace safenav
