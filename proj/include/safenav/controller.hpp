#pragma once

// Ancillary tracking laws, Lyapunov bookkeeping and tube radii.

#include "safenav/core.hpp"

namespace safenav {

struct Gains {
  double k1 = 0.3;
  double k2 = 0.15;
  double k3 = 1.0;
  double lambda1 = 1000.0;  // ISS augmentation weight

  void validate() const;
};

// Quadratic bounds alpha1 |e|^2 <= V <= alpha2 |e|^2, decay slope and Lipschitz
// constant of V over the operating domain.
struct TubeParams {
  double alpha1 = 0.5;
  double alpha2 = 0.5;
  double alpha3_slope = 0.15;
  double lipschitz_V = kPi / 2.0;
  double dt = 0.05;

  void validate() const;
};

struct DiscrepancyBounds {
  double z_matched = 0.0;    // Z, velocity-command units
  double z_unmatched = 0.0;  // Z_perp, error units
  double epsilon = 0.01;
  std::size_t sample_count = 1;

  void validate() const;
};

struct ControlOptions {
  ErrorForm form = ErrorForm::kReduced;
  double rho_dz = 0.05;
};

// Nominal law. Returns zero inside the dead zone.
VelocityCmd kappa(const PolarError& e, const Gains& gains, const ControlOptions& opts = {});

// kappa(e) - g_p(e)^T e / lambda1.
VelocityCmd kappa_iss(const PolarError& e, const Gains& gains, const ControlOptions& opts = {});

// 1/2 (rho^2 + gamma^2 + k3 delta^2); the reduced form drops delta.
double lyapunov(const PolarError& e, double k3, ErrorForm form = ErrorForm::kFull);

// Largest lambda1 for which the ISS level set {V_hat = Z^2/4} is invariant under
// any matched disturbance with |d_u| <= Z, for the reduced dynamics. Evaluated on a
// dense sweep of the boundary; returns +inf when the nominal decay alone suffices.
double iss_weight_bound(const Gains& gains, double z_matched, int samples = 4096);

// r(tau) = Z^2 / (4 (alpha1 - Z_perp tau exp(l_V tau))). Throws TubeBlowUp when the
// denominator is not positive.
double tube_radius(double tau, const DiscrepancyBounds& bounds, const TubeParams& tube);

struct TubeRadii {
  double r0 = 0.0;
  double r_dt = 0.0;
};

TubeRadii tube_radii(const DiscrepancyBounds& bounds, const TubeParams& tube);

// clamp(u_star + kappa_iss(e)).
VelocityCmd compose_command(const VelocityCmd& u_star, const PolarError& e, const Gains& gains,
                            const Limits& limits, ErrorForm form = ErrorForm::kReduced);

}  // namespace safenav
