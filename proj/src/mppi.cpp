#include "safenav/mppi.hpp"

#include <Eigen/Eigenvalues>
#include <boost/random/normal_distribution.hpp>
#include <algorithm>
#include <cmath>
#include <limits>

#include "safenav/errors.hpp"

namespace safenav {

namespace {

bool positive_definite(const Eigen::Matrix2d& m) {
  if (!m.isApprox(m.transpose())) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff() > 0.0;
}

double quad(const Eigen::Matrix2d& m, double a, double b) {
  return a * (m(0, 0) * a + m(0, 1) * b) + b * (m(1, 0) * a + m(1, 1) * b);
}

// Weight of the cost-map term at step k >= 1.
double schedule_weight(CollisionSchedule s, int k) {
  return s == CollisionSchedule::kUniform ? 1.0 : 1.0 / (static_cast<double>(k) * k);
}

}  // namespace

void MppiParams::validate() const {
  if (horizon < 1) throw ConfigError("mppi: horizon must be at least 1");
  if (sample_count < 1) throw ConfigError("mppi: sample_count must be at least 1");
  if (!(sigma(0) > 0.0 && sigma(1) > 0.0)) throw ConfigError("mppi: sigma must be positive");
  if (!(lambda > 0.0)) throw ConfigError("mppi: lambda must be positive");
  if (!(dt > 0.0)) throw ConfigError("mppi: dt must be positive");
  if (max_attempts < 1) throw ConfigError("mppi: max_attempts must be at least 1");
}

void CostWeights::validate() const {
  if (!positive_definite(q_stage) || !positive_definite(q_terminal) || !positive_definite(r_input)) {
    throw ConfigError("cost weights: Q, Q_T and R must be positive definite");
  }
  if (!(alpha_iss > 0.0) || !(cap > 0.0)) throw ConfigError("cost weights: alpha_iss and cap must be positive");
}

double default_lethal_threshold(const Eigen::Matrix2d& q_stage, const Limits& limits, int horizon) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(q_stage, Eigen::EigenvaluesOnly);
  const double reach = limits.v_max * horizon * limits.dt;
  return horizon * solver.eigenvalues().maxCoeff() * reach * reach;
}

std::vector<Pose> rollout(const Pose& start, const std::vector<VelocityCmd>& inputs, const Limits& limits,
                          double dt) {
  std::vector<Pose> traj;
  traj.reserve(inputs.size() + 1);
  traj.push_back(start);
  for (const VelocityCmd& u : inputs) traj.push_back(step_nominal(traj.back(), clamp(u, limits), dt));
  return traj;
}

CostBreakdown trajectory_cost(const std::vector<Pose>& traj, const std::vector<VelocityCmd>& inputs,
                              const std::vector<Vec2>& reference, const DiscrepancyCostMap& costmap,
                              const CostWeights& weights, double r0) {
  const std::size_t n = inputs.size();
  if (traj.size() != n + 1 || reference.size() < n + 1) {
    throw ConfigError("trajectory_cost: need horizon + 1 states and reference points");
  }
  CostBreakdown c;
  if (weights.track_reference) {
    double tracking = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      tracking += quad(weights.q_stage, traj[k].x - reference[k].x, traj[k].y - reference[k].y) +
                  0.5 * quad(weights.r_input, inputs[k].v, inputs[k].omega);
    }
    tracking += quad(weights.q_terminal, traj[n].x - reference[n].x, traj[n].y - reference[n].y);
    c.tracking = std::min(tracking, weights.cap);
  }
  for (std::size_t k = 1; k <= n; ++k) {
    const double cell = query_cost(costmap, {traj[k].x, traj[k].y});
    c.collision += schedule_weight(weights.schedule, static_cast<int>(k)) * cell;
    if (cell >= costmap.lethal_threshold) ++c.lethal_steps;
  }
  if (n >= 1 && std::hypot(traj[1].x - traj[0].x, traj[1].y - traj[0].y) >= r0) c.iss_penalty = weights.alpha_iss;
  c.total = c.tracking + c.collision + c.iss_penalty;
  return c;
}

std::vector<double> importance_weights(const std::vector<double>& costs, const std::vector<double>& coupling,
                                       double lambda) {
  const std::size_t n = costs.size();
  std::vector<double> w(n);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = -costs[j] / lambda - (coupling.empty() ? 0.0 : coupling[j]);
    top = std::max(top, w[j]);
  }
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

double control_coupling(const std::vector<VelocityCmd>& nominal, const std::vector<VelocityCmd>& delta,
                        const MppiParams& params) {
  double s = 0.0;
  for (std::size_t k = 0; k < nominal.size(); ++k) {
    s += nominal[k].v * (nominal[k].v + 2.0 * delta[k].v) / params.sigma(0) +
         nominal[k].omega * (nominal[k].omega + 2.0 * delta[k].omega) / params.sigma(1);
  }
  return params.form == WeightForm::kConventional ? 0.5 * s : s;
}

std::vector<VelocityCmd> aggregate(const std::vector<VelocityCmd>& nominal,
                                   const std::vector<std::vector<VelocityCmd>>& perturbations,
                                   const std::vector<double>& costs, const MppiParams& params) {
  if (perturbations.size() != costs.size() || perturbations.empty()) {
    throw ConfigError("aggregate: need one cost per perturbation sequence");
  }
  std::vector<double> coupling(costs.size());
  for (std::size_t j = 0; j < costs.size(); ++j) {
    if (perturbations[j].size() != nominal.size()) throw ConfigError("aggregate: sequence length mismatch");
    coupling[j] = control_coupling(nominal, perturbations[j], params);
  }
  const std::vector<double> w = importance_weights(costs, coupling, params.lambda);
  std::vector<VelocityCmd> out = nominal;
  for (std::size_t j = 0; j < costs.size(); ++j) {
    if (w[j] == 0.0) continue;
    for (std::size_t k = 0; k < nominal.size(); ++k) out[k] = out[k] + w[j] * perturbations[j][k];
  }
  return out;
}

std::vector<VelocityCmd> shift_warm_start(const std::vector<VelocityCmd>& previous, const ReferencePoint& tail) {
  std::vector<VelocityCmd> out;
  if (previous.empty()) return out;
  out.assign(previous.begin() + 1, previous.end());
  out.push_back(flat_reference_or_stop(tail).second);
  return out;
}

MppiPlanner::MppiPlanner(MppiParams params, CostWeights weights, Limits limits)
    : params_(std::move(params)), weights_(std::move(weights)), limits_(limits), rng_(params_.seed) {
  params_.validate();
  weights_.validate();
  limits_.validate();
}

double MppiPlanner::evaluate_sample(const Pose& state, const std::vector<VelocityCmd>& nominal,
                                    const double* delta, const std::vector<Vec2>& reference,
                                    const DiscrepancyCostMap& costmap, double r0) const {
  const int n = params_.horizon;
  const double dt = params_.dt;
  const Eigen::Matrix2d& q = weights_.q_stage;
  const Eigen::Matrix2d& r = weights_.r_input;
  const GridGeometry& g = costmap.geometry;
  const double half_w = 0.5 * g.width, half_h = 0.5 * g.height;
  const bool uniform = weights_.schedule == CollisionSchedule::kUniform;
  double x = state.x, y = state.y, th = state.theta;
  double tracking = 0.0, collision = 0.0, iss = 0.0;
  for (int k = 0; k < n; ++k) {
    const VelocityCmd u = clamp({nominal[k].v + delta[2 * k], nominal[k].omega + delta[2 * k + 1]}, limits_);
    if (weights_.track_reference) {
      tracking += quad(q, x - reference[k].x, y - reference[k].y) + 0.5 * quad(r, u.v, u.omega);
    }
    // Same Euler step as step_nominal; the heading is left unwrapped.
    const double dx = u.v * std::cos(th) * dt, dy = u.v * std::sin(th) * dt;
    if (k == 0 && std::hypot(dx, dy) >= r0) iss = weights_.alpha_iss;
    x += dx;
    y += dy;
    th += u.omega * dt;
    // cell_of, inlined
    const double cu = (x - g.origin.x) / g.resolution + half_w, cv = (y - g.origin.y) / g.resolution + half_h;
    const double cell = (cu >= 0.0 && cv >= 0.0 && cu < g.width && cv < g.height)
                            ? costmap.at(static_cast<int>(cu), static_cast<int>(cv))
                            : costmap.lethal_threshold;
    collision += uniform ? cell : cell / ((k + 1.0) * (k + 1.0));
  }
  if (weights_.track_reference) tracking += quad(weights_.q_terminal, x - reference[n].x, y - reference[n].y);
  return std::min(tracking, weights_.cap) + collision + iss;
}

PlanResult MppiPlanner::plan(const Pose& state, const std::vector<Vec2>& reference,
                             const DiscrepancyCostMap& costmap, double r0, const std::vector<VelocityCmd>& warm) {
  return plan(state, reference, costmap, r0, std::vector<WarmGroup>{{warm, params_.sample_count}});
}

PlanResult MppiPlanner::plan(const Pose& state, const std::vector<Vec2>& reference,
                             const DiscrepancyCostMap& costmap, double r0, const std::vector<WarmGroup>& groups) {
  const int n = params_.horizon;
  if (reference.size() < static_cast<std::size_t>(n) + 1) throw ConfigError("plan: reference shorter than horizon + 1");
  int total = 0;
  for (const WarmGroup& g : groups) {
    if (g.inputs.size() != static_cast<std::size_t>(n)) throw ConfigError("plan: warm start length must equal horizon");
    if (g.samples < 0) throw ConfigError("plan: negative sample count");
    total += g.samples;
  }
  if (total < 1) throw ConfigError("plan: no samples");

  const std::size_t stride = 2 * static_cast<std::size_t>(n);
  noise_.resize(static_cast<std::size_t>(total) * stride);
  costs_.resize(static_cast<std::size_t>(total));
  coupling_.resize(static_cast<std::size_t>(total));
  const double sd_v = std::sqrt(params_.sigma(0)), sd_w = std::sqrt(params_.sigma(1));
  const double coupling_scale = params_.form == WeightForm::kConventional ? 0.5 : 1.0;

  PlanResult result;
  for (int attempt = 1; attempt <= params_.max_attempts; ++attempt) {
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < noise_.size(); i += 2) {
      noise_[i] = sd_v * normal(rng_);
      noise_[i + 1] = sd_w * normal(rng_);
    }

    std::size_t j = 0;
    for (const WarmGroup& g : groups) {
      for (int s = 0; s < g.samples; ++s, ++j) {
        const double* d = &noise_[j * stride];
        costs_[j] = evaluate_sample(state, g.inputs, d, reference, costmap, r0);
        double c = 0.0;
        for (int k = 0; k < n; ++k) {
          const VelocityCmd& u = g.inputs[static_cast<std::size_t>(k)];
          c += u.v * (u.v + 2.0 * d[2 * k]) / params_.sigma(0) + u.omega * (u.omega + 2.0 * d[2 * k + 1]) / params_.sigma(1);
        }
        coupling_[j] = coupling_scale * c;
      }
    }

    const std::vector<double> w = importance_weights(costs_, coupling_, params_.lambda);
    std::vector<VelocityCmd> u_star(static_cast<std::size_t>(n));
    j = 0;
    for (const WarmGroup& g : groups) {
      for (int s = 0; s < g.samples; ++s, ++j) {
        if (w[j] == 0.0) continue;
        const double* d = &noise_[j * stride];
        for (int k = 0; k < n; ++k) {
          u_star[k].v += w[j] * (g.inputs[k].v + d[2 * k]);
          u_star[k].omega += w[j] * (g.inputs[k].omega + d[2 * k + 1]);
        }
      }
    }
    for (auto& u : u_star) u = clamp(u, limits_);

    result.inputs = std::move(u_star);
    result.states = rollout(state, result.inputs, limits_, params_.dt);
    result.cost = trajectory_cost(result.states, result.inputs, reference, costmap, weights_, r0);
    result.total_cost = result.cost.total;
    result.collision_free = result.total_cost < weights_.cap && result.cost.lethal_steps == 0;
    result.initial_error_ok =
        std::hypot(result.states[1].x - result.states[0].x, result.states[1].y - result.states[0].y) < r0;
    result.attempts = attempt;
    if (result.initial_error_ok) break;
  }
  return result;
}

PlanResult plan(const Pose& state, const std::vector<Vec2>& reference, const DiscrepancyCostMap& costmap,
                const DiscrepancyBounds& bounds, const TubeParams& tube, const MppiParams& params,
                const CostWeights& weights, const std::vector<VelocityCmd>& warm, const Limits& limits) {
  MppiPlanner planner(params, weights, limits);
  return planner.plan(state, reference, costmap, tube_radius(0.0, bounds, tube), warm);
}

}  // namespace safenav
