#include "safenav/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "safenav/errors.hpp"

namespace safenav {

void DisturbanceModel::validate() const {
  if (!(slip_gain > 0.0 && slip_gain <= 2.0)) throw ConfigError("disturbance: slip_gain must lie in (0, 2]");
  if (!(omega_gain > 0.0 && omega_gain <= 2.0)) throw ConfigError("disturbance: omega_gain must lie in (0, 2]");
  if (!(input_delay >= 0.0)) throw ConfigError("disturbance: input_delay must be nonnegative");
  if (!(lag_tau >= 0.0)) throw ConfigError("disturbance: lag_tau must be nonnegative");
  if (!std::isfinite(lateral_skid)) throw ConfigError("disturbance: lateral_skid must be finite");
  if (!(noise_std[0] >= 0.0 && noise_std[1] >= 0.0)) throw ConfigError("disturbance: noise_std must be nonnegative");
}

int DisturbanceModel::delay_steps(double dt) const {
  return static_cast<int>(std::lround(input_delay / dt));
}

DisturbanceModel disturbance_preset(std::string_view name) {
  DisturbanceModel m;
  if (name == "none" || name == "identity") return m;
  // A-D land near Z = 0.4, Z_perp = 0.01-0.02 at eps = 0.01 on the default training run.
  if (name == "A") {
    m.slip_gain = 0.75;
    m.input_delay = 0.1;
    m.lateral_skid = 0.06;
    m.noise_std = {0.02, 0.02};
  } else if (name == "B") {
    m.slip_gain = 0.75;
    m.omega_gain = 0.85;
    m.input_delay = 0.05;
    m.lateral_skid = 0.05;
    m.noise_std = {0.03, 0.03};
  } else if (name == "C") {
    m.slip_gain = 0.85;
    m.lag_tau = 0.1;
    m.lateral_skid = 0.04;
    m.noise_std = {0.05, 0.05};
  } else if (name == "D") {
    m.slip_gain = 0.8;
    m.omega_gain = 0.9;
    m.input_delay = 0.05;
    m.lag_tau = 0.15;
    m.lateral_skid = 0.06;
  } else if (name == "experiment") {
    m.slip_gain = 0.85;
    m.input_delay = 0.1;
    m.lateral_skid = 0.05;
  } else {
    throw ConfigError("unknown disturbance preset '" + std::string(name) + "'");
  }
  return m;
}

SimState make_sim_state(const Pose& pose, const DisturbanceModel& model, double dt) {
  model.validate();
  if (!(dt > 0.0)) throw ConfigError("simulator: dt must be positive");
  SimState s;
  s.pose = pose;
  s.pending.assign(static_cast<std::size_t>(model.delay_steps(dt)), VelocityCmd{});
  s.rng.seed(model.seed);
  return s;
}

SimState step_true(const SimState& state, const VelocityCmd& cmd, const DisturbanceModel& model, double dt,
                   int substeps) {
  if (!(dt > 0.0)) throw ConfigError("step_true: dt must be positive");
  if (substeps < 1) throw ConfigError("step_true: substeps must be at least 1");
  SimState next = state;

  VelocityCmd delayed = cmd;
  if (!next.pending.empty()) {
    next.pending.push_back(cmd);
    delayed = next.pending.front();
    next.pending.pop_front();
  }
  if (model.lag_tau > 0.0) {
    next.actuator = next.actuator + (1.0 - std::exp(-dt / model.lag_tau)) * (delayed - next.actuator);
  } else {
    next.actuator = delayed;
  }

  double v = model.slip_gain * next.actuator.v;
  double w = model.omega_gain * next.actuator.omega;
  if (model.noise_std[0] > 0.0 || model.noise_std[1] > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    v += model.noise_std[0] * normal(next.rng);
    w += model.noise_std[1] * normal(next.rng);
  }

  const double h = dt / substeps;
  double x = state.pose.x, y = state.pose.y, th = state.pose.theta;
  for (int k = 0; k < substeps; ++k) {
    const double c = std::cos(th), s = std::sin(th);
    x += (v * c - model.lateral_skid * s) * h;
    y += (v * s + model.lateral_skid * c) * h;
    th += w * h;
  }
  next.pose = {x, y, wrap_angle(th)};
  next.clock = state.clock + dt;

  const Pose nominal = step_nominal(state.pose, cmd, dt);
  next.discrepancy = {(next.pose.x - nominal.x) / dt, (next.pose.y - nominal.y) / dt,
                      wrap_angle(next.pose.theta - nominal.theta) / dt};
  return next;
}

void TrainingConfig::validate() const {
  if (lap_times.empty()) throw ConfigError("training: lap_times must be nonempty");
  for (double t : lap_times) {
    if (!(t > 0.0)) throw ConfigError("training: lap times must be positive");
  }
  if (!(duration > 0.0)) throw ConfigError("training: duration must be positive");
  if (!(dt > 0.0)) throw ConfigError("training: dt must be positive");
  if (substeps < 1) throw ConfigError("training: substeps must be at least 1");
  gains.validate();
  limits.validate();
}

TrainingRun generate_training(const DisturbanceModel& model, const TrainingConfig& config) {
  config.validate();
  model.validate();
  TrainingRun out;
  const int steps = static_cast<int>(std::lround(config.duration / config.dt));
  out.tuples.reserve(config.lap_times.size() * static_cast<std::size_t>(steps));
  out.realized.reserve(out.tuples.capacity());

  for (std::size_t run = 0; run < config.lap_times.size(); ++run) {
    Figure8 fig;
    fig.lap_time = config.lap_times[run];
    const ReferencePath path = fig;
    DisturbanceModel m = model;
    m.seed = model.seed + run;
    SimState state = make_sim_state(flat_reference(sample(path, 0.0)).first, m, config.dt);
    for (int i = 1; i <= steps; ++i) {
      const double t_prev = (i - 1) * config.dt;
      const auto [target_prev, u_star] = flat_reference(sample(path, t_prev));
      const PolarError e = polar_error(state.pose, target_prev);
      const VelocityCmd u = clamp(u_star + kappa(e, config.gains, config.control), config.limits);
      const Pose prev = state.pose;
      state = step_true(state, u, m, config.dt, config.substeps);

      TrainingTuple t;
      t.time = i * config.dt;
      t.prev_state = prev;
      t.measured_state = state.pose;
      t.optimal_state = flat_reference(sample(path, t.time)).first;
      t.applied_input = u;
      t.optimal_input = u_star;
      t.dt = config.dt;
      out.tuples.push_back(t);
      out.realized.push_back(state.discrepancy);
    }
  }
  return out;
}

void Scenario::validate() const {
  if (!(path.lap_time > 0.0)) throw ConfigError("scenario: lap_time must be positive");
  if (!(laps > 0.0)) throw ConfigError("scenario: laps must be positive");
  if (!(dt > 0.0)) throw ConfigError("scenario: dt must be positive");
  if (std::abs(mppi.dt - dt) > 1e-12) throw ConfigError("scenario: planner dt must equal the control period");
  if (!(sense_period > 0.0)) throw ConfigError("scenario: sense_period must be positive");
  if (!(r_ego >= 0.0)) throw ConfigError("scenario: r_ego must be nonnegative");
  if (!(alpha_shift >= 0.0)) throw ConfigError("scenario: alpha_shift must be nonnegative");
  if (substeps < 1) throw ConfigError("scenario: substeps must be at least 1");
  grid.validate();
  disturbance.validate();
  bounds.validate();
  tube.validate();
  gains.validate();
  limits.validate();
  mppi.validate();
  weights.validate();
}

int experiment_buffer_cells(double r_dt, double r_ego, double r_map) {
  return buffer_cells(r_dt, r_ego + r_map / std::sqrt(2.0), r_map);
}

namespace {

bool lethal_position(const DiscrepancyCostMap& map, Vec2 p) {
  return query_cost(map, p) >= map.lethal_threshold;
}

}  // namespace

RunLog run_tracking_experiment(const Scenario& sc, const CycleObserver& observer) {
  sc.validate();
  const ReferencePath path = sc.path;
  const int n = sc.mppi.horizon;
  const int steps = static_cast<int>(std::lround(sc.laps * sc.path.lap_time / sc.dt));
  const int sense_every = std::max(1, static_cast<int>(std::lround(sc.sense_period / sc.dt)));

  RunLog log;
  log.scenario = sc.name;
  log.dt = sc.dt;
  log.r_ego = sc.r_ego;
  log.obstacles = sc.obstacles;
  if (sc.discrepancy_aware) {
    const TubeRadii radii = tube_radii(sc.bounds, sc.tube);
    log.r0 = radii.r0;
    log.r_dt = radii.r_dt;
    log.n_eps = experiment_buffer_cells(radii.r_dt, sc.r_ego, sc.grid.resolution);
  } else {
    log.r0 = std::numeric_limits<double>::infinity();
  }

  const OccupancyGrid truth = rasterize(sc.obstacles, sc.grid);
  OccupancyGrid belief = sc.known_map ? truth : OccupancyGrid(sc.grid, kUnknown);
  DiscrepancyCostMap costmap = inflate(belief, log.n_eps, sc.alpha_shift, sc.weights.cap);

  MppiPlanner planner(sc.mppi, sc.weights, sc.limits);
  SimState state = make_sim_state(flat_reference(sample(path, 0.0)).first, sc.disturbance, sc.dt);

  std::vector<VelocityCmd> warm;
  for (const ReferencePoint& r : sample_horizon(path, 0.0, sc.dt, n - 1)) {
    warm.push_back(flat_reference_or_stop(r).second);
  }

  bool in_contact = false, in_lethal = false;
  std::vector<Vec2> reference(static_cast<std::size_t>(n) + 1);
  log.samples.reserve(static_cast<std::size_t>(steps));

  for (int i = 0; i < steps; ++i) {
    const double t = i * sc.dt;
    if (i % sense_every == 0) {
      OccupancyGrid updated = sensor_update(belief, state.pose, truth, sc.sensor);
      if (updated.cells != belief.cells) {
        belief = std::move(updated);
        costmap = inflate(belief, log.n_eps, sc.alpha_shift, sc.weights.cap);
      }
    }
    const std::vector<ReferencePoint> horizon = sample_horizon(path, t, sc.dt, n);
    for (int k = 0; k <= n; ++k) reference[k] = horizon[k].position;

    const PlanResult plan = planner.plan(state.pose, reference, costmap, log.r0, warm);
    if (observer) observer({t, &plan, &belief, &costmap, log.r_dt, sc.r_ego});

    const PolarError e = polar_error(state.pose, plan.states[1]);
    const VelocityCmd u = sc.discrepancy_aware
                              ? compose_command(plan.inputs[0], e, sc.gains, sc.limits, sc.control.form)
                              : clamp(plan.inputs[0] + kappa(e, sc.gains, sc.control), sc.limits);
    state = step_true(state, u, sc.disturbance, sc.dt, sc.substeps);

    LogSample s;
    s.clock = t;
    s.pose = state.pose;
    s.command = u;
    s.optimal = plan.states[1];
    s.reference = sample(path, t + sc.dt).position;
    s.collision_free = plan.collision_free;
    s.initial_error_ok = plan.initial_error_ok;
    s.attempts = plan.attempts;
    s.plan_cost = plan.total_cost;
    s.discrepancy = state.discrepancy;
    log.samples.push_back(s);

    const Vec2 p{state.pose.x, state.pose.y};
    if (plan.attempts > 1) log.events.push_back({state.clock, EventKind::kRetry, p});
    const bool lethal = lethal_position(costmap, p);
    if (lethal && !in_lethal) log.events.push_back({state.clock, EventKind::kLethalEntry, p});
    in_lethal = lethal;
    const bool contact = sc.obstacles.distance(p) < sc.r_ego;
    if (contact && !in_contact) log.events.push_back({state.clock, EventKind::kContact, p});
    in_contact = contact;
    if (contact && sc.abort_on_contact) {
      log.aborted = true;
      break;
    }

    warm = shift_warm_start(plan.inputs, sample(path, t + (n + 1) * sc.dt));
  }
  return log;
}

RunMetrics metrics(const RunLog& log) {
  if (log.samples.empty()) throw ConfigError("metrics: empty log");
  RunMetrics m;
  m.steps = log.samples.size();
  m.min_clearance = std::numeric_limits<double>::infinity();
  double sq = 0.0, cost = 0.0;
  for (const LogSample& s : log.samples) {
    const double err = std::hypot(s.pose.x - s.reference.x, s.pose.y - s.reference.y);
    sq += err * err;
    m.max_error = std::max(m.max_error, err);
    cost += s.plan_cost;
    m.min_clearance = std::min(m.min_clearance, log.obstacles.distance({s.pose.x, s.pose.y}));
  }
  m.rms_error = std::sqrt(sq / static_cast<double>(m.steps));
  m.mean_plan_cost = cost / static_cast<double>(m.steps);
  for (const LogEvent& e : log.events) {
    switch (e.kind) {
      case EventKind::kContact: ++m.contacts; break;
      case EventKind::kLethalEntry: ++m.lethal_entries; break;
      case EventKind::kRetry: ++m.retries; break;
    }
  }
  return m;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kLethalEntry: return "lethal_entry";
    case EventKind::kContact: return "contact";
    case EventKind::kRetry: return "retry";
  }
  return "unknown";
}

}  // namespace safenav
