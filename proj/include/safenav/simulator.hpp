#pragma once

// Closed-loop testbed: true-model propagation with parametric disturbances,
// training data generation and the obstacle tracking experiment.

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "safenav/conformal.hpp"
#include "safenav/controller.hpp"
#include "safenav/core.hpp"
#include "safenav/gridmap.hpp"
#include "safenav/mppi.hpp"
#include "safenav/reference.hpp"

namespace safenav {

struct DisturbanceModel {
  double slip_gain = 1.0;    // factor on commanded v
  double omega_gain = 1.0;   // factor on commanded omega
  double input_delay = 0.0;  // seconds, rounded to whole control steps
  double lag_tau = 0.0;      // first-order actuator time constant
  double lateral_skid = 0.0; // body-frame lateral velocity, m/s
  std::array<double, 2> noise_std{};  // additive (v, omega) noise
  std::uint64_t seed = 0;

  void validate() const;
  int delay_steps(double dt) const;
  bool operator==(const DisturbanceModel&) const = default;
};

// "none" (alias "identity"), "A", "B", "C", "D" or "experiment" (slip 0.85, 0.1 s delay, 0.05 m/s skid).
DisturbanceModel disturbance_preset(std::string_view name);

struct SimState {
  Pose pose;
  std::deque<VelocityCmd> pending;  // delayed commands, oldest first
  VelocityCmd actuator;             // lag filter output
  double clock = 0.0;
  std::array<double, 3> discrepancy{};  // (true step - nominal step) / dt of the last step
  std::mt19937_64 rng;
};

SimState make_sim_state(const Pose& pose, const DisturbanceModel& model, double dt);

// Integrates `substeps` Euler steps per control period.
SimState step_true(const SimState& state, const VelocityCmd& cmd, const DisturbanceModel& model, double dt,
                   int substeps = 1);

struct TrainingConfig {
  std::vector<double> lap_times{20.0, 30.0, 40.0, 50.0};
  double duration = 300.0;  // seconds per lap time
  double dt = 0.05;
  Gains gains;
  Limits limits;
  ControlOptions control;
  int substeps = 1;

  void validate() const;
};

struct TrainingRun {
  std::vector<TrainingTuple> tuples;
  std::vector<std::array<double, 3>> realized;  // f tilde per tuple
};

// Nominal tracking of the figure-8 at each lap time; one tuple per control step.
TrainingRun generate_training(const DisturbanceModel& model, const TrainingConfig& config);

struct Scenario {
  std::string name = "scenario";
  Figure8 path;
  double laps = 10.0;
  double dt = 0.05;
  ObstacleSet obstacles;
  GridGeometry grid;
  SensorModel sensor;
  double sense_period = 0.5;
  bool known_map = false;  // start from the rasterized truth instead of unknown
  DisturbanceModel disturbance;
  int substeps = 1;
  DiscrepancyBounds bounds;
  TubeParams tube;
  Gains gains;
  Limits limits;
  ControlOptions control;
  MppiParams mppi;
  CostWeights weights;
  double alpha_shift = 0.1;
  double r_ego = 0.3;
  bool discrepancy_aware = true;  // false: N_eps = 0, no initial-step penalty, plain kappa
  bool abort_on_contact = false;

  void validate() const;
};

struct LogSample {
  double clock = 0.0;
  Pose pose;
  VelocityCmd command;
  Pose optimal;     // x*_1 of the cycle's plan
  Vec2 reference;
  bool collision_free = false;
  bool initial_error_ok = false;
  int attempts = 0;
  double plan_cost = 0.0;
  std::array<double, 3> discrepancy{};
};

enum class EventKind { kLethalEntry, kContact, kRetry };

struct LogEvent {
  double clock = 0.0;
  EventKind kind = EventKind::kContact;
  Vec2 position;
};

struct RunLog {
  std::string scenario;
  double dt = 0.05;
  double r_ego = 0.0;
  int n_eps = 0;
  double r0 = 0.0;
  double r_dt = 0.0;
  ObstacleSet obstacles;
  std::vector<LogSample> samples;
  std::vector<LogEvent> events;
  bool aborted = false;
};

// Everything a certificate check needs for one planning cycle.
struct CycleTrace {
  double clock = 0.0;
  const PlanResult* plan = nullptr;
  const OccupancyGrid* belief = nullptr;
  const DiscrepancyCostMap* costmap = nullptr;
  double r_dt = 0.0;
  double r_ego = 0.0;
};

using CycleObserver = std::function<void(const CycleTrace&)>;

// N_eps used by the experiment: the tube radius plus r_ego plus half a cell diagonal.
int experiment_buffer_cells(double r_dt, double r_ego, double r_map);

RunLog run_tracking_experiment(const Scenario& scenario, const CycleObserver& observer = {});

struct RunMetrics {
  double rms_error = 0.0;
  double max_error = 0.0;
  double min_clearance = 0.0;  // centre to nearest true obstacle
  int contacts = 0;
  int lethal_entries = 0;
  double mean_plan_cost = 0.0;
  int retries = 0;
  std::size_t steps = 0;
};

RunMetrics metrics(const RunLog& log);

std::string_view to_string(EventKind kind);

}  // namespace safenav
