#pragma once

// Run configuration: one JSON document drives train, track, inflate and the
// assist service. Unknown keys are rejected with their JSON pointer.

#include <cstdint>
#include <filesystem>
#include <string>

#include "safenav/assist.hpp"
#include "safenav/conformal.hpp"
#include "safenav/simulator.hpp"

namespace safenav {

struct Seeds {
  std::uint64_t planner = 0;
  std::uint64_t disturbance = 0;
  std::uint64_t calibration = 0;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8765;
  double rate_hz = 20.0;
  Pose start{0.0, 0.0, 0.0};
};

struct RunConfig {
  std::string scenario_path;       // empty when the scenario is inline
  Scenario scenario;               // disturbance, seeds and bounds are filled in separately
  std::string disturbance = "experiment";
  double epsilon = 0.01;
  Seeds seeds;
  TrainingConfig training;
  CalibrationConfig calibration;   // epsilon and seed mirror the top-level fields
  AssistParams assist;
  ServiceConfig service;
  std::string output_dir = "out";

  void validate() const;
};

// `base_dir` resolves a relative scenario path.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// Copies the shared sections (gains, limits, control, epsilon, seeds, disturbance)
// into every consumer. Call after editing a parsed config.
void propagate_shared(RunConfig& config);

// Full document with every field; the scenario is written inline.
std::string serialize_config(const RunConfig& config);

// Scenario JSON (the "scenario" object of a run config).
Scenario parse_scenario(const std::string& text);

// Scenario ready for run_tracking_experiment.
Scenario make_scenario(const RunConfig& config, const DiscrepancyBounds& bounds);
DisturbanceModel make_disturbance(const RunConfig& config);

}  // namespace safenav
