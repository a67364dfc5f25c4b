#pragma once

// Matched/unmatched discrepancy extraction and split-conformal calibration.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "safenav/controller.hpp"
#include "safenav/core.hpp"

namespace safenav {

struct TrainingTuple {
  double time = 0.0;
  Pose prev_state;      // x_{i-1}
  Pose measured_state;  // x_hat_i
  Pose optimal_state;   // x*_i
  VelocityCmd applied_input;  // u_{i-1}
  VelocityCmd optimal_input;  // u*_{i-1}
  double dt = 0.05;
};

struct DiscrepancySample {
  double matched_norm = 0.0;
  double unmatched_mag = 0.0;
  std::array<double, 2> matched{};    // d_u
  std::array<double, 3> unmatched{};  // de - G d_u
};

enum class IntegralRule { kOnePoint, kMidpoint };
enum class ScoreMode { kRaw, kMeanOffset };

struct CalibrationConfig {
  double epsilon = 0.01;
  std::size_t subsample = 3000;
  std::uint64_t seed = 0;
  double dead_zone = 0.01;  // tuples with rho(e_{i-1}) below this are skipped
  IntegralRule rule = IntegralRule::kOnePoint;
  ScoreMode score = ScoreMode::kRaw;
  bool drop_wrap_outliers = false;

  void validate() const;
};

// nullopt when the tuple lies in the extraction dead zone.
std::optional<DiscrepancySample> extract_discrepancy(const TrainingTuple& tuple,
                                                     const CalibrationConfig& config = {});

// True when an angle component of the measured-vs-nominal error difference wrapped.
bool has_wrap_outlier(const TrainingTuple& tuple);

struct QuantileResult {
  double value = 0.0;
  std::size_t index = 0;  // 1-based order index into scores + {inf}
  bool insufficient = false;
};

// ceil((n + 1)(1 - eps)) for n scores.
std::size_t quantile_index(std::size_t n, double epsilon);

// Smallest n with quantile_index(n, eps) <= n.
std::size_t min_samples_for(double epsilon);

QuantileResult conformal_quantile(std::vector<double> scores, double epsilon);

struct CalibrationReport {
  DiscrepancyBounds bounds;
  std::size_t quantile_index = 0;
  std::size_t skipped_dead_zone = 0;
  std::size_t skipped_outliers = 0;
  std::vector<DiscrepancySample> samples;
};

// Throws InsufficientData when the dataset is smaller than the subsample or the
// usable scores cannot support the requested risk.
CalibrationReport calibrate(const std::vector<TrainingTuple>& dataset, const CalibrationConfig& config);

// Recomputes bounds at a new risk level from previously extracted samples.
DiscrepancyBounds recalibrate(const std::vector<DiscrepancySample>& samples, double epsilon,
                              ScoreMode mode = ScoreMode::kRaw);

}  // namespace safenav
