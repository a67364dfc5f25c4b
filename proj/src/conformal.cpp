#include "safenav/conformal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>

#include "safenav/errors.hpp"

namespace safenav {

namespace {

using Matrix32 = Eigen::Matrix<double, 3, 2>;

Matrix32 to_eigen(const PolarInputMatrix& g) {
  Matrix32 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) m(r, c) = g[r][c];
  }
  return m;
}

struct ErrorPair {
  PolarError previous;  // e_{i-1}
  PolarError nominal;   // e_i
  PolarError measured;  // e_hat_i
};

ErrorPair error_pair(const TrainingTuple& t) {
  const Pose predicted = step_nominal(t.prev_state, t.applied_input, t.dt);
  return {polar_error(t.prev_state, t.optimal_state), polar_error(predicted, t.optimal_state),
          polar_error(t.measured_state, t.optimal_state)};
}

double min_subsample_guard(std::size_t n) { return 1e-9 * static_cast<double>(n + 1); }

}  // namespace

void CalibrationConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("calibration: epsilon must lie in (0, 1)");
  if (subsample == 0) throw ConfigError("calibration: subsample must be positive");
  if (!(dead_zone >= 0.0)) throw ConfigError("calibration: dead_zone must be nonnegative");
}

bool has_wrap_outlier(const TrainingTuple& tuple) {
  const ErrorPair p = error_pair(tuple);
  return std::abs(p.measured.gamma - p.nominal.gamma) > kPi ||
         std::abs(p.measured.delta - p.nominal.delta) > kPi;
}

std::optional<DiscrepancySample> extract_discrepancy(const TrainingTuple& tuple,
                                                     const CalibrationConfig& config) {
  const ErrorPair p = error_pair(tuple);
  if (p.previous.rho < config.dead_zone || p.previous.rho <= 0.0) return std::nullopt;

  const Eigen::Vector3d de(p.measured.rho - p.nominal.rho, wrap_angle(p.measured.gamma - p.nominal.gamma),
                           wrap_angle(p.measured.delta - p.nominal.delta));

  PolarError anchor = p.previous;
  if (config.rule == IntegralRule::kMidpoint && p.nominal.rho > 0.0) {
    anchor.rho = 0.5 * (p.previous.rho + p.nominal.rho);
    anchor.gamma = p.previous.gamma + 0.5 * wrap_angle(p.nominal.gamma - p.previous.gamma);
    anchor.delta = p.previous.delta + 0.5 * wrap_angle(p.nominal.delta - p.previous.delta);
  }
  const Matrix32 g = to_eigen(polar_input_matrix(anchor)) * tuple.dt;
  const Eigen::Vector2d du = g.completeOrthogonalDecomposition().solve(de);
  const Eigen::Vector3d residual = de - g * du;

  DiscrepancySample s;
  s.matched = {du(0), du(1)};
  s.unmatched = {residual(0), residual(1), residual(2)};
  s.matched_norm = du.norm();
  s.unmatched_mag = residual.norm();
  return s;
}

std::size_t quantile_index(std::size_t n, double epsilon) {
  const double raw = static_cast<double>(n + 1) * (1.0 - epsilon);
  return static_cast<std::size_t>(std::ceil(raw - min_subsample_guard(n)));
}

std::size_t min_samples_for(double epsilon) {
  std::size_t n = static_cast<std::size_t>(std::max(1.0, std::floor((1.0 - epsilon) / epsilon) - 1.0));
  while (quantile_index(n, epsilon) > n) ++n;
  return n;
}

QuantileResult conformal_quantile(std::vector<double> scores, double epsilon) {
  if (scores.empty()) throw InsufficientData(1, 0);
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("conformal_quantile: epsilon must lie in (0, 1)");
  const std::size_t n = scores.size();
  QuantileResult out;
  out.index = std::max<std::size_t>(1, quantile_index(n, epsilon));
  if (out.index > n) {
    out.value = std::numeric_limits<double>::infinity();
    out.insufficient = true;
    return out;
  }
  auto nth = scores.begin() + static_cast<std::ptrdiff_t>(out.index - 1);
  std::nth_element(scores.begin(), nth, scores.end());
  out.value = *nth;
  return out;
}

namespace {

std::pair<std::vector<double>, std::vector<double>> scores_of(const std::vector<DiscrepancySample>& samples,
                                                              ScoreMode mode) {
  std::vector<double> matched, unmatched;
  matched.reserve(samples.size());
  unmatched.reserve(samples.size());
  if (mode == ScoreMode::kRaw) {
    for (const auto& s : samples) {
      matched.push_back(s.matched_norm);
      unmatched.push_back(s.unmatched_mag);
    }
    return {matched, unmatched};
  }
  std::array<double, 2> mu_m{};
  std::array<double, 3> mu_u{};
  for (const auto& s : samples) {
    for (int k = 0; k < 2; ++k) mu_m[k] += s.matched[k];
    for (int k = 0; k < 3; ++k) mu_u[k] += s.unmatched[k];
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (auto& m : mu_m) m *= inv;
  for (auto& m : mu_u) m *= inv;
  for (const auto& s : samples) {
    matched.push_back(std::hypot(s.matched[0] - mu_m[0], s.matched[1] - mu_m[1]));
    const double a = s.unmatched[0] - mu_u[0], b = s.unmatched[1] - mu_u[1], c = s.unmatched[2] - mu_u[2];
    unmatched.push_back(std::sqrt(a * a + b * b + c * c));
  }
  return {matched, unmatched};
}

}  // namespace

DiscrepancyBounds recalibrate(const std::vector<DiscrepancySample>& samples, double epsilon, ScoreMode mode) {
  const std::size_t needed = min_samples_for(epsilon);
  if (samples.size() < needed) throw InsufficientData(needed, samples.size());
  auto [matched, unmatched] = scores_of(samples, mode);
  DiscrepancyBounds b;
  b.z_matched = conformal_quantile(std::move(matched), epsilon).value;
  b.z_unmatched = conformal_quantile(std::move(unmatched), epsilon).value;
  b.epsilon = epsilon;
  b.sample_count = samples.size();
  return b;
}

CalibrationReport calibrate(const std::vector<TrainingTuple>& dataset, const CalibrationConfig& config) {
  config.validate();
  if (dataset.size() < config.subsample) throw InsufficientData(config.subsample, dataset.size());

  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(config.subsample);
  std::mt19937_64 rng(config.seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), config.subsample, rng);

  CalibrationReport report;
  report.samples.reserve(picked.size());
  for (std::size_t idx : picked) {
    const TrainingTuple& t = dataset[idx];
    if (config.drop_wrap_outliers && has_wrap_outlier(t)) {
      ++report.skipped_outliers;
      continue;
    }
    auto s = extract_discrepancy(t, config);
    if (!s) {
      ++report.skipped_dead_zone;
      continue;
    }
    report.samples.push_back(*s);
  }
  report.bounds = recalibrate(report.samples, config.epsilon, config.score);
  report.quantile_index = quantile_index(report.samples.size(), config.epsilon);
  return report;
}

}  // namespace safenav
