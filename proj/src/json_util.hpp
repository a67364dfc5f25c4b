#pragma once

// JSON helpers shared by the artifact and wire encoders.

#include <cmath>
#include <limits>
#include <optional>
#include <nlohmann/json.hpp>
#include <string>

namespace safenav::detail {

// JSON has no infinities; they travel as strings.
inline nlohmann::ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

// Accepts numbers and the strings written by num(); nullopt otherwise.
inline std::optional<double> as_double(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  return std::nullopt;
}

}  // namespace safenav::detail
