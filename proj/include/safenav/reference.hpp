#pragma once

#include <variant>
#include <vector>

#include "safenav/core.hpp"

namespace safenav {

// x = ax cos(2 pi t / T), y = ay sin(4 pi t / T), centred at `center`.
struct Figure8 {
  double lap_time = 30.0;
  double ax = 2.5;
  double ay = 1.25;
  Vec2 center;
};

// Circle of radius R traversed counter-clockwise at angular rate Omega.
struct Circle {
  double radius = 1.0;
  double rate = 1.0;
  Vec2 center;
  double phase = 0.0;
};

// Constant-velocity line through `start`.
struct Line {
  Vec2 start;
  Vec2 velocity{1.0, 0.0};
};

// Stationary point (degenerate reference).
struct Hold {
  Vec2 position;
};

using ReferencePath = std::variant<Figure8, Circle, Line, Hold>;

ReferencePoint sample(const ReferencePath& path, double t);

// n + 1 points at t0, t0 + dt, ..., t0 + n dt.
std::vector<ReferencePoint> sample_horizon(const ReferencePath& path, double t0, double dt, int n);

}  // namespace safenav
