#pragma once

// Brute-force geometric checks shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "safenav/core.hpp"
#include "safenav/gridmap.hpp"

namespace safenav::testing {

// Does the disc of radius `radius` around `p` touch any occupied cell square?
inline bool DiscHitsOccupied(const OccupancyGrid& g, Vec2 p, double radius) {
  const double half = 0.5 * g.geometry.resolution;
  for (int iy = 0; iy < g.geometry.height; ++iy) {
    for (int ix = 0; ix < g.geometry.width; ++ix) {
      if (g.at(ix, iy) <= kUnknown) continue;
      const Vec2 c = cell_center(g.geometry, {ix, iy});
      const double nx = std::clamp(p.x, c.x - half, c.x + half);
      const double ny = std::clamp(p.y, c.y - half, c.y + half);
      if (std::hypot(p.x - nx, p.y - ny) <= radius) return true;
    }
  }
  return false;
}

// Same question, restricted to cells near p; for large maps.
inline bool DiscHitsOccupiedNear(const OccupancyGrid& g, Vec2 p, double radius) {
  const GridGeometry& geo = g.geometry;
  const double half = 0.5 * geo.resolution;
  const int reach = static_cast<int>(std::ceil(radius / geo.resolution)) + 2;
  const double u = (p.x - geo.origin.x) / geo.resolution + 0.5 * geo.width;
  const double v = (p.y - geo.origin.y) / geo.resolution + 0.5 * geo.height;
  const int cx = static_cast<int>(std::floor(u)), cy = static_cast<int>(std::floor(v));
  for (int iy = std::max(0, cy - reach); iy <= std::min(geo.height - 1, cy + reach); ++iy) {
    for (int ix = std::max(0, cx - reach); ix <= std::min(geo.width - 1, cx + reach); ++ix) {
      if (g.at(ix, iy) <= kUnknown) continue;
      const Vec2 c = cell_center(geo, {ix, iy});
      const double nx = std::clamp(p.x, c.x - half, c.x + half);
      const double ny = std::clamp(p.y, c.y - half, c.y + half);
      if (std::hypot(p.x - nx, p.y - ny) <= radius) return true;
    }
  }
  return false;
}

// Every state after the first keeps a clear disc of `radius` and stays on the map.
inline bool BufferedPathClear(const OccupancyGrid& g, const std::vector<Pose>& states, double radius) {
  for (std::size_t k = 1; k < states.size(); ++k) {
    const Vec2 p{states[k].x, states[k].y};
    if (!cell_of(g.geometry, p)) return false;
    if (DiscHitsOccupiedNear(g, p, radius)) return false;
  }
  return true;
}

}  // namespace safenav::testing
