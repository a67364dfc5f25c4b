#include "safenav/gridmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "safenav/errors.hpp"

namespace safenav {

void GridGeometry::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("grid: width and height must be positive");
  if (!(resolution > 0.0)) throw ConfigError("grid: resolution must be positive");
}

std::optional<CellIndex> cell_of(const GridGeometry& g, Vec2 p) {
  const double u = (p.x - g.origin.x) / g.resolution + 0.5 * g.width;
  const double v = (p.y - g.origin.y) / g.resolution + 0.5 * g.height;
  if (!(u >= 0.0 && v >= 0.0 && u < g.width && v < g.height)) return std::nullopt;
  return CellIndex{static_cast<int>(std::floor(u)), static_cast<int>(std::floor(v))};
}

Vec2 cell_center(const GridGeometry& g, CellIndex c) {
  return {g.origin.x + (c.ix + 0.5 - 0.5 * g.width) * g.resolution,
          g.origin.y + (c.iy + 0.5 - 0.5 * g.height) * g.resolution};
}

bool ObstacleSet::contains(Vec2 p) const {
  for (const Box& b : boxes) {
    if (p.x >= b.x_min && p.x <= b.x_max && p.y >= b.y_min && p.y <= b.y_max) return true;
  }
  for (const Disc& d : discs) {
    if (std::hypot(p.x - d.center.x, p.y - d.center.y) <= d.radius) return true;
  }
  return false;
}

double ObstacleSet::distance(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Box& b : boxes) {
    const double dx = std::max({b.x_min - p.x, 0.0, p.x - b.x_max});
    const double dy = std::max({b.y_min - p.y, 0.0, p.y - b.y_max});
    best = std::min(best, std::hypot(dx, dy));
  }
  for (const Disc& d : discs) {
    best = std::min(best, std::max(0.0, std::hypot(p.x - d.center.x, p.y - d.center.y) - d.radius));
  }
  return best;
}

int buffer_cells(double r_tube, double r_ego, double r_map) {
  const double cells = (r_tube + r_ego) / r_map;
  // Guard against sums like 0.15 + 0.40 landing an ulp above an integer.
  return static_cast<int>(std::ceil(cells - 1e-9 * std::max(1.0, cells)));
}

OccupancyGrid rasterize(const ObstacleSet& obstacles, const GridGeometry& geometry) {
  OccupancyGrid grid(geometry, kFree);
  for (int iy = 0; iy < geometry.height; ++iy) {
    for (int ix = 0; ix < geometry.width; ++ix) {
      if (obstacles.contains(cell_center(geometry, {ix, iy}))) grid.at(ix, iy) = kOccupied;
    }
  }
  return grid;
}

OccupancyGrid sensor_update(const OccupancyGrid& grid, const Pose& pose, const OccupancyGrid& truth,
                            const SensorModel& model, SensorStats* stats) {
  SensorStats local;
  SensorStats& st = stats != nullptr ? *stats : local;
  const GridGeometry& g = grid.geometry;
  const auto start = cell_of(g, {pose.x, pose.y});
  if (!start) {
    ++st.out_of_map;
    return grid;
  }

  // 0 untouched, 1 traversed, 2 hit; hits take priority.
  std::vector<std::uint8_t> mark(grid.cells.size(), 0);
  const double u0 = (pose.x - g.origin.x) / g.resolution + 0.5 * g.width;
  const double v0 = (pose.y - g.origin.y) / g.resolution + 0.5 * g.height;
  const double max_cells = model.max_range / g.resolution;

  for (int b = 0; b < model.beam_count; ++b) {
    ++st.beams_cast;
    const double angle = pose.theta + 2.0 * kPi * b / model.beam_count;
    const double du = std::cos(angle), dv = std::sin(angle);
    int ix = start->ix, iy = start->iy;
    const int step_x = du > 0.0 ? 1 : -1;
    const int step_y = dv > 0.0 ? 1 : -1;
    const double inf = std::numeric_limits<double>::infinity();
    const double delta_x = du != 0.0 ? std::abs(1.0 / du) : inf;
    const double delta_y = dv != 0.0 ? std::abs(1.0 / dv) : inf;
    double t_x = du != 0.0 ? ((du > 0.0 ? (ix + 1.0 - u0) : (u0 - ix)) * delta_x) : inf;
    double t_y = dv != 0.0 ? ((dv > 0.0 ? (iy + 1.0 - v0) : (v0 - iy)) * delta_y) : inf;
    double t = 0.0;
    while (t <= max_cells) {
      const std::size_t k = grid.index(ix, iy);
      if (truth.cells[k] > kUnknown) {
        mark[k] = 2;
        ++st.hits;
        break;
      }
      if (mark[k] == 0) mark[k] = 1;
      if (t_x < t_y) {
        t = t_x;
        t_x += delta_x;
        ix += step_x;
      } else {
        t = t_y;
        t_y += delta_y;
        iy += step_y;
      }
      if (!grid.contains(ix, iy)) break;
    }
  }

  OccupancyGrid out = grid;
  for (std::size_t k = 0; k < out.cells.size(); ++k) {
    if (mark[k] == 1) out.cells[k] = static_cast<std::uint8_t>(std::max(0, out.cells[k] - model.free_step));
    if (mark[k] == 2) out.cells[k] = static_cast<std::uint8_t>(std::min(100, out.cells[k] + model.hit_step));
  }
  return out;
}

OccupancyGrid sensor_update(const OccupancyGrid& grid, const Pose& pose, const ObstacleSet& obstacles,
                            int beam_count, double max_range, SensorStats* stats) {
  SensorModel model;
  model.beam_count = beam_count;
  model.max_range = max_range;
  return sensor_update(grid, pose, rasterize(obstacles, grid.geometry), model, stats);
}

bool is_occupied(std::uint8_t occupancy, const InflationOptions& options) {
  return options.pessimistic_unknown ? occupancy >= kUnknown : occupancy > kUnknown;
}

std::vector<CellIndex> lethal_stencil(int n_eps) {
  // Nearest point of the offset cell is (max(0,|i|-1/2), max(0,|j|-1/2)) cells away;
  // compared in doubled integer units to stay exact.
  std::vector<CellIndex> out;
  const long long limit = 4LL * n_eps * n_eps;
  for (int j = -n_eps; j <= n_eps; ++j) {
    for (int i = -n_eps; i <= n_eps; ++i) {
      const long long a = std::max(0, 2 * std::abs(i) - 1);
      const long long b = std::max(0, 2 * std::abs(j) - 1);
      if (a * a + b * b <= limit) out.push_back({i, j});
    }
  }
  return out;
}

DiscrepancyCostMap inflate(const OccupancyGrid& grid, int n_eps, double alpha_shift, double lethal,
                           const InflationOptions& options) {
  if (n_eps < 0) throw ConfigError("inflate: n_eps must be nonnegative");
  const GridGeometry& g = grid.geometry;
  DiscrepancyCostMap out;
  out.geometry = g;
  out.lethal_threshold = lethal;
  out.buffer_cells = n_eps;
  out.cells.assign(grid.cells.size(), 0.0);

  std::vector<double> weights;
  weights.reserve(static_cast<std::size_t>((2 * n_eps + 1) * (2 * n_eps + 1)));
  for (int j = -n_eps; j <= n_eps; ++j) {
    for (int i = -n_eps; i <= n_eps; ++i) weights.push_back(alpha_shift / std::sqrt(i * i + j * j + 1.0));
  }
  const std::vector<CellIndex> stencil = lethal_stencil(n_eps);
  std::vector<std::uint8_t> lethal_mask(grid.cells.size(), 0);

  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const std::uint8_t occ = grid.at(x, y);
      if (occ == 0) continue;
      const double scale = occ / 100.0;
      const int j_lo = std::max(-n_eps, -y), j_hi = std::min(n_eps, g.height - 1 - y);
      const int i_lo = std::max(-n_eps, -x), i_hi = std::min(n_eps, g.width - 1 - x);
      for (int j = j_lo; j <= j_hi; ++j) {
        const double* w = &weights[static_cast<std::size_t>((j + n_eps) * (2 * n_eps + 1) + n_eps)];
        double* row = &out.cells[grid.index(x, y + j)];
        for (int i = i_lo; i <= i_hi; ++i) row[i] += scale * w[i];
      }
      if (!is_occupied(occ, options)) continue;
      for (const CellIndex& d : stencil) {
        if (grid.contains(x + d.ix, y + d.iy)) lethal_mask[grid.index(x + d.ix, y + d.iy)] = 1;
      }
    }
  }

  const double soft_cap = std::nextafter(lethal, 0.0);
  for (std::size_t k = 0; k < out.cells.size(); ++k) {
    out.cells[k] = lethal_mask[k] ? lethal : std::min(out.cells[k], soft_cap);
  }
  return out;
}

double query_cost(const DiscrepancyCostMap& costmap, Vec2 position) {
  const auto c = cell_of(costmap.geometry, position);
  if (!c) return costmap.lethal_threshold;
  return costmap.at(c->ix, c->iy);
}

}  // namespace safenav
