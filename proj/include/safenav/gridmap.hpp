#pragma once

// Occupancy grids, range-sensor updates and discrepancy-aware inflation.

#include <cstdint>
#include <optional>
#include <vector>

#include "safenav/core.hpp"

namespace safenav {

inline constexpr std::uint8_t kFree = 0;
inline constexpr std::uint8_t kUnknown = 50;
inline constexpr std::uint8_t kOccupied = 100;

struct GridGeometry {
  int width = 200;
  int height = 200;
  double resolution = 0.05;
  Vec2 origin;  // world coordinates of the grid centre

  bool operator==(const GridGeometry&) const = default;
  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  void validate() const;
};

struct CellIndex {
  int ix = 0;
  int iy = 0;

  bool operator==(const CellIndex&) const = default;
};

// floor((p - origin)/r + dims/2); nullopt outside the map.
std::optional<CellIndex> cell_of(const GridGeometry& g, Vec2 p);
Vec2 cell_center(const GridGeometry& g, CellIndex c);

struct OccupancyGrid {
  GridGeometry geometry;
  std::vector<std::uint8_t> cells;  // row-major, iy * width + ix

  OccupancyGrid() = default;
  explicit OccupancyGrid(const GridGeometry& g, std::uint8_t fill = kUnknown)
      : geometry(g), cells(g.size(), fill) {}

  std::uint8_t at(int ix, int iy) const { return cells[index(ix, iy)]; }
  std::uint8_t& at(int ix, int iy) { return cells[index(ix, iy)]; }
  bool contains(int ix, int iy) const {
    return ix >= 0 && iy >= 0 && ix < geometry.width && iy < geometry.height;
  }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(geometry.width) + static_cast<std::size_t>(ix);
  }
};

struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

struct Disc {
  Vec2 center;
  double radius = 0.0;
};

struct ObstacleSet {
  std::vector<Box> boxes;
  std::vector<Disc> discs;

  bool empty() const { return boxes.empty() && discs.empty(); }
  bool contains(Vec2 p) const;
  // Euclidean distance from p to the nearest obstacle (0 inside); +inf when empty.
  double distance(Vec2 p) const;
};

// ceil((r_tube + r_ego) / r_map)
int buffer_cells(double r_tube, double r_ego, double r_map);

// Cells whose centre lies inside an obstacle are occupied, all others free.
OccupancyGrid rasterize(const ObstacleSet& obstacles, const GridGeometry& geometry);

struct SensorStats {
  int out_of_map = 0;
  int beams_cast = 0;
  int hits = 0;
};

struct SensorModel {
  int beam_count = 180;
  double max_range = 4.0;
  int free_step = 50;  // occupancy decrement for traversed cells
  int hit_step = 50;   // occupancy increment for the hit cell
};

// Casts rays against a ground-truth occupancy grid with the same geometry.
OccupancyGrid sensor_update(const OccupancyGrid& grid, const Pose& pose, const OccupancyGrid& truth,
                            const SensorModel& model, SensorStats* stats = nullptr);

OccupancyGrid sensor_update(const OccupancyGrid& grid, const Pose& pose, const ObstacleSet& obstacles,
                            int beam_count, double max_range, SensorStats* stats = nullptr);

struct DiscrepancyCostMap {
  GridGeometry geometry;
  std::vector<double> cells;
  double lethal_threshold = 0.0;
  int buffer_cells = 0;

  double at(int ix, int iy) const {
    return cells[static_cast<std::size_t>(iy) * static_cast<std::size_t>(geometry.width) + static_cast<std::size_t>(ix)];
  }
  bool lethal_at(int ix, int iy) const { return at(ix, iy) >= lethal_threshold; }
};

struct InflationOptions {
  bool pessimistic_unknown = false;  // treat unknown (50) as occupied
};

bool is_occupied(std::uint8_t occupancy, const InflationOptions& options = {});

// Cell offsets (di, dj) whose square lies within n cells (Euclidean) of the centre.
std::vector<CellIndex> lethal_stencil(int n_eps);

DiscrepancyCostMap inflate(const OccupancyGrid& grid, int n_eps, double alpha_shift, double lethal,
                           const InflationOptions& options = {});

// Out-of-map positions are lethal.
double query_cost(const DiscrepancyCostMap& costmap, Vec2 position);

}  // namespace safenav
