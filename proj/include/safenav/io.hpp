#pragma once

// On-disk artifacts: training datasets, bounds documents, grid snapshots,
// run logs and metrics summaries.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "safenav/conformal.hpp"
#include "safenav/gridmap.hpp"
#include "safenav/simulator.hpp"

namespace safenav {

// One tuple per line, 15 whitespace-separated fields printed with %.17g:
// time, prev (x y theta), measured (x y theta), optimal (x y theta),
// applied (v omega), optimal input (v omega), dt. Lines starting with '#' are comments.
void write_dataset(std::ostream& out, const std::vector<TrainingTuple>& tuples);
std::vector<TrainingTuple> read_dataset(std::istream& in);

// 64-bit FNV-1a over the serialized dataset, as 16 lowercase hex digits.
std::string dataset_digest(const std::vector<TrainingTuple>& tuples);
std::uint64_t fnv1a(std::string_view bytes);

struct BoundsDocument {
  DiscrepancyBounds bounds;
  std::size_t quantile_index = 0;
  std::uint64_t seed = 0;
  std::string dataset_digest;
};

std::string serialize_bounds(const BoundsDocument& doc);
BoundsDocument parse_bounds(const std::string& text);

// Text grid: header lines "safenav-grid 1", "width W", "height H", "resolution r",
// "origin x y", then H rows of W occupancy values, row iy = 0 first.
void write_grid(std::ostream& out, const OccupancyGrid& grid);
OccupancyGrid read_grid(std::istream& in);

// Binary graymap (P5), +y up: free 254, unknown 205, occupied 0.
void write_grid_pgm(std::ostream& out, const OccupancyGrid& grid);
// Pixels <= 50 are occupied, >= 250 free, the rest unknown.
OccupancyGrid read_grid_pgm(std::istream& in, double resolution, Vec2 origin);

// Same header with "safenav-costmap 1", "lethal L", "buffer N", then %.17g values.
void write_costmap(std::ostream& out, const DiscrepancyCostMap& costmap);
DiscrepancyCostMap read_costmap(std::istream& in);
// Lethal black, soft tier shaded by cost / lethal, zero white.
void write_costmap_pgm(std::ostream& out, const DiscrepancyCostMap& costmap);

// Loads a grid by extension: ".pgm" through read_grid_pgm, anything else as text.
OccupancyGrid load_grid(const std::filesystem::path& path, double resolution = 0.05, Vec2 origin = {});

// Line-delimited JSON: a header record, one record per sample and event, and an
// end record.
void write_run_log(std::ostream& out, const RunLog& log);
RunLog read_run_log(std::istream& in);

// Fixed key order; doubles in shortest round-trip form.
std::string serialize_metrics(const RunMetrics& m);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames.
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace safenav
