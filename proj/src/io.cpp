#include "safenav/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "json_util.hpp"
#include "safenav/errors.hpp"

namespace safenav {

using ojson = nlohmann::ordered_json;
using detail::num;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError("line " + std::to_string(line) + ": not a number: '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

double to_double(const nlohmann::json& j, const char* what) {
  if (const auto v = detail::as_double(j)) return *v;
  throw FormatError(std::string(what) + ": expected a number");
}

// Reads a record field; missing or mistyped fields become FormatError.
template <class T>
T field(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type");
  }
}

double dfield(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  return to_double(*it, key);
}

template <std::size_t N>
std::array<double, N> afield(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array() || it->size() != N) {
    throw FormatError(std::string("field '") + key + "' must be an array of " + std::to_string(N));
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_double((*it)[i], key);
  return out;
}

void write_geometry_header(std::ostream& out, const char* magic, const GridGeometry& g) {
  out << magic << " 1\n"
      << "width " << g.width << "\n"
      << "height " << g.height << "\n"
      << "resolution " << fmt_double(g.resolution) << "\n"
      << "origin " << fmt_double(g.origin.x) << " " << fmt_double(g.origin.y) << "\n";
}

struct LineReader {
  std::istream& in;
  std::size_t line = 0;

  std::vector<std::string_view> next(std::string& buf) {
    while (std::getline(in, buf)) {
      ++line;
      auto toks = split_ws(buf);
      if (!toks.empty() && toks[0][0] != '#') return toks;
    }
    throw FormatError("unexpected end of input after line " + std::to_string(line));
  }

  std::string_view keyed(std::string& buf, std::string_view key, std::size_t values = 1) {
    const auto toks = next(buf);
    if (toks.size() != values + 1 || toks[0] != key) {
      throw FormatError("line " + std::to_string(line) + ": expected '" + std::string(key) + "'");
    }
    return toks[1];
  }
};

GridGeometry read_geometry_header(LineReader& r, std::string_view magic) {
  std::string buf;
  const auto head = r.next(buf);
  if (head.size() != 2 || head[0] != magic || head[1] != "1") {
    throw FormatError("line " + std::to_string(r.line) + ": expected '" + std::string(magic) + " 1'");
  }
  GridGeometry g;
  g.width = static_cast<int>(parse_double(r.keyed(buf, "width"), r.line));
  g.height = static_cast<int>(parse_double(r.keyed(buf, "height"), r.line));
  g.resolution = parse_double(r.keyed(buf, "resolution"), r.line);
  const auto origin = r.next(buf);
  if (origin.size() != 3 || origin[0] != "origin") {
    throw FormatError("line " + std::to_string(r.line) + ": expected 'origin x y'");
  }
  g.origin = {parse_double(origin[1], r.line), parse_double(origin[2], r.line)};
  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return g;
}

template <class Fn>
void read_rows(LineReader& r, const GridGeometry& g, Fn&& put) {
  std::string buf;
  for (int iy = 0; iy < g.height; ++iy) {
    const auto toks = r.next(buf);
    if (toks.size() != static_cast<std::size_t>(g.width)) {
      throw FormatError("line " + std::to_string(r.line) + ": expected " + std::to_string(g.width) + " values, got " +
                        std::to_string(toks.size()));
    }
    for (int ix = 0; ix < g.width; ++ix) put(ix, iy, parse_double(toks[static_cast<std::size_t>(ix)], r.line));
  }
}

std::string pgm_header(const GridGeometry& g) {
  return "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
}

std::string pgm_token(std::istream& in) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

EventKind event_kind_from(const std::string& s) {
  for (EventKind k : {EventKind::kLethalEntry, EventKind::kContact, EventKind::kRetry}) {
    if (to_string(k) == s) return k;
  }
  throw FormatError("unknown event kind '" + s + "'");
}

}  // namespace

void write_dataset(std::ostream& out, const std::vector<TrainingTuple>& tuples) {
  out << "# t prev.x prev.y prev.theta meas.x meas.y meas.theta opt.x opt.y opt.theta u.v u.omega ustar.v "
         "ustar.omega dt\n";
  for (const TrainingTuple& t : tuples) {
    const double f[] = {t.time,
                        t.prev_state.x,
                        t.prev_state.y,
                        t.prev_state.theta,
                        t.measured_state.x,
                        t.measured_state.y,
                        t.measured_state.theta,
                        t.optimal_state.x,
                        t.optimal_state.y,
                        t.optimal_state.theta,
                        t.applied_input.v,
                        t.applied_input.omega,
                        t.optimal_input.v,
                        t.optimal_input.omega,
                        t.dt};
    for (std::size_t i = 0; i < std::size(f); ++i) out << (i ? " " : "") << fmt_double(f[i]);
    out << "\n";
  }
}

std::vector<TrainingTuple> read_dataset(std::istream& in) {
  std::vector<TrainingTuple> out;
  std::string buf;
  std::size_t line = 0;
  while (std::getline(in, buf)) {
    ++line;
    const auto toks = split_ws(buf);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() != 15) {
      throw FormatError("line " + std::to_string(line) + ": expected 15 fields, got " + std::to_string(toks.size()));
    }
    double f[15];
    for (std::size_t i = 0; i < 15; ++i) f[i] = parse_double(toks[i], line);
    TrainingTuple t;
    t.time = f[0];
    t.prev_state = {f[1], f[2], f[3]};
    t.measured_state = {f[4], f[5], f[6]};
    t.optimal_state = {f[7], f[8], f[9]};
    t.applied_input = {f[10], f[11]};
    t.optimal_input = {f[12], f[13]};
    t.dt = f[14];
    if (!(t.dt > 0.0)) throw FormatError("line " + std::to_string(line) + ": dt must be positive");
    out.push_back(t);
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string dataset_digest(const std::vector<TrainingTuple>& tuples) {
  std::ostringstream s;
  write_dataset(s, tuples);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s.str())));
  return buf;
}

std::string serialize_bounds(const BoundsDocument& doc) {
  ojson j;
  j["format"] = "safenav-bounds";
  j["version"] = 1;
  j["z_matched"] = num(doc.bounds.z_matched);
  j["z_unmatched"] = num(doc.bounds.z_unmatched);
  j["epsilon"] = doc.bounds.epsilon;
  j["sample_count"] = doc.bounds.sample_count;
  j["quantile_index"] = doc.quantile_index;
  j["seed"] = doc.seed;
  j["dataset_digest"] = doc.dataset_digest;
  return j.dump(2) + "\n";
}

BoundsDocument parse_bounds(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("bounds document: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "safenav-bounds") {
    throw FormatError("bounds document: missing format tag 'safenav-bounds'");
  }
  if (field<int>(j, "version") != 1) throw FormatError("bounds document: unsupported version");
  static const char* const kKeys[] = {"format",         "version", "z_matched", "z_unmatched", "epsilon",
                                      "sample_count",   "quantile_index", "seed", "dataset_digest"};
  for (const auto& [k, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* s) { return k == s; }) == std::end(kKeys)) {
      throw FormatError("bounds document: unknown key '" + k + "'");
    }
  }
  BoundsDocument d;
  d.bounds.z_matched = dfield(j, "z_matched");
  d.bounds.z_unmatched = dfield(j, "z_unmatched");
  d.bounds.epsilon = dfield(j, "epsilon");
  d.bounds.sample_count = field<std::size_t>(j, "sample_count");
  d.quantile_index = field<std::size_t>(j, "quantile_index");
  d.seed = field<std::uint64_t>(j, "seed");
  d.dataset_digest = field<std::string>(j, "dataset_digest");
  try {
    d.bounds.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bounds document: ") + e.what());
  }
  return d;
}

void write_grid(std::ostream& out, const OccupancyGrid& grid) {
  write_geometry_header(out, "safenav-grid", grid.geometry);
  for (int iy = 0; iy < grid.geometry.height; ++iy) {
    for (int ix = 0; ix < grid.geometry.width; ++ix) out << (ix ? " " : "") << static_cast<int>(grid.at(ix, iy));
    out << "\n";
  }
}

OccupancyGrid read_grid(std::istream& in) {
  LineReader r{in};
  OccupancyGrid grid(read_geometry_header(r, "safenav-grid"));
  read_rows(r, grid.geometry, [&](int ix, int iy, double v) {
    if (!(v >= 0 && v <= 100) || v != std::floor(v)) {
      throw FormatError("line " + std::to_string(r.line) + ": occupancy must be an integer in [0, 100]");
    }
    grid.at(ix, iy) = static_cast<std::uint8_t>(v);
  });
  return grid;
}

void write_grid_pgm(std::ostream& out, const OccupancyGrid& grid) {
  const GridGeometry& g = grid.geometry;
  out << pgm_header(g);
  std::string row(static_cast<std::size_t>(g.width), '\0');
  for (int iy = g.height - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < g.width; ++ix) {
      const std::uint8_t v = grid.at(ix, iy);
      row[static_cast<std::size_t>(ix)] = static_cast<char>(v == kUnknown ? 205 : v > kUnknown ? 0 : 254);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

OccupancyGrid read_grid_pgm(std::istream& in, double resolution, Vec2 origin) {
  if (pgm_token(in) != "P5") throw FormatError("pgm: only binary graymaps (P5) are supported");
  GridGeometry g;
  try {
    g.width = std::stoi(pgm_token(in));
    g.height = std::stoi(pgm_token(in));
    if (std::stoi(pgm_token(in)) != 255) throw FormatError("pgm: maxval must be 255");
  } catch (const std::logic_error&) {
    throw FormatError("pgm: malformed header");
  }
  g.resolution = resolution;
  g.origin = origin;
  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("pgm: ") + e.what());
  }
  OccupancyGrid grid(g);
  std::string row(static_cast<std::size_t>(g.width), '\0');
  for (int iy = g.height - 1; iy >= 0; --iy) {
    if (!in.read(row.data(), static_cast<std::streamsize>(row.size()))) throw FormatError("pgm: truncated pixel data");
    for (int ix = 0; ix < g.width; ++ix) {
      const auto p = static_cast<unsigned char>(row[static_cast<std::size_t>(ix)]);
      grid.at(ix, iy) = p <= 50 ? kOccupied : p >= 250 ? kFree : kUnknown;
    }
  }
  return grid;
}

void write_costmap(std::ostream& out, const DiscrepancyCostMap& costmap) {
  write_geometry_header(out, "safenav-costmap", costmap.geometry);
  out << "lethal " << fmt_double(costmap.lethal_threshold) << "\n";
  out << "buffer " << costmap.buffer_cells << "\n";
  for (int iy = 0; iy < costmap.geometry.height; ++iy) {
    for (int ix = 0; ix < costmap.geometry.width; ++ix) out << (ix ? " " : "") << fmt_double(costmap.at(ix, iy));
    out << "\n";
  }
}

DiscrepancyCostMap read_costmap(std::istream& in) {
  LineReader r{in};
  DiscrepancyCostMap c;
  c.geometry = read_geometry_header(r, "safenav-costmap");
  std::string buf;
  c.lethal_threshold = parse_double(r.keyed(buf, "lethal"), r.line);
  c.buffer_cells = static_cast<int>(parse_double(r.keyed(buf, "buffer"), r.line));
  c.cells.assign(c.geometry.size(), 0.0);
  const int w = c.geometry.width;
  read_rows(r, c.geometry, [&](int ix, int iy, double v) {
    c.cells[static_cast<std::size_t>(iy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(ix)] = v;
  });
  return c;
}

void write_costmap_pgm(std::ostream& out, const DiscrepancyCostMap& costmap) {
  const GridGeometry& g = costmap.geometry;
  out << pgm_header(g);
  std::string row(static_cast<std::size_t>(g.width), '\0');
  for (int iy = g.height - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < g.width; ++ix) {
      const double c = costmap.at(ix, iy);
      int p = 0;
      if (c < costmap.lethal_threshold) {
        p = 254 - static_cast<int>(std::lround(200.0 * std::clamp(c / costmap.lethal_threshold, 0.0, 1.0)));
      }
      row[static_cast<std::size_t>(ix)] = static_cast<char>(p);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

OccupancyGrid load_grid(const std::filesystem::path& path, double resolution, Vec2 origin) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open grid file " + path.string());
  if (path.extension() == ".pgm") return read_grid_pgm(in, resolution, origin);
  return read_grid(in);
}

void write_run_log(std::ostream& out, const RunLog& log) {
  ojson head;
  head["type"] = "header";
  head["version"] = 1;
  head["scenario"] = log.scenario;
  head["dt"] = log.dt;
  head["r_ego"] = log.r_ego;
  head["n_eps"] = log.n_eps;
  head["r0"] = num(log.r0);
  head["r_dt"] = num(log.r_dt);
  ojson boxes = ojson::array(), discs = ojson::array();
  for (const Box& b : log.obstacles.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
  for (const Disc& d : log.obstacles.discs) discs.push_back({d.center.x, d.center.y, d.radius});
  head["obstacles"] = {{"boxes", boxes}, {"discs", discs}};
  out << head.dump() << "\n";

  for (const LogSample& s : log.samples) {
    ojson j;
    j["type"] = "sample";
    j["t"] = s.clock;
    j["pose"] = {s.pose.x, s.pose.y, s.pose.theta};
    j["cmd"] = {s.command.v, s.command.omega};
    j["opt"] = {s.optimal.x, s.optimal.y, s.optimal.theta};
    j["ref"] = {s.reference.x, s.reference.y};
    j["free"] = s.collision_free;
    j["init_ok"] = s.initial_error_ok;
    j["attempts"] = s.attempts;
    j["cost"] = num(s.plan_cost);
    j["disc"] = {s.discrepancy[0], s.discrepancy[1], s.discrepancy[2]};
    out << j.dump() << "\n";
  }
  for (const LogEvent& e : log.events) {
    ojson j;
    j["type"] = "event";
    j["t"] = e.clock;
    j["kind"] = std::string(to_string(e.kind));
    j["pos"] = {e.position.x, e.position.y};
    out << j.dump() << "\n";
  }
  out << ojson{{"type", "end"}, {"aborted", log.aborted}}.dump() << "\n";
}

RunLog read_run_log(std::istream& in) {
  RunLog log;
  std::string buf;
  std::size_t line = 0;
  bool header = false, end = false;
  while (std::getline(in, buf)) {
    ++line;
    if (split_ws(buf).empty()) continue;
    const std::string where = "run log line " + std::to_string(line) + ": ";
    try {
      if (end) throw FormatError("record after end");
      const nlohmann::json j = nlohmann::json::parse(buf);
      const std::string type = field<std::string>(j, "type");
      if (!header && type != "header") throw FormatError("first record must be the header");
      if (type == "header") {
        if (header) throw FormatError("duplicate header");
        if (field<int>(j, "version") != 1) throw FormatError("unsupported version");
        header = true;
        log.scenario = field<std::string>(j, "scenario");
        log.dt = dfield(j, "dt");
        log.r_ego = dfield(j, "r_ego");
        log.n_eps = field<int>(j, "n_eps");
        log.r0 = dfield(j, "r0");
        log.r_dt = dfield(j, "r_dt");
        const auto& obs = j.at("obstacles");
        for (const auto& b : obs.at("boxes")) {
          log.obstacles.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                                         b.at(3).get<double>()});
        }
        for (const auto& d : obs.at("discs")) {
          log.obstacles.discs.push_back({{d.at(0).get<double>(), d.at(1).get<double>()}, d.at(2).get<double>()});
        }
      } else if (type == "sample") {
        LogSample s;
        s.clock = dfield(j, "t");
        const auto p = afield<3>(j, "pose"), o = afield<3>(j, "opt");
        const auto c = afield<2>(j, "cmd"), r = afield<2>(j, "ref");
        s.pose = {p[0], p[1], p[2]};
        s.command = {c[0], c[1]};
        s.optimal = {o[0], o[1], o[2]};
        s.reference = {r[0], r[1]};
        s.collision_free = field<bool>(j, "free");
        s.initial_error_ok = field<bool>(j, "init_ok");
        s.attempts = field<int>(j, "attempts");
        s.plan_cost = dfield(j, "cost");
        s.discrepancy = afield<3>(j, "disc");
        log.samples.push_back(s);
      } else if (type == "event") {
        const auto p = afield<2>(j, "pos");
        log.events.push_back({dfield(j, "t"), event_kind_from(field<std::string>(j, "kind")), {p[0], p[1]}});
      } else if (type == "end") {
        log.aborted = field<bool>(j, "aborted");
        end = true;
      } else {
        throw FormatError("unknown record type '" + type + "'");
      }
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + e.what());
    }
  }
  if (!header) throw FormatError("run log: missing header");
  if (!end) throw FormatError("run log: missing end record (truncated?)");
  return log;
}

std::string serialize_metrics(const RunMetrics& m) {
  ojson j;
  j["steps"] = m.steps;
  j["rms_error"] = num(m.rms_error);
  j["max_error"] = num(m.max_error);
  j["min_clearance"] = num(m.min_clearance);
  j["contacts"] = m.contacts;
  j["lethal_entries"] = m.lethal_entries;
  j["retries"] = m.retries;
  j["mean_plan_cost"] = num(m.mean_plan_cost);
  return j.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace safenav
