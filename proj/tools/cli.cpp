#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "safenav/config.hpp"
#include "safenav/io.hpp"
#include "safenav/service.hpp"

namespace safenav::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "run config (JSON); defaults apply when omitted");
  app->add_option("--seed", c.seed, "overrides the planner, disturbance and calibration seeds");
  app->add_option("-o,--out", c.out, "output directory (default: output_dir from the config)");
}

RunConfig load(const Common& c) {
  RunConfig config = c.config.empty() ? parse_config("{}") : load_config(c.config);
  if (c.seed) {
    config.seeds = {*c.seed, *c.seed, *c.seed};
    propagate_shared(config);
  }
  if (!c.out.empty()) config.output_dir = c.out;
  return config;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

BoundsDocument load_bounds(const fs::path& path, const char* hint) {
  if (!fs::exists(path)) {
    throw Error("no bounds document at " + path.string() + "; " + hint);
  }
  return parse_bounds(read_file(path));
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::optional<double> epsilon;
  std::optional<std::string> preset;
  std::optional<double> duration;
  std::string dataset;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig config = load(a.common);
  if (a.epsilon) config.epsilon = *a.epsilon;
  if (a.preset) config.disturbance = *a.preset;
  if (a.duration) config.training.duration = *a.duration;
  propagate_shared(config);
  config.validate();
  const fs::path dir = ensure_dir(config.output_dir);

  std::vector<TrainingTuple> tuples;
  if (!a.dataset.empty()) {
    std::ifstream in(a.dataset);
    if (!in) throw Error("cannot open dataset " + a.dataset);
    tuples = read_dataset(in);
    out << "dataset: " << tuples.size() << " tuples from " << a.dataset << "\n";
  } else {
    tuples = generate_training(make_disturbance(config), config.training).tuples;
    std::ostringstream os;
    write_dataset(os, tuples);
    write_file(dir / "dataset.txt", os.str());
    out << "dataset: " << tuples.size() << " tuples (" << config.disturbance << ") -> "
        << (dir / "dataset.txt").string() << "\n";
  }

  const CalibrationReport report = calibrate(tuples, config.calibration);
  BoundsDocument doc;
  doc.bounds = report.bounds;
  doc.quantile_index = report.quantile_index;
  doc.seed = config.calibration.seed;
  doc.dataset_digest = dataset_digest(tuples);
  write_file(dir / "bounds.json", serialize_bounds(doc));

  out << "epsilon " << fmt(doc.bounds.epsilon) << "  L " << doc.bounds.sample_count << "  q_eps "
      << doc.quantile_index << "\n";
  out << "Z " << fmt(doc.bounds.z_matched) << "  Z_perp " << fmt(doc.bounds.z_unmatched) << "\n";
  if (report.skipped_dead_zone || report.skipped_outliers) {
    out << "skipped: " << report.skipped_dead_zone << " dead zone, " << report.skipped_outliers
        << " wrap outliers\n";
  }
  try {
    const TubeRadii r = tube_radii(doc.bounds, config.scenario.tube);
    out << "r0 " << fmt(r.r0) << "  r_dt " << fmt(r.r_dt) << "\n";
  } catch (const TubeBlowUp& e) {
    out << "tube: " << e.what() << "\n";
  }
  out << "bounds -> " << (dir / "bounds.json").string() << "\n";
  return kOk;
}

// track / replay ----------------------------------------------------------------

struct TrackArgs {
  Common common;
  std::string bounds;
  bool baseline = false;
  std::optional<double> laps;
};

struct TrackResult {
  RunMetrics metrics;
  std::string metrics_text;
  fs::path dir;
};

TrackResult execute_track(const RunConfig& config, const BoundsDocument& doc, std::ostream& out) {
  const fs::path dir = ensure_dir(config.output_dir);
  const Scenario sc = make_scenario(config, doc.bounds);
  // Written first so an interrupted run still leaves a replayable directory.
  write_file(dir / "config.json", serialize_config(config));
  write_file(dir / "bounds.json", serialize_bounds(doc));

  const RunLog log = run_tracking_experiment(sc);
  std::ostringstream os;
  write_run_log(os, log);
  write_file(dir / "log.jsonl", os.str());
  TrackResult res{metrics(log), {}, dir};
  res.metrics_text = serialize_metrics(res.metrics);
  write_file(dir / "metrics.json", res.metrics_text);

  const RunMetrics& m = res.metrics;
  out << sc.name << (sc.discrepancy_aware ? "" : " (baseline)") << ": N_eps " << log.n_eps << "  r0 "
      << fmt(log.r0) << "  r_dt " << fmt(log.r_dt) << "\n";
  out << "steps " << m.steps << "  rms_error " << fmt(m.rms_error) << "  max_error " << fmt(m.max_error)
      << "  min_clearance " << fmt(m.min_clearance) << "\n";
  out << "contacts " << m.contacts << "  lethal_entries " << m.lethal_entries << "  retries " << m.retries
      << (log.aborted ? "  (aborted on contact)" : "") << "\n";
  out << "run -> " << dir.string() << "\n";
  return res;
}

int cmd_track(const TrackArgs& a, std::ostream& out) {
  RunConfig config = load(a.common);
  if (a.baseline) config.scenario.discrepancy_aware = false;
  if (a.laps) config.scenario.laps = *a.laps;
  config.validate();
  const fs::path bounds_path = a.bounds.empty() ? fs::path(config.output_dir) / "bounds.json" : fs::path(a.bounds);
  const BoundsDocument doc =
      load_bounds(bounds_path, "run `safenav train` with the same config first, or pass --bounds");
  const TrackResult r = execute_track(config, doc, out);
  return r.metrics.contacts > 0 ? kContacts : kOk;
}

int cmd_replay(const std::string& run_dir, const std::string& out_dir, std::ostream& out) {
  const fs::path src(run_dir);
  const fs::path cfg = src / "config.json";
  if (!fs::exists(cfg)) throw Error("no config.json in " + src.string() + "; pass a directory written by `safenav track`");
  RunConfig config = load_config(cfg);
  config.output_dir = out_dir.empty() ? (src / "replay").string() : out_dir;
  const BoundsDocument doc = load_bounds(src / "bounds.json", "the run directory is incomplete");
  const std::string original = read_file(src / "metrics.json");
  const TrackResult r = execute_track(config, doc, out);
  if (r.metrics_text == original) {
    out << "replay: metrics identical\n";
    return kOk;
  }
  out << "replay: metrics differ\n--- " << (src / "metrics.json").string() << "\n" << original << "\n+++ "
      << (r.dir / "metrics.json").string() << "\n" << r.metrics_text << "\n";
  return kReplayMismatch;
}

// inflate -------------------------------------------------------------------

struct InflateArgs {
  Common common;
  std::string grid;
  std::optional<int> n_eps;
  std::string bounds;
  std::optional<double> resolution;
  std::vector<double> origin;
  std::optional<double> alpha;
  std::optional<double> lethal;
};

int cmd_inflate(const InflateArgs& a, std::ostream& out) {
  const RunConfig config = load(a.common);
  const double res = a.resolution.value_or(config.scenario.grid.resolution);
  const Vec2 origin = a.origin.empty() ? config.scenario.grid.origin : Vec2{a.origin[0], a.origin[1]};
  const OccupancyGrid grid = load_grid(a.grid, res, origin);

  int n = 0;
  if (a.n_eps) {
    n = *a.n_eps;
  } else {
    const fs::path bp = a.bounds.empty() ? fs::path(config.output_dir) / "bounds.json" : fs::path(a.bounds);
    const BoundsDocument doc = load_bounds(bp, "pass --n-eps or --bounds");
    const TubeRadii r = tube_radii(doc.bounds, config.scenario.tube);
    n = experiment_buffer_cells(r.r_dt, config.scenario.r_ego, grid.geometry.resolution);
    out << "r_dt " << fmt(r.r_dt) << "  r_ego " << fmt(config.scenario.r_ego) << "\n";
  }
  if (n < 0) throw ConfigError("--n-eps must be nonnegative");
  const double alpha = a.alpha.value_or(config.scenario.alpha_shift);
  const double lethal = a.lethal.value_or(config.scenario.weights.cap);
  const DiscrepancyCostMap cm = inflate(grid, n, alpha, lethal);

  const fs::path dir = ensure_dir(config.output_dir);
  std::ostringstream txt, pgm;
  write_costmap(txt, cm);
  write_costmap_pgm(pgm, cm);
  write_file(dir / "costmap.txt", txt.str());
  write_file(dir / "costmap.pgm", pgm.str());
  std::size_t lethal_cells = 0;
  for (double c : cm.cells) lethal_cells += c >= lethal;
  out << "grid " << grid.geometry.width << "x" << grid.geometry.height << " @ " << fmt(grid.geometry.resolution)
      << " m  N_eps " << n << "  lethal cells " << lethal_cells << "\n";
  out << "costmap -> " << (dir / "costmap.txt").string() << ", " << (dir / "costmap.pgm").string() << "\n";
  return kOk;
}

// assist-serve ------------------------------------------------------------------

struct ServeArgs {
  Common common;
  std::string bounds;
  std::string dataset;
  std::optional<std::string> host;
  std::optional<int> port;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  const RunConfig config = load(a.common);
  const fs::path dir(config.output_dir);
  const BoundsDocument doc = load_bounds(a.bounds.empty() ? dir / "bounds.json" : fs::path(a.bounds),
                                         "run `safenav train` first, or pass --bounds");
  std::vector<DiscrepancySample> samples;
  const fs::path dataset = a.dataset.empty() ? dir / "dataset.txt" : fs::path(a.dataset);
  if (fs::exists(dataset)) {
    std::ifstream in(dataset);
    const std::vector<TrainingTuple> tuples = read_dataset(in);
    if (dataset_digest(tuples) != doc.dataset_digest) {
      out << "warning: " << dataset.string() << " is not the dataset these bounds came from\n";
    }
    samples = calibrate(tuples, config.calibration).samples;
  } else {
    out << "no dataset at " << dataset.string() << "; set_epsilon is disabled\n";
  }

  ServerOptions opts;
  opts.host = a.host.value_or(config.service.host);
  opts.port = a.port.value_or(config.service.port);
  opts.rate_hz = config.service.rate_hz;
  opts.handle_signals = true;
  Server server(opts, std::make_unique<AssistLoop>(config, doc.bounds, std::move(samples)));
  out << "assist service on ws://" << opts.host << ":" << server.port() << " at " << fmt(opts.rate_hz)
      << " Hz (Ctrl-C to stop)" << std::endl;
  server.run();
  out << "stopped after " << server.ticks() << " ticks\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"safenav: conformal discrepancy bounds, tube-aware cost maps and MPPI tracking"};
  app.require_subcommand(1);

  TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "generate training data, calibrate and write bounds.json");
  add_common(t, train.common);
  t->add_option("--epsilon", train.epsilon, "risk level")->check(CLI::Range(0.0, 1.0));
  t->add_option("--preset", train.preset, "disturbance preset");
  t->add_option("--duration", train.duration, "seconds of training per lap time")->check(CLI::PositiveNumber);
  t->add_option("--dataset", train.dataset, "calibrate from an existing dataset instead of simulating")
      ->check(CLI::ExistingFile);

  TrackArgs track;
  CLI::App* k = app.add_subcommand("track", "run the closed-loop tracking experiment");
  add_common(k, track.common);
  k->add_option("--bounds", track.bounds, "bounds document (default: <out>/bounds.json)");
  k->add_flag("--baseline", track.baseline, "disable inflation: N_eps = 0, nominal planner");
  k->add_option("--laps", track.laps, "override the lap count")->check(CLI::PositiveNumber);

  ServeArgs serve;
  CLI::App* s = app.add_subcommand("assist-serve", "serve the driver-assist loop over WebSocket");
  add_common(s, serve.common);
  s->add_option("--bounds", serve.bounds, "bounds document (default: <out>/bounds.json)");
  s->add_option("--dataset", serve.dataset, "training dataset for set_epsilon (default: <out>/dataset.txt)");
  s->add_option("--host", serve.host, "listen address");
  s->add_option("--port", serve.port, "listen port, 0 for any")->check(CLI::Range(0, 65535));

  InflateArgs infl;
  CLI::App* f = app.add_subcommand("inflate", "inflate an occupancy grid into a cost map");
  add_common(f, infl.common);
  f->add_option("grid", infl.grid, "grid file (.pgm or safenav-grid text)")->required()->check(CLI::ExistingFile);
  auto* n_opt = f->add_option("--n-eps", infl.n_eps, "buffer cells");
  f->add_option("--bounds", infl.bounds, "derive N_eps from a bounds document")->excludes(n_opt);
  f->add_option("--resolution", infl.resolution, "cell size for .pgm input")->check(CLI::PositiveNumber);
  f->add_option("--origin", infl.origin, "grid centre for .pgm input")->expected(2);
  f->add_option("--alpha", infl.alpha, "soft-tier weight");
  f->add_option("--lethal", infl.lethal, "lethal cost")->check(CLI::PositiveNumber);

  std::string run_dir, replay_out;
  CLI::App* r = app.add_subcommand("replay", "re-run a track directory and compare metrics byte for byte");
  r->add_option("run", run_dir, "directory written by track")->required();
  r->add_option("-o,--out", replay_out, "where to write the re-run (default: <run>/replay)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(std::move(rev));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kFailure;
  }

  try {
    if (*t) return cmd_train(train, out);
    if (*k) return cmd_track(track, out);
    if (*s) return cmd_serve(serve, out);
    if (*f) return cmd_inflate(infl, out);
    if (*r) return cmd_replay(run_dir, replay_out, out);
  } catch (const InsufficientData& e) {
    err << "error: " << e.what() << " (lower the risk level or train longer)\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace safenav::cli
