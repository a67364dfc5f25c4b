#include "safenav/config.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>

#include "safenav/errors.hpp"
#include "safenav/io.hpp"

namespace safenav {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported by pointer.
class Reader {
 public:
  Reader(const json& j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
    if (!j_.is_object()) fail(ptr_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& ptr, const std::string& what) {
    throw ConfigError((ptr.empty() ? std::string("/") : ptr) + ": " + what);
  }

  std::string at(const char* key) const { return ptr_ + "/" + escape_pointer(key); }
  const std::string& pointer() const { return ptr_; }

  const json* find(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(at(key), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) fail(at(key), "integer out of range");
      out = static_cast<int>(x);
    }
  }
  static_assert(std::is_same_v<std::size_t, std::uint64_t>);
  void get(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(at(key), "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(at(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) fail(at(key) + "/" + std::to_string(i), "expected a number");
        out.push_back((*v)[i].get<double>());
      }
    }
  }
  // Fixed-length numeric array.
  template <std::size_t N>
  bool get_array(const char* key, std::array<double, N>& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_array() || v->size() != N) fail(at(key), "expected an array of " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) {
      if (!(*v)[i].is_number()) fail(at(key) + "/" + std::to_string(i), "expected a number");
      out[i] = (*v)[i].get<double>();
    }
    return true;
  }
  void get(const char* key, Vec2& out) {
    std::array<double, 2> a{out.x, out.y};
    if (get_array(key, a)) out = {a[0], a[1]};
  }
  void get(const char* key, Eigen::Vector2d& out) {
    std::array<double, 2> a{out(0), out(1)};
    if (get_array(key, a)) out = {a[0], a[1]};
  }
  // Diagonal weight matrices are written as their diagonal.
  void get_diagonal(const char* key, Eigen::Matrix2d& out) {
    std::array<double, 2> a{out(0, 0), out(1, 1)};
    if (get_array(key, a)) out = Eigen::Vector2d(a[0], a[1]).asDiagonal();
  }
  template <class E, std::size_t N>
  void get_enum(const char* key, E& out, const std::pair<const char*, E> (&names)[N]) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_string()) {
      for (const auto& [name, value] : names) {
        if (*v == name) {
          out = value;
          return;
        }
      }
    }
    std::string allowed;
    for (const auto& [name, _] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    fail(at(key), "expected one of " + allowed);
  }

  std::optional<Reader> child(const char* key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Reader(*v, at(key));
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!used_.count(k)) fail(ptr_ + "/" + escape_pointer(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string ptr_;
  std::set<std::string> used_;
};

// Runs a validate() and prefixes its message with the section pointer.
template <class Fn>
void checked(const std::string& ptr, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    Reader::fail(ptr, e.what());
  }
}

constexpr std::pair<const char*, IntegralRule> kRules[] = {{"one_point", IntegralRule::kOnePoint},
                                                           {"midpoint", IntegralRule::kMidpoint}};
constexpr std::pair<const char*, ScoreMode> kScores[] = {{"raw", ScoreMode::kRaw},
                                                         {"mean_offset", ScoreMode::kMeanOffset}};
constexpr std::pair<const char*, WeightForm> kForms[] = {{"full_coupling", WeightForm::kFullCoupling},
                                                         {"conventional", WeightForm::kConventional}};
constexpr std::pair<const char*, ErrorForm> kErrorForms[] = {{"reduced", ErrorForm::kReduced},
                                                             {"full", ErrorForm::kFull}};
constexpr std::pair<const char*, CollisionSchedule> kSchedules[] = {
    {"uniform", CollisionSchedule::kUniform}, {"inverse_square", CollisionSchedule::kInverseSquare}};

template <class E, std::size_t N>
const char* enum_name(E v, const std::pair<const char*, E> (&names)[N]) {
  for (const auto& [name, value] : names) {
    if (value == v) return name;
  }
  return "?";
}

void read_limits(Reader& r, Limits& l) {
  r.get("v_max", l.v_max);
  r.get("omega_max", l.omega_max);
  r.get("rho_dz", l.rho_dz);
  r.get("rho_max", l.rho_max);
  r.get("dt", l.dt);
  r.finish();
  checked(r.pointer(), [&] { l.validate(); });
}

ojson write_limits(const Limits& l) {
  return {{"v_max", l.v_max}, {"omega_max", l.omega_max}, {"rho_dz", l.rho_dz}, {"rho_max", l.rho_max}, {"dt", l.dt}};
}

ojson pair(double a, double b) { return ojson::array({a, b}); }

void read_scenario(Reader& r, Scenario& sc) {
  r.get("name", sc.name);
  if (auto p = r.child("path")) {
    p->get("lap_time", sc.path.lap_time);
    p->get("ax", sc.path.ax);
    p->get("ay", sc.path.ay);
    p->get("center", sc.path.center);
    p->finish();
    if (!(sc.path.lap_time > 0)) Reader::fail(p->at("lap_time"), "must be positive");
  }
  r.get("laps", sc.laps);
  r.get("dt", sc.dt);
  if (auto o = r.child("obstacles")) {
    if (const json* boxes = o->find("boxes")) {
      if (!boxes->is_array()) Reader::fail(o->at("boxes"), "expected an array");
      sc.obstacles.boxes.clear();
      for (std::size_t i = 0; i < boxes->size(); ++i) {
        const json& b = (*boxes)[i];
        const std::string ptr = o->at("boxes") + "/" + std::to_string(i);
        if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const json& x) { return x.is_number(); })) {
          Reader::fail(ptr, "expected [x_min, y_min, x_max, y_max]");
        }
        const Box box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        if (!(box.x_min < box.x_max && box.y_min < box.y_max)) Reader::fail(ptr, "box has no interior");
        sc.obstacles.boxes.push_back(box);
      }
    }
    if (const json* discs = o->find("discs")) {
      if (!discs->is_array()) Reader::fail(o->at("discs"), "expected an array");
      sc.obstacles.discs.clear();
      for (std::size_t i = 0; i < discs->size(); ++i) {
        const json& d = (*discs)[i];
        const std::string ptr = o->at("discs") + "/" + std::to_string(i);
        if (!d.is_array() || d.size() != 3 || !std::all_of(d.begin(), d.end(), [](const json& x) { return x.is_number(); })) {
          Reader::fail(ptr, "expected [x, y, radius]");
        }
        if (!(d[2].get<double>() > 0)) Reader::fail(ptr, "radius must be positive");
        sc.obstacles.discs.push_back({{d[0].get<double>(), d[1].get<double>()}, d[2].get<double>()});
      }
    }
    o->finish();
  }
  if (auto m = r.child("map")) {
    m->get("width", sc.grid.width);
    m->get("height", sc.grid.height);
    m->get("resolution", sc.grid.resolution);
    m->get("origin", sc.grid.origin);
    m->finish();
    checked(m->pointer(), [&] { sc.grid.validate(); });
  }
  if (auto s = r.child("sensor")) {
    s->get("beam_count", sc.sensor.beam_count);
    s->get("max_range", sc.sensor.max_range);
    s->get("free_step", sc.sensor.free_step);
    s->get("hit_step", sc.sensor.hit_step);
    s->get("period", sc.sense_period);
    s->finish();
    if (sc.sensor.beam_count < 1) Reader::fail(s->at("beam_count"), "must be at least 1");
    if (!(sc.sensor.max_range > 0)) Reader::fail(s->at("max_range"), "must be positive");
    if (!(sc.sense_period > 0)) Reader::fail(s->at("period"), "must be positive");
  }
  r.get("known_map", sc.known_map);
  r.get("substeps", sc.substeps);
  r.get("alpha_shift", sc.alpha_shift);
  r.get("r_ego", sc.r_ego);
  r.get("discrepancy_aware", sc.discrepancy_aware);
  r.get("abort_on_contact", sc.abort_on_contact);
  r.finish();
  if (!(sc.laps > 0)) Reader::fail(r.at("laps"), "must be positive");
  if (!(sc.dt > 0)) Reader::fail(r.at("dt"), "must be positive");
  if (sc.substeps < 1) Reader::fail(r.at("substeps"), "must be at least 1");
  if (!(sc.r_ego >= 0)) Reader::fail(r.at("r_ego"), "must be non-negative");
  if (!(sc.alpha_shift >= 0)) Reader::fail(r.at("alpha_shift"), "must be non-negative");
}

ojson write_scenario(const Scenario& sc) {
  ojson boxes = ojson::array(), discs = ojson::array();
  for (const Box& b : sc.obstacles.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
  for (const Disc& d : sc.obstacles.discs) discs.push_back({d.center.x, d.center.y, d.radius});
  ojson j;
  j["name"] = sc.name;
  j["path"] = {{"lap_time", sc.path.lap_time},
               {"ax", sc.path.ax},
               {"ay", sc.path.ay},
               {"center", pair(sc.path.center.x, sc.path.center.y)}};
  j["laps"] = sc.laps;
  j["dt"] = sc.dt;
  j["obstacles"] = {{"boxes", boxes}, {"discs", discs}};
  j["map"] = {{"width", sc.grid.width},
              {"height", sc.grid.height},
              {"resolution", sc.grid.resolution},
              {"origin", pair(sc.grid.origin.x, sc.grid.origin.y)}};
  j["sensor"] = {{"beam_count", sc.sensor.beam_count},
                 {"max_range", sc.sensor.max_range},
                 {"free_step", sc.sensor.free_step},
                 {"hit_step", sc.sensor.hit_step},
                 {"period", sc.sense_period}};
  j["known_map"] = sc.known_map;
  j["substeps"] = sc.substeps;
  j["alpha_shift"] = sc.alpha_shift;
  j["r_ego"] = sc.r_ego;
  j["discrepancy_aware"] = sc.discrepancy_aware;
  j["abort_on_contact"] = sc.abort_on_contact;
  return j;
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  training.validate();
  calibration.validate();
  assist.validate();
  disturbance_preset(disturbance);
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  if (service.port < 0 || service.port > 65535) throw ConfigError("service port out of range");
  if (!(service.rate_hz > 0)) throw ConfigError("service rate must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

Scenario parse_scenario(const std::string& text) {
  const json j = parse_json(text, "scenario");
  Scenario sc;
  Reader r(j, "");
  read_scenario(r, sc);
  return sc;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  const json j = parse_json(text, "config");
  Reader r(j, "");
  RunConfig c;

  int version = 1;
  r.get("version", version);
  if (version != 1) Reader::fail(r.at("version"), "unsupported version " + std::to_string(version));
  r.get("output_dir", c.output_dir);
  r.get("disturbance", c.disturbance);
  checked(r.at("disturbance"), [&] { disturbance_preset(c.disturbance); });
  r.get("epsilon", c.epsilon);
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) Reader::fail(r.at("epsilon"), "must lie in (0, 1)");

  if (auto s = r.child("seeds")) {
    s->get("planner", c.seeds.planner);
    s->get("disturbance", c.seeds.disturbance);
    s->get("calibration", c.seeds.calibration);
    s->finish();
  }

  if (const json* sc = r.find("scenario")) {
    if (sc->is_string()) {
      c.scenario_path = sc->get<std::string>();
      std::filesystem::path p(c.scenario_path);
      if (p.is_relative()) p = base_dir / p;
      std::string body;
      try {
        body = read_file(p);
      } catch (const FormatError&) {
        Reader::fail(r.at("scenario"), "cannot read scenario file " + p.string());
      }
      const json sj = parse_json(body, "scenario file");
      Reader sr(sj, p.string() + "#");
      read_scenario(sr, c.scenario);
    } else {
      Reader sr(*sc, r.at("scenario"));
      read_scenario(sr, c.scenario);
    }
  }

  if (auto g = r.child("gains")) {
    g->get("k1", c.scenario.gains.k1);
    g->get("k2", c.scenario.gains.k2);
    g->get("k3", c.scenario.gains.k3);
    g->get("lambda1", c.scenario.gains.lambda1);
    g->finish();
    checked(g->pointer(), [&] { c.scenario.gains.validate(); });
  }
  if (auto l = r.child("limits")) read_limits(*l, c.scenario.limits);
  if (auto k = r.child("control")) {
    k->get_enum("form", c.scenario.control.form, kErrorForms);
    k->get("rho_dz", c.scenario.control.rho_dz);
    k->finish();
  }
  if (auto t = r.child("tube")) {
    t->get("alpha1", c.scenario.tube.alpha1);
    t->get("alpha2", c.scenario.tube.alpha2);
    t->get("alpha3_slope", c.scenario.tube.alpha3_slope);
    t->get("lipschitz_V", c.scenario.tube.lipschitz_V);
    t->get("dt", c.scenario.tube.dt);
    t->finish();
    checked(t->pointer(), [&] { c.scenario.tube.validate(); });
  }
  if (auto m = r.child("mppi")) {
    MppiParams& p = c.scenario.mppi;
    m->get("horizon", p.horizon);
    m->get("dt", p.dt);
    m->get("sample_count", p.sample_count);
    m->get("sigma", p.sigma);
    m->get("lambda", p.lambda);
    m->get_enum("weight_form", p.form, kForms);
    m->get("max_attempts", p.max_attempts);
    m->finish();
    checked(m->pointer(), [&] { p.validate(); });
  }
  if (auto w = r.child("cost")) {
    CostWeights& cw = c.scenario.weights;
    w->get_diagonal("q_stage", cw.q_stage);
    w->get_diagonal("q_terminal", cw.q_terminal);
    w->get_diagonal("r_input", cw.r_input);
    w->get("alpha_iss", cw.alpha_iss);
    w->get("lethal", cw.cap);
    w->finish();
    checked(w->pointer(), [&] { cw.validate(); });
  }
  if (auto t = r.child("training")) {
    t->get("lap_times", c.training.lap_times);
    t->get("duration", c.training.duration);
    t->get("dt", c.training.dt);
    t->get("substeps", c.training.substeps);
    t->finish();
  }
  if (auto k = r.child("calibration")) {
    k->get("subsample", c.calibration.subsample);
    k->get("dead_zone", c.calibration.dead_zone);
    k->get_enum("rule", c.calibration.rule, kRules);
    k->get_enum("score", c.calibration.score, kScores);
    k->get("drop_wrap_outliers", c.calibration.drop_wrap_outliers);
    k->finish();
  }
  if (auto a = r.child("assist")) {
    AssistParams& p = c.assist;
    if (auto l = a->child("joystick_limits")) read_limits(*l, p.joystick_limits);
    a->get("horizon", p.horizon);
    a->get("dt", p.dt);
    a->get("sample_count", p.sample_count);
    a->get("lambda", p.lambda);
    a->get("sigma", p.sigma);
    a->get("joystick_fraction", p.joystick_fraction);
    a->get_enum("threshold_schedule", p.threshold_schedule, kSchedules);
    a->get_enum("override_schedule", p.override_schedule, kSchedules);
    a->get("lethal", p.lethal);
    a->get("alpha_iss", p.alpha_iss);
    a->get("max_attempts", p.max_attempts);
    a->finish();
    checked(a->pointer(), [&] { p.validate(); });
  }
  if (auto s = r.child("service")) {
    s->get("host", c.service.host);
    s->get("port", c.service.port);
    s->get("rate_hz", c.service.rate_hz);
    std::array<double, 3> start{c.service.start.x, c.service.start.y, c.service.start.theta};
    if (s->get_array("start", start)) c.service.start = {start[0], start[1], start[2]};
    s->finish();
    if (c.service.port < 0 || c.service.port > 65535) Reader::fail(s->at("port"), "must lie in [0, 65535]");
    if (!(c.service.rate_hz > 0)) Reader::fail(s->at("rate_hz"), "must be positive");
  }
  r.finish();

  propagate_shared(c);
  checked("", [&] { c.validate(); });
  return c;
}

void propagate_shared(RunConfig& c) {
  c.training.gains = c.scenario.gains;
  c.training.limits = c.scenario.limits;
  c.training.control = c.scenario.control;
  c.calibration.epsilon = c.epsilon;
  c.calibration.seed = c.seeds.calibration;
  c.scenario.mppi.seed = c.seeds.planner;
  c.assist.seed = c.seeds.planner;
  c.scenario.disturbance = make_disturbance(c);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const FormatError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text, path.parent_path());
}

std::string serialize_config(const RunConfig& c) {
  const Scenario& sc = c.scenario;
  ojson j;
  j["version"] = 1;
  j["output_dir"] = c.output_dir;
  j["disturbance"] = c.disturbance;
  j["epsilon"] = c.epsilon;
  j["seeds"] = {{"planner", c.seeds.planner}, {"disturbance", c.seeds.disturbance}, {"calibration", c.seeds.calibration}};
  j["scenario"] = write_scenario(sc);
  j["gains"] = {{"k1", sc.gains.k1}, {"k2", sc.gains.k2}, {"k3", sc.gains.k3}, {"lambda1", sc.gains.lambda1}};
  j["limits"] = write_limits(sc.limits);
  j["control"] = {{"form", enum_name(sc.control.form, kErrorForms)}, {"rho_dz", sc.control.rho_dz}};
  j["tube"] = {{"alpha1", sc.tube.alpha1},
               {"alpha2", sc.tube.alpha2},
               {"alpha3_slope", sc.tube.alpha3_slope},
               {"lipschitz_V", sc.tube.lipschitz_V},
               {"dt", sc.tube.dt}};
  j["mppi"] = {{"horizon", sc.mppi.horizon},
               {"dt", sc.mppi.dt},
               {"sample_count", sc.mppi.sample_count},
               {"sigma", pair(sc.mppi.sigma(0), sc.mppi.sigma(1))},
               {"lambda", sc.mppi.lambda},
               {"weight_form", enum_name(sc.mppi.form, kForms)},
               {"max_attempts", sc.mppi.max_attempts}};
  j["cost"] = {{"q_stage", pair(sc.weights.q_stage(0, 0), sc.weights.q_stage(1, 1))},
               {"q_terminal", pair(sc.weights.q_terminal(0, 0), sc.weights.q_terminal(1, 1))},
               {"r_input", pair(sc.weights.r_input(0, 0), sc.weights.r_input(1, 1))},
               {"alpha_iss", sc.weights.alpha_iss},
               {"lethal", sc.weights.cap}};
  j["training"] = {{"lap_times", c.training.lap_times},
                   {"duration", c.training.duration},
                   {"dt", c.training.dt},
                   {"substeps", c.training.substeps}};
  j["calibration"] = {{"subsample", c.calibration.subsample},
                      {"dead_zone", c.calibration.dead_zone},
                      {"rule", enum_name(c.calibration.rule, kRules)},
                      {"score", enum_name(c.calibration.score, kScores)},
                      {"drop_wrap_outliers", c.calibration.drop_wrap_outliers}};
  const AssistParams& a = c.assist;
  j["assist"] = {{"joystick_limits", write_limits(a.joystick_limits)},
                 {"horizon", a.horizon},
                 {"dt", a.dt},
                 {"sample_count", a.sample_count},
                 {"lambda", a.lambda},
                 {"sigma", pair(a.sigma(0), a.sigma(1))},
                 {"joystick_fraction", a.joystick_fraction},
                 {"threshold_schedule", enum_name(a.threshold_schedule, kSchedules)},
                 {"override_schedule", enum_name(a.override_schedule, kSchedules)},
                 {"lethal", a.lethal},
                 {"alpha_iss", a.alpha_iss},
                 {"max_attempts", a.max_attempts}};
  j["service"] = {{"host", c.service.host},
                  {"port", c.service.port},
                  {"rate_hz", c.service.rate_hz},
                  {"start", {c.service.start.x, c.service.start.y, c.service.start.theta}}};
  return j.dump(2) + "\n";
}

DisturbanceModel make_disturbance(const RunConfig& config) {
  DisturbanceModel m = disturbance_preset(config.disturbance);
  m.seed = config.seeds.disturbance;
  return m;
}

Scenario make_scenario(const RunConfig& config, const DiscrepancyBounds& bounds) {
  Scenario sc = config.scenario;
  sc.bounds = bounds;
  sc.disturbance = make_disturbance(config);
  sc.mppi.seed = config.seeds.planner;
  sc.validate();
  return sc;
}

}  // namespace safenav
