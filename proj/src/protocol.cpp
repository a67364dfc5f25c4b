#include "safenav/protocol.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "json_util.hpp"

namespace safenav::wire {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using detail::num;

namespace {

// Appends runs for cells in [i, end) where `changed` holds, merging equal values.
template <class Changed>
std::vector<Run> runs_where(const std::vector<double>& cells, Changed&& changed) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!changed(i)) continue;
    if (!runs.empty()) {
      Run& last = runs.back();
      if (last.start + last.length == i && last.value == cells[i]) {
        ++last.length;
        continue;
      }
    }
    runs.push_back({static_cast<std::uint32_t>(i), 1, cells[i]});
  }
  return runs;
}

ojson encode_patch(const CostmapPatch& p) {
  ojson runs = ojson::array();
  for (const Run& r : p.runs) runs.push_back({r.start, r.length, num(r.value)});
  return {{"version", p.version}, {"full", p.full}, {"lethal", num(p.lethal)}, {"n_eps", p.n_eps}, {"runs", runs}};
}

ojson points(const std::vector<Vec2>& pts) {
  ojson a = ojson::array();
  for (const Vec2& p : pts) a.push_back({p.x, p.y});
  return a;
}

const char* mode_name(AssistMode m) { return m == AssistMode::kOverride ? "override" : "pass_through"; }

ojson envelope(const char* type, std::uint64_t seq) {
  ojson j;
  j["type"] = type;
  j["version"] = kVersion;
  j["seq"] = seq;
  return j;
}

// Field access for decoders; errors carry the field name.
struct Fields {
  const json& j;
  std::optional<std::uint64_t> client_seq;

  [[noreturn]] void fail(const std::string& what) const { throw ProtocolError(what, client_seq); }

  const json& at(const char* key) const {
    const auto it = j.find(key);
    if (it == j.end()) fail(std::string("missing field '") + key + "'");
    return *it;
  }
  double number(const char* key) const {
    const auto v = detail::as_double(at(key));
    if (!v) fail(std::string("field '") + key + "' must be a number");
    return *v;
  }
  double finite(const char* key) const {
    const double v = number(key);
    if (!std::isfinite(v)) fail(std::string("field '") + key + "' must be finite");
    return v;
  }
  std::uint64_t unsigned_int(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_unsigned()) fail(std::string("field '") + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean(const char* key) const {
    const json& v = at(key);
    if (!v.is_boolean()) fail(std::string("field '") + key + "' must be true or false");
    return v.get<bool>();
  }
  std::string string(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }
  std::vector<Vec2> points(const char* key) const {
    std::vector<Vec2> out;
    for (const json& p : at(key)) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return out;
  }
};

json parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw ProtocolError("malformed JSON");
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  return j;
}

void check_version(const Fields& f) {
  const json& v = f.at("version");
  if (!v.is_number_integer() || v.get<int>() != kVersion) {
    f.fail("unsupported protocol version (expected " + std::to_string(kVersion) + ")");
  }
}

CostmapPatch decode_patch(const json& j) {
  const Fields f{j, std::nullopt};
  CostmapPatch p;
  p.version = f.unsigned_int("version");
  p.full = f.boolean("full");
  p.lethal = f.number("lethal");
  p.n_eps = f.at("n_eps").get<int>();
  for (const json& r : f.at("runs")) {
    const auto v = detail::as_double(r.at(2));
    if (!v) throw ProtocolError("costmap run value must be a number");
    p.runs.push_back({r.at(0).get<std::uint32_t>(), r.at(1).get<std::uint32_t>(), *v});
  }
  return p;
}

// Client-side decoders treat any shape mismatch as a protocol error.
template <class Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed frame: ") + e.what());
  }
}

}  // namespace

ServerState decode_state_unguarded(const std::string& text);
Hello decode_hello_unguarded(const std::string& text);
ErrorFrame decode_error_unguarded(const std::string& text);

CostmapPatch diff_costmap(const std::vector<double>& before, const std::vector<double>& after) {
  if (before.size() != after.size()) throw ProtocolError("costmap sizes differ");
  CostmapPatch p;
  // Bitwise comparison so that NaN-free maps diff exactly.
  p.runs = runs_where(after, [&](std::size_t i) { return before[i] != after[i]; });
  return p;
}

CostmapPatch full_costmap(const std::vector<double>& cells) {
  CostmapPatch p;
  p.full = true;
  p.runs = runs_where(cells, [](std::size_t) { return true; });
  return p;
}

void apply_patch(std::vector<double>& cells, const CostmapPatch& patch) {
  for (const Run& r : patch.runs) {
    if (static_cast<std::uint64_t>(r.start) + r.length > cells.size()) throw ProtocolError("costmap run outside the map");
  }
  if (patch.full) {
    std::uint64_t covered = 0;
    for (const Run& r : patch.runs) covered += r.length;
    if (covered != cells.size()) throw ProtocolError("full costmap does not cover the map");
  }
  for (const Run& r : patch.runs) std::fill_n(cells.begin() + r.start, r.length, r.value);
}

std::string encode(const ServerState& s) {
  ojson j = envelope("state", s.seq);
  j["clock"] = s.clock;
  j["pose"] = {s.pose.x, s.pose.y, s.pose.theta};
  j["command"] = {s.command.v, s.command.omega};
  j["joystick"] = {s.joystick.v, s.joystick.omega};
  j["mode"] = mode_name(s.mode);
  j["emergency_stop"] = s.emergency_stop;
  j["paused"] = s.paused;
  j["costs"] = {{"joystick", num(s.joystick_cost)}, {"plan", num(s.plan_cost)}, {"lethal", num(s.lethal)}};
  j["epsilon"] = s.epsilon;
  j["n_eps"] = s.n_eps;
  j["tube"] = {{"r0", num(s.r0)}, {"r_dt", num(s.r_dt)}};
  j["r_ego"] = s.r_ego;
  j["contacts"] = s.contacts;
  j["projected"] = points(s.projected);
  j["plan"] = points(s.plan);
  ojson acks = ojson::object();
  for (const auto& [client, seq] : s.acks) acks[std::to_string(client)] = seq;
  j["acks"] = acks;
  j["costmap_patch"] = s.patch ? encode_patch(*s.patch) : ojson(nullptr);
  return j.dump();
}

std::string encode(const Hello& h) {
  ojson j = envelope("hello", h.seq);
  j["client_id"] = h.client_id;
  j["map"] = {{"width", h.geometry.width},
              {"height", h.geometry.height},
              {"resolution", h.geometry.resolution},
              {"origin", {h.geometry.origin.x, h.geometry.origin.y}}};
  j["costmap"] = encode_patch(h.costmap);
  return j.dump();
}

std::string encode(const ErrorFrame& e) {
  ojson j = envelope("error", e.seq);
  j["client_seq"] = e.client_seq ? ojson(*e.client_seq) : ojson(nullptr);
  j["message"] = e.message;
  return j.dump();
}

std::string encode(const ClientCommand& c) {
  ojson j;
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, Joystick>) {
          j["type"] = "joystick";
        } else if constexpr (std::is_same_v<T, SetEpsilon>) {
          j["type"] = "set_epsilon";
        } else if constexpr (std::is_same_v<T, Pause>) {
          j["type"] = "pause";
        } else {
          j["type"] = "reset";
        }
        j["version"] = kVersion;
        j["seq"] = c.seq;
        if constexpr (std::is_same_v<T, Joystick>) {
          j["v"] = b.v;
          j["omega"] = b.omega;
        } else if constexpr (std::is_same_v<T, SetEpsilon>) {
          j["epsilon"] = b.epsilon;
        } else if constexpr (std::is_same_v<T, Pause>) {
          j["paused"] = b.paused;
        }
      },
      c.body);
  return j.dump();
}

ClientCommand decode_command(const std::string& text) {
  const json j = parse(text);
  Fields f{j, std::nullopt};
  ClientCommand c;
  c.seq = f.unsigned_int("seq");
  f.client_seq = c.seq;
  check_version(f);
  const std::string type = f.string("type");
  if (type == "joystick") {
    c.body = Joystick{f.finite("v"), f.finite("omega")};
  } else if (type == "set_epsilon") {
    const double eps = f.finite("epsilon");
    if (!(eps > 0.0 && eps < 1.0)) f.fail("epsilon must lie in (0, 1)");
    c.body = SetEpsilon{eps};
  } else if (type == "pause") {
    c.body = Pause{f.boolean("paused")};
  } else if (type == "reset") {
    c.body = Reset{};
  } else {
    f.fail("unknown command type '" + type + "'");
  }
  return c;
}

std::string frame_type(const std::string& text) {
  const json j = parse(text);
  return Fields{j, std::nullopt}.string("type");
}

ServerState decode_state(const std::string& text) {
  return guarded([&] { return decode_state_unguarded(text); });
}

ServerState decode_state_unguarded(const std::string& text) {
  const json j = parse(text);
  const Fields f{j, std::nullopt};
  check_version(f);
  if (f.string("type") != "state") f.fail("not a state frame");
  ServerState s;
  s.seq = f.unsigned_int("seq");
  s.clock = f.number("clock");
  const json& p = f.at("pose");
  s.pose = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
  const json& c = f.at("command");
  s.command = {c.at(0).get<double>(), c.at(1).get<double>()};
  const json& jy = f.at("joystick");
  s.joystick = {jy.at(0).get<double>(), jy.at(1).get<double>()};
  s.mode = f.string("mode") == "override" ? AssistMode::kOverride : AssistMode::kPassThrough;
  s.emergency_stop = f.boolean("emergency_stop");
  s.paused = f.boolean("paused");
  const Fields costs{f.at("costs"), std::nullopt};
  s.joystick_cost = costs.number("joystick");
  s.plan_cost = costs.number("plan");
  s.lethal = costs.number("lethal");
  s.epsilon = f.number("epsilon");
  s.n_eps = f.at("n_eps").get<int>();
  const Fields tube{f.at("tube"), std::nullopt};
  s.r0 = tube.number("r0");
  s.r_dt = tube.number("r_dt");
  s.r_ego = f.number("r_ego");
  s.contacts = f.at("contacts").get<int>();
  s.projected = f.points("projected");
  s.plan = f.points("plan");
  for (const auto& [client, seq] : f.at("acks").items()) s.acks[std::stoull(client)] = seq.get<std::uint64_t>();
  if (!f.at("costmap_patch").is_null()) s.patch = decode_patch(f.at("costmap_patch"));
  return s;
}

Hello decode_hello(const std::string& text) {
  return guarded([&] { return decode_hello_unguarded(text); });
}

Hello decode_hello_unguarded(const std::string& text) {
  const json j = parse(text);
  const Fields f{j, std::nullopt};
  check_version(f);
  if (f.string("type") != "hello") f.fail("not a hello frame");
  Hello h;
  h.seq = f.unsigned_int("seq");
  h.client_id = f.unsigned_int("client_id");
  const Fields m{f.at("map"), std::nullopt};
  h.geometry.width = m.at("width").get<int>();
  h.geometry.height = m.at("height").get<int>();
  h.geometry.resolution = m.number("resolution");
  h.geometry.origin = {m.at("origin").at(0).get<double>(), m.at("origin").at(1).get<double>()};
  h.costmap = decode_patch(f.at("costmap"));
  return h;
}

ErrorFrame decode_error(const std::string& text) {
  return guarded([&] { return decode_error_unguarded(text); });
}

ErrorFrame decode_error_unguarded(const std::string& text) {
  const json j = parse(text);
  const Fields f{j, std::nullopt};
  check_version(f);
  if (f.string("type") != "error") f.fail("not an error frame");
  ErrorFrame e;
  e.seq = f.unsigned_int("seq");
  if (!f.at("client_seq").is_null()) e.client_seq = f.unsigned_int("client_seq");
  e.message = f.string("message");
  return e;
}

}  // namespace safenav::wire
