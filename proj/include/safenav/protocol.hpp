#pragma once

// Wire format between the assist service and cockpit clients: JSON text
// frames over WebSocket. See docs/protocol.md.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "safenav/assist.hpp"
#include "safenav/errors.hpp"
#include "safenav/gridmap.hpp"

namespace safenav::wire {

inline constexpr int kVersion = 1;

// Cells [start, start + length) all take `value`. Absolute values, so applying
// a patch twice is the same as applying it once.
struct Run {
  std::uint32_t start = 0;
  std::uint32_t length = 0;
  double value = 0.0;
  bool operator==(const Run&) const = default;
};

struct CostmapPatch {
  std::uint64_t version = 0;  // map version once applied
  bool full = false;          // covers every cell
  double lethal = 0.0;
  int n_eps = 0;
  std::vector<Run> runs;
};

// Runs over cells that differ between `before` and `after`; equal neighbours merge.
CostmapPatch diff_costmap(const std::vector<double>& before, const std::vector<double>& after);
CostmapPatch full_costmap(const std::vector<double>& cells);
// Throws ProtocolError when a run leaves the map.
void apply_patch(std::vector<double>& cells, const CostmapPatch& patch);

struct ServerState {
  std::uint64_t seq = 0;
  double clock = 0.0;
  Pose pose;
  VelocityCmd command;
  VelocityCmd joystick;
  AssistMode mode = AssistMode::kPassThrough;
  bool emergency_stop = false;
  bool paused = false;
  double joystick_cost = 0.0;
  double plan_cost = 0.0;
  double lethal = 0.0;
  double epsilon = 0.0;
  int n_eps = 0;
  double r0 = 0.0;
  double r_dt = 0.0;
  double r_ego = 0.0;
  int contacts = 0;
  std::vector<Vec2> projected;  // joystick rollout
  std::vector<Vec2> plan;       // override rollout, empty in pass-through
  std::map<std::uint64_t, std::uint64_t> acks;  // client id -> last applied command seq
  std::optional<CostmapPatch> patch;
};

// First frame a client receives: its id and the full cost map.
struct Hello {
  std::uint64_t seq = 0;
  std::uint64_t client_id = 0;
  GridGeometry geometry;
  CostmapPatch costmap;
};

struct ErrorFrame {
  std::uint64_t seq = 0;
  std::optional<std::uint64_t> client_seq;
  std::string message;
};

struct Joystick {
  double v = 0.0;
  double omega = 0.0;
};
struct SetEpsilon {
  double epsilon = 0.01;
};
struct Pause {
  bool paused = true;
};
struct Reset {};

struct ClientCommand {
  std::uint64_t seq = 0;
  std::variant<Joystick, SetEpsilon, Pause, Reset> body;
};

class ProtocolError : public Error {
 public:
  ProtocolError(std::string message, std::optional<std::uint64_t> client_seq = std::nullopt)
      : Error(std::move(message)), client_seq_(client_seq) {}
  std::optional<std::uint64_t> client_seq() const { return client_seq_; }

 private:
  std::optional<std::uint64_t> client_seq_;
};

std::string encode(const ServerState& s);
std::string encode(const Hello& h);
std::string encode(const ErrorFrame& e);
std::string encode(const ClientCommand& c);

// Throws ProtocolError; the client seq is attached whenever it could be read.
ClientCommand decode_command(const std::string& text);

// Client-side decoding, used by tests and tools.
ServerState decode_state(const std::string& text);
Hello decode_hello(const std::string& text);
ErrorFrame decode_error(const std::string& text);
// "state", "hello" or "error".
std::string frame_type(const std::string& text);

}  // namespace safenav::wire
