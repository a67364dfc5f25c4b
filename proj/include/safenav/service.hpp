#pragma once

// Live driver-assist service: a control loop that owns the simulated vehicle,
// map and planner, and a WebSocket front end that feeds it commands and
// broadcasts its state.

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "safenav/assist.hpp"
#include "safenav/config.hpp"
#include "safenav/protocol.hpp"
#include "safenav/simulator.hpp"

namespace safenav {

class ServiceError : public Error {
 public:
  using Error::Error;
};

// Single-threaded; the server drives it from its control thread.
class AssistLoop {
 public:
  // `samples` enable set-epsilon; without them only the loaded bounds are available.
  AssistLoop(const RunConfig& config, const DiscrepancyBounds& bounds,
             std::vector<DiscrepancySample> samples = {});

  // Applies one client command; throws wire::ProtocolError when it cannot be honoured.
  void apply(std::uint64_t client, const wire::ClientCommand& command);

  // Advances one control period (unless paused) and returns the state to broadcast.
  // The patch holds the cost-map cells changed since the previous tick.
  wire::ServerState tick();

  wire::Hello hello(std::uint64_t client_id) const;
  void forget(std::uint64_t client) { acks_.erase(client); }

  const Pose& pose() const { return sim_.pose; }
  const DiscrepancyCostMap& costmap() const { return costmap_; }
  const OccupancyGrid& truth() const { return truth_; }
  const DiscrepancyBounds& bounds() const { return bounds_; }
  int n_eps() const { return n_eps_; }
  std::uint64_t map_version() const { return map_version_; }

  // Ticks without a joystick message before the held command drops to zero.
  static constexpr int kJoystickTimeoutTicks = 10;

 private:
  void set_bounds(const DiscrepancyBounds& bounds);
  void reset();
  void rebuild_costmap();

  RunConfig config_;
  Scenario scenario_;
  DiscrepancyBounds bounds_;
  std::vector<DiscrepancySample> samples_;
  TubeRadii radii_;
  int n_eps_ = 0;
  DriverAssist assist_;

  OccupancyGrid truth_;
  OccupancyGrid belief_;
  DiscrepancyCostMap costmap_;
  std::vector<double> sent_cells_;  // cost map as last broadcast
  std::uint64_t map_version_ = 0;

  SimState sim_;
  std::uint64_t tick_ = 0;
  int sense_every_ = 1;
  bool paused_ = false;
  bool in_contact_ = false;
  int contacts_ = 0;
  JoystickCmd joystick_;
  int joystick_age_ = 0;
  std::map<std::uint64_t, std::uint64_t> acks_;
  wire::ServerState last_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8765;       // 0 picks a free port
  double rate_hz = 20.0;
  bool handle_signals = false;  // stop on SIGINT/SIGTERM
  std::size_t max_queued_frames = 256;  // slower clients are disconnected
};

// Binds on construction: throws ServiceError when the port is busy.
class Server {
 public:
  Server(const ServerOptions& options, std::unique_ptr<AssistLoop> loop);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  // Serves until stop() or a handled signal.
  void run();
  // Thread-safe.
  void stop();
  std::uint64_t ticks() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace safenav
