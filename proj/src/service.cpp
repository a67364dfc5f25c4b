#include "safenav/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

namespace safenav {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

// AssistLoop ------------------------------------------------------------------

AssistLoop::AssistLoop(const RunConfig& config, const DiscrepancyBounds& bounds,
                       std::vector<DiscrepancySample> samples)
    : config_(config),
      scenario_(make_scenario(config, bounds)),
      samples_(std::move(samples)),
      assist_(config.assist, scenario_.gains, scenario_.limits) {
  truth_ = rasterize(scenario_.obstacles, scenario_.grid);
  sense_every_ = std::max(1, static_cast<int>(std::lround(scenario_.sense_period / scenario_.dt)));
  reset();
  set_bounds(bounds);
  sent_cells_ = costmap_.cells;
  map_version_ = 1;
}

void AssistLoop::set_bounds(const DiscrepancyBounds& bounds) {
  bounds.validate();
  const TubeRadii radii = tube_radii(bounds, scenario_.tube);
  const int n = experiment_buffer_cells(radii.r_dt, scenario_.r_ego, scenario_.grid.resolution);
  // a buffer wider than the map blocks everything and the stencil would not fit in memory
  if (n > std::max(scenario_.grid.width, scenario_.grid.height)) {
    throw ConfigError("tube radius " + std::to_string(radii.r_dt) + " m needs a " + std::to_string(n) +
                      "-cell buffer, wider than the map");
  }
  bounds_ = bounds;
  radii_ = radii;
  n_eps_ = n;
  rebuild_costmap();
}

void AssistLoop::rebuild_costmap() {
  costmap_ = inflate(belief_, n_eps_, scenario_.alpha_shift, config_.assist.lethal);
}

void AssistLoop::reset() {
  sim_ = make_sim_state(config_.service.start, scenario_.disturbance, scenario_.dt);
  belief_ = scenario_.known_map ? truth_ : OccupancyGrid(scenario_.grid, kUnknown);
  tick_ = 0;
  contacts_ = 0;
  in_contact_ = false;
  joystick_ = {};
  joystick_age_ = 0;
  last_ = {};
  if (!costmap_.cells.empty()) rebuild_costmap();
}

void AssistLoop::apply(std::uint64_t client, const wire::ClientCommand& command) {
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, wire::Joystick>) {
          joystick_ = {b.v, b.omega, sim_.clock};
          joystick_age_ = 0;
        } else if constexpr (std::is_same_v<T, wire::SetEpsilon>) {
          if (samples_.empty()) {
            throw wire::ProtocolError("set_epsilon unavailable: service started without calibration samples",
                                      command.seq);
          }
          try {
            set_bounds(recalibrate(samples_, b.epsilon, config_.calibration.score));
          } catch (const Error& e) {
            throw wire::ProtocolError(std::string("set_epsilon rejected: ") + e.what(), command.seq);
          }
        } else if constexpr (std::is_same_v<T, wire::Pause>) {
          paused_ = b.paused;
        } else {
          reset();
        }
      },
      command.body);
  auto& ack = acks_[client];
  ack = std::max(ack, command.seq);
}

wire::ServerState AssistLoop::tick() {
  wire::ServerState s = last_;
  if (!paused_) {
    if (++joystick_age_ > kJoystickTimeoutTicks) joystick_ = {};
    if (tick_ % static_cast<std::uint64_t>(sense_every_) == 0) {
      OccupancyGrid updated = sensor_update(belief_, sim_.pose, truth_, scenario_.sensor);
      if (updated.cells != belief_.cells) {
        belief_ = std::move(updated);
        rebuild_costmap();
      }
    }
    const AssistDecision d = assist_.step(sim_.pose, joystick_, costmap_, bounds_, scenario_.tube);
    sim_ = step_true(sim_, d.command, scenario_.disturbance, scenario_.dt, scenario_.substeps);
    ++tick_;
    const bool contact = scenario_.obstacles.distance({sim_.pose.x, sim_.pose.y}) < scenario_.r_ego;
    if (contact && !in_contact_) ++contacts_;
    in_contact_ = contact;

    s.command = d.command;
    s.joystick = clamp({joystick_.v, joystick_.omega}, config_.assist.joystick_limits);
    s.mode = d.mode;
    s.emergency_stop = d.emergency_stop;
    s.joystick_cost = d.joystick_cost;
    s.plan_cost = d.plan ? d.plan->total_cost : 0.0;
    s.projected.clear();
    for (const Pose& p : d.projected) s.projected.push_back({p.x, p.y});
    s.plan.clear();
    if (d.plan) {
      for (const Pose& p : d.plan->states) s.plan.push_back({p.x, p.y});
    }
  }
  s.clock = sim_.clock;
  s.pose = sim_.pose;
  s.paused = paused_;
  s.lethal = config_.assist.lethal;
  s.epsilon = bounds_.epsilon;
  s.n_eps = n_eps_;
  s.r0 = radii_.r0;
  s.r_dt = radii_.r_dt;
  s.r_ego = scenario_.r_ego;
  s.contacts = contacts_;
  s.acks = acks_;
  s.patch.reset();
  last_ = s;
  if (costmap_.cells != sent_cells_) {
    wire::CostmapPatch p = wire::diff_costmap(sent_cells_, costmap_.cells);
    p.version = ++map_version_;
    p.lethal = costmap_.lethal_threshold;
    p.n_eps = n_eps_;
    s.patch = std::move(p);
    sent_cells_ = costmap_.cells;
  }
  return s;
}

wire::Hello AssistLoop::hello(std::uint64_t client_id) const {
  wire::Hello h;
  h.client_id = client_id;
  h.geometry = costmap_.geometry;
  h.costmap = wire::full_costmap(sent_cells_);
  h.costmap.version = map_version_;
  h.costmap.lethal = costmap_.lethal_threshold;
  h.costmap.n_eps = n_eps_;
  return h;
}

// Server ----------------------------------------------------------------------

namespace {

class Session;

// Network-side registry. The control thread reads the inbox and pushes frames;
// sessions only enqueue raw text.
struct Hub {
  std::mutex mu;
  std::uint64_t next_id = 1;
  std::map<std::uint64_t, std::weak_ptr<Session>> active;
  std::vector<std::pair<std::uint64_t, std::weak_ptr<Session>>> pending;
  std::vector<std::pair<std::uint64_t, std::string>> inbox;
  std::vector<std::uint64_t> left;
  std::size_t max_queued = 256;

  std::uint64_t join(const std::shared_ptr<Session>& s) {
    std::lock_guard lock(mu);
    const std::uint64_t id = next_id++;
    pending.emplace_back(id, s);
    return id;
  }
  void leave(std::uint64_t id) {
    std::lock_guard lock(mu);
    left.push_back(id);
  }
  void receive(std::uint64_t id, std::string text) {
    std::lock_guard lock(mu);
    inbox.emplace_back(id, std::move(text));
  }
};

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->id_ = self->hub_.join(self);
      self->read();
    });
  }

  // Any thread.
  void send(std::shared_ptr<const std::string> frame) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), frame = std::move(frame)] {
      if (self->closing_) return;
      self->queue_.push_back(frame);
      if (self->queue_.size() > self->hub_.max_queued) {
        self->queue_.clear();
        self->close();
        return;
      }
      if (self->queue_.size() == 1) self->write();
    });
  }

  void close() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closing_) return;
      self->closing_ = true;
      if (!self->queue_.empty()) return;  // the pending write finishes first
      self->ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.leave(self->id_);
        return;
      }
      self->hub_.receive(self->id_, beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->write();
      } else if (self->closing_) {
        self->ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
      }
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  Hub& hub_;
  std::uint64_t id_ = 0;
  bool closing_ = false;
};

}  // namespace

struct Server::Impl {
  ServerOptions options;
  std::unique_ptr<AssistLoop> loop;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  asio::signal_set signals{ioc};
  asio::steady_timer shutdown_timer{ioc};
  Hub hub;
  std::atomic<bool> running{true};
  std::atomic<std::uint64_t> ticks{0};
  std::uint64_t seq = 0;  // control thread only

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec == asio::error::operation_aborted || !acceptor.is_open()) return;
      if (!ec) std::make_shared<Session>(std::move(socket), hub)->start();
      accept();
    });
  }

  void send(const std::weak_ptr<Session>& to, std::string frame) {
    if (auto s = to.lock()) s->send(std::make_shared<const std::string>(std::move(frame)));
  }

  // One control period: commands in, hellos for new clients, then the state.
  void step() {
    std::vector<std::pair<std::uint64_t, std::string>> inbox;
    std::vector<std::uint64_t> left;
    std::vector<std::pair<std::uint64_t, std::weak_ptr<Session>>> joined;
    {
      std::lock_guard lock(hub.mu);
      inbox.swap(hub.inbox);
      left.swap(hub.left);
      joined.swap(hub.pending);
    }
    std::map<std::uint64_t, std::weak_ptr<Session>> targets;
    {
      std::lock_guard lock(hub.mu);
      for (std::uint64_t id : left) hub.active.erase(id);
      for (const auto& [id, s] : joined) hub.active[id] = s;
      targets = hub.active;
    }
    for (std::uint64_t id : left) loop->forget(id);

    for (auto& [id, text] : inbox) {
      try {
        loop->apply(id, wire::decode_command(text));
      } catch (const wire::ProtocolError& e) {
        const auto it = targets.find(id);
        if (it != targets.end()) send(it->second, wire::encode(wire::ErrorFrame{++seq, e.client_seq(), e.what()}));
      }
    }
    for (const auto& [id, s] : joined) {
      wire::Hello h = loop->hello(id);
      h.seq = ++seq;
      send(s, wire::encode(h));
    }
    wire::ServerState state = loop->tick();
    state.seq = ++seq;
    const auto frame = std::make_shared<const std::string>(wire::encode(state));
    for (const auto& [id, s] : targets) {
      if (auto p = s.lock()) p->send(frame);
    }
    ++ticks;
  }

  void control() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / options.rate_hz));
    auto next = clock::now();
    while (running) {
      try {
        step();
      } catch (const std::exception& e) {
        std::cerr << "assist-serve: control step failed: " << e.what() << "\n";
      }
      next += period;
      const auto now = clock::now();
      if (next < now - period) next = now;  // fell behind; do not burst
      std::this_thread::sleep_until(next);
    }
  }

  void shutdown() {
    beast::error_code ec;
    acceptor.close(ec);
    signals.cancel(ec);
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard lock(hub.mu);
      for (const auto& [id, s] : hub.active) {
        if (auto p = s.lock()) all.push_back(p);
      }
      for (const auto& [id, s] : hub.pending) {
        if (auto p = s.lock()) all.push_back(p);
      }
    }
    for (const auto& s : all) s->close();
    shutdown_timer.expires_after(std::chrono::seconds(1));
    shutdown_timer.async_wait([this](beast::error_code e) {
      if (!e) ioc.stop();
    });
  }
};

Server::Server(const ServerOptions& options, std::unique_ptr<AssistLoop> loop) : impl_(std::make_unique<Impl>()) {
  if (!loop) throw ServiceError("server needs a control loop");
  if (!(options.rate_hz > 0)) throw ServiceError("rate must be positive");
  impl_->options = options;
  impl_->loop = std::move(loop);
  impl_->hub.max_queued = options.max_queued_frames;
  beast::error_code ec;
  const auto address = asio::ip::make_address(options.host, ec);
  if (ec) throw ServiceError("invalid host address '" + options.host + "'");
  const tcp::endpoint endpoint(address, static_cast<unsigned short>(options.port));
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol());
  acc.set_option(asio::socket_base::reuse_address(true));
  acc.bind(endpoint, ec);
  if (ec == asio::error::address_in_use) {
    throw ServiceError("port " + std::to_string(options.port) + " is already in use on " + options.host);
  }
  if (ec) throw ServiceError("cannot bind " + options.host + ":" + std::to_string(options.port) + ": " + ec.message());
  acc.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw ServiceError("cannot listen: " + ec.message());
  if (options.handle_signals) {
    impl_->signals.add(SIGINT);
    impl_->signals.add(SIGTERM);
    impl_->signals.async_wait([this](beast::error_code e, int) {
      if (!e) stop();
    });
  }
}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

std::uint64_t Server::ticks() const { return impl_->ticks; }

void Server::run() {
  impl_->accept();
  std::thread control([this] { impl_->control(); });
  impl_->ioc.run();
  impl_->running = false;
  control.join();
}

void Server::stop() {
  impl_->running = false;
  asio::post(impl_->ioc, [this] { impl_->shutdown(); });
}

}  // namespace safenav
