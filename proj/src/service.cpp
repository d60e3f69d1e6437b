#include "uarm/service.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "uarm/protocol.hpp"

namespace uarm {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

std::string to_string(LeaderKind kind) {
  switch (kind) {
    case LeaderKind::Virtual: return "virtual";
    case LeaderKind::Mock: return "mock";
    case LeaderKind::Serial: return "serial";
  }
  return "unknown";
}

LeaderKind parse_leader_kind(std::string_view text) {
  if (text == "virtual") return LeaderKind::Virtual;
  if (text == "mock") return LeaderKind::Mock;
  if (text == "serial") return LeaderKind::Serial;
  throw ConfigError("unknown leader source '" + std::string(text) + "' (expected virtual, mock or serial)");
}

namespace {

std::int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string mime_type(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

bool droppable(MessageKind kind) {
  return kind == MessageKind::FollowerState || kind == MessageKind::CommandBatch || kind == MessageKind::Metric;
}

}  // namespace

struct SessionService::Impl {
  class WsConnection;
  class HttpConnection;

  struct Inbound {
    std::uint64_t connection = 0;
    Event event = Event::Start;
    std::optional<Outcome> outcome;
    std::optional<json> params;
  };

  Impl(ServiceOptions o, SessionOptions s, std::shared_ptr<LeaderSource> leader, std::shared_ptr<FollowerBackend> b)
      : options(std::move(o)), config(s.config), backend(std::move(b)) {
    if (!leader) {
      if (options.source != LeaderKind::Virtual) throw ConfigError("a " + to_string(options.source) + " leader source needs a device");
      virtual_leader = std::make_shared<VirtualLeaderSource>(config);
      leader = virtual_leader;
    } else {
      virtual_leader = std::dynamic_pointer_cast<VirtualLeaderSource>(leader);
    }
    session = std::make_unique<Session>(std::move(s), std::move(leader), backend);
    phase = session->state().phase;
    refresh_snapshot(nullptr);
  }

  // --- networking (io thread only) ---
  void accept();
  void on_message(std::uint64_t connection, const std::string& text);
  void join(const std::shared_ptr<WsConnection>& c);
  void leave(std::uint64_t id);
  http::response<http::string_body> handle_http(const http::request<http::string_body>& req);
  json hello_payload();

  // --- any thread ---
  void broadcast(MessageKind kind, json payload);
  void send_to(std::uint64_t connection, MessageKind kind, json payload);
  double t_ms() const { return static_cast<double>(steady_ns() - epoch_ns) / 1e6; }

  // --- control thread ---
  void loop();
  void drain_events();
  void publish(const TickReport& report);
  void refresh_snapshot(const TickReport* report);

  ServiceOptions options;
  ConfigDescriptor config;
  std::shared_ptr<FollowerBackend> backend;
  std::shared_ptr<VirtualLeaderSource> virtual_leader;
  std::unique_ptr<Session> session;

  net::io_context ioc{1};
  std::optional<net::executor_work_guard<net::io_context::executor_type>> work;
  std::optional<tcp::acceptor> acceptor;
  std::uint16_t bound_port = 0;
  std::thread io_thread;
  std::thread loop_thread;
  std::atomic<bool> running{false};
  std::int64_t epoch_ns = steady_ns();

  std::map<std::uint64_t, std::shared_ptr<WsConnection>> connections;  // io thread
  std::uint64_t next_connection = 1;

  std::mutex events_mutex;
  std::deque<Inbound> events;

  std::atomic<Phase> phase{Phase::Idle};
  mutable std::mutex snapshot_mutex;
  json snapshot;

  std::atomic<std::uint64_t> loop_iterations{0};
  std::atomic<std::uint64_t> missed_ticks{0};
  std::atomic<std::uint64_t> open_connections{0};
  std::atomic<std::uint64_t> messages_in{0};
  std::atomic<std::uint64_t> messages_out{0};
  std::atomic<std::uint64_t> messages_dropped{0};
};

// --- WebSocket connection ----------------------------------------------------

class SessionService::Impl::WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(Impl& impl, std::uint64_t id, beast::tcp_stream&& stream) : impl_(impl), id_(id), ws_(std::move(stream)) {}

  std::uint64_t id() const { return id_; }

  void run(http::request<http::string_body> req) {
    beast::get_lowest_layer(ws_).expires_never();
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        spdlog::warn("websocket handshake failed: {}", ec.message());
        return;
      }
      self->impl_.join(self);
      self->read();
    });
  }

  void send(MessageKind kind, const json& payload, double t_ms) {
    if (closed_) return;
    WireMessage m{kind, payload, seq_++, t_ms};
    if (queue_.size() >= impl_.options.max_queue) {
      auto victim = std::find_if(queue_.begin() + 1, queue_.end(), [](const Outgoing& o) { return o.droppable; });
      if (victim != queue_.end()) {
        queue_.erase(victim);
        ++impl_.messages_dropped;
      }
    }
    queue_.push_back({encode(m), droppable(kind)});
    if (queue_.size() == 1) write();
  }

  void close() {
    closed_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).close();
  }

 private:
  struct Outgoing {
    std::string text;
    bool droppable = false;
  };

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->impl_.leave(self->id_);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->impl_.on_message(self->id_, text);
      self->read();
    });
  }

  void write() {
    ws_.async_write(net::buffer(queue_.front().text), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->queue_.clear();
        return;
      }
      ++self->impl_.messages_out;
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  Impl& impl_;
  std::uint64_t id_;
  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<Outgoing> queue_;
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

// --- HTTP connection (upgrades to WebSocket) -------------------------------------

class SessionService::Impl::HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(Impl& impl, tcp::socket&& socket) : impl_(impl), stream_(std::move(socket)) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->dispatch();
    });
  }

 private:
  void dispatch() {
    const std::string_view target(req_.target().data(), req_.target().size());
    const auto path = target.substr(0, target.find('?'));
    if (websocket::is_upgrade(req_)) {
      if (path == "/ws" || path == "/") {
        auto ws = std::make_shared<WsConnection>(impl_, impl_.next_connection++, std::move(stream_));
        ws->run(std::move(req_));
        return;
      }
    }
    res_ = impl_.handle_http(req_);
    http::async_write(stream_, res_, [self = shared_from_this()](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  Impl& impl_;
  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  http::response<http::string_body> res_;
};

// --- Impl: networking --------------------------------------------------------------

void SessionService::Impl::accept() {
  acceptor->async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec != net::error::operation_aborted) spdlog::warn("accept failed: {}", ec.message());
      if (!acceptor->is_open()) return;
    } else {
      std::make_shared<HttpConnection>(*this, std::move(socket))->run();
    }
    accept();
  });
}

json SessionService::Impl::hello_payload() {
  std::lock_guard lock(snapshot_mutex);
  json p{{"event", "hello"},
         {"phase", snapshot.at("phase")},
         {"config", to_json(config)},
         {"params", snapshot.at("params")},
         {"source", to_string(options.source)}};
  if (!snapshot.at("episode_id").is_null()) p["episode_id"] = snapshot.at("episode_id");
  return p;
}

void SessionService::Impl::join(const std::shared_ptr<WsConnection>& c) {
  connections[c->id()] = c;
  ++open_connections;
  spdlog::info("console {} connected ({} open)", c->id(), connections.size());
  c->send(MessageKind::SessionEvent, hello_payload(), t_ms());
}

void SessionService::Impl::leave(std::uint64_t id) {
  if (connections.erase(id) != 0) {
    --open_connections;
    spdlog::info("console {} disconnected ({} open)", id, connections.size());
  }
}

void SessionService::Impl::on_message(std::uint64_t connection, const std::string& text) {
  ++messages_in;
  WireMessage m;
  try {
    m = decode(text);
  } catch (const ParseError& e) {
    send_to(connection, MessageKind::Error, error_payload("ParseError", e.what()));
    return;
  }
  switch (m.kind) {
    case MessageKind::LeaderAngles: {
      if (!virtual_leader) {
        send_to(connection, MessageKind::Error,
                error_payload("SourceError", "leader source is " + to_string(options.source) + "; leader_angles ignored"));
        return;
      }
      try {
        virtual_leader->push(m.payload.at("angles_deg").get<std::vector<double>>(), m.seq, steady_ns());
      } catch (const Error& e) {
        send_to(connection, MessageKind::Error, error_payload(e.kind(), e.what()));
      }
      return;
    }
    case MessageKind::SessionEvent: {
      Inbound in;
      in.connection = connection;
      try {
        in.event = parse_event(m.payload.at("event").get<std::string>());
        if (in.event == Event::FollowerAtInit || in.event == Event::CalibrationDone) {
          throw ConfigError("event '" + to_string(in.event) + "' is internal");
        }
        if (m.payload.contains("outcome")) in.outcome = parse_outcome(m.payload.at("outcome").get<std::string>());
        if (m.payload.contains("params")) in.params = m.payload.at("params");
      } catch (const Error& e) {
        send_to(connection, MessageKind::Error, error_payload(e.kind(), e.what()));
        return;
      }
      std::lock_guard lock(events_mutex);
      events.push_back(std::move(in));
      return;
    }
    default:
      send_to(connection, MessageKind::Error,
              error_payload("UnsupportedKind", "consoles may send leader_angles and session_event only"));
      return;
  }
}

http::response<http::string_body> SessionService::Impl::handle_http(const http::request<http::string_body>& req) {
  http::response<http::string_body> res{http::status::ok, req.version()};
  res.set(http::field::server, "uarm");
  res.keep_alive(false);
  auto reply = [&](http::status status, std::string body, std::string type) {
    res.result(status);
    res.set(http::field::content_type, type);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  auto not_found = [&] {
    return reply(http::status::not_found, error_payload("NotFound", "no such resource").dump(), "application/json");
  };

  const std::string target(req.target().data(), req.target().size());
  const std::string path = target.substr(0, target.find('?'));
  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    return reply(http::status::method_not_allowed, error_payload("MethodNotAllowed", "GET only").dump(),
                 "application/json");
  }
  if (path == "/api/config") {
    json body{{"config", to_json(config)}, {"source", to_string(options.source)}};
    {
      std::lock_guard lock(snapshot_mutex);
      body["params"] = snapshot.at("params");
    }
    return reply(http::status::ok, body.dump(), "application/json");
  }
  if (path == "/api/state") {
    std::lock_guard lock(snapshot_mutex);
    return reply(http::status::ok, snapshot.dump(), "application/json");
  }
  if (path == "/" || path == "/console") {
    res.set(http::field::location, "/console/");
    return reply(http::status::found, "", "text/plain");
  }
  if (path.rfind("/console/", 0) == 0) {
    if (!options.console_dir) {
      return reply(http::status::not_found, "operator console assets are not installed\n", "text/plain");
    }
    std::string rel = path.substr(std::string("/console/").size());
    if (rel.empty()) rel = "index.html";
    if (rel.find("..") != std::string::npos || rel.front() == '/') return not_found();
    const auto file = *options.console_dir / rel;
    std::ifstream in(file, std::ios::binary);
    if (!in) return not_found();
    std::ostringstream body;
    body << in.rdbuf();
    return reply(http::status::ok, body.str(), mime_type(file));
  }
  return not_found();
}

void SessionService::Impl::broadcast(MessageKind kind, json payload) {
  const double t = t_ms();
  net::post(ioc, [this, kind, payload = std::move(payload), t] {
    for (auto& [id, c] : connections) c->send(kind, payload, t);
  });
}

void SessionService::Impl::send_to(std::uint64_t connection, MessageKind kind, json payload) {
  const double t = t_ms();
  net::post(ioc, [this, connection, kind, payload = std::move(payload), t] {
    if (auto it = connections.find(connection); it != connections.end()) it->second->send(kind, payload, t);
  });
}

// --- Impl: control loop ------------------------------------------------------------

void SessionService::Impl::refresh_snapshot(const TickReport* report) {
  const auto& state = session->state();
  json s{{"phase", to_string(state.phase)},
         {"tick", state.tick_count},
         {"config", to_string(config.id)},
         {"episode_id", state.episode_id ? json(*state.episode_id) : json(nullptr)},
         {"params", params_to_json(state.params)},
         {"source", to_string(options.source)},
         {"backend", backend->name()},
         {"backend_healthy", backend->healthy()},
         {"skipped_ticks", session->counters().skipped_ticks},
         {"commands_sent", session->counters().commands_sent},
         {"episodes_recorded", session->counters().episodes_recorded}};
  if (report && report->follower_q) s["q"] = report->follower_q->values;
  if (auto path = session->last_episode_path()) s["last_episode"] = path->string();
  std::lock_guard lock(snapshot_mutex);
  snapshot = std::move(s);
}

void SessionService::Impl::drain_events() {
  std::deque<Inbound> pending;
  {
    std::lock_guard lock(events_mutex);
    pending.swap(events);
  }
  for (auto& in : pending) {
    try {
      if (in.params) session->set_params(params_from_json(*in.params, session->options().params));
      for (const auto& change : session->handle(in.event, in.outcome)) {
        spdlog::info("phase {} -> {} ({})", to_string(change.from), to_string(change.to), to_string(change.event));
        broadcast(MessageKind::SessionEvent, session_event_payload(change, session->state()));
      }
    } catch (const Error& e) {
      send_to(in.connection, MessageKind::Error, error_payload(e.kind(), e.what()));
    }
  }
}

void SessionService::Impl::publish(const TickReport& report) {
  for (const auto& change : report.changes) {
    spdlog::info("phase {} -> {} ({})", to_string(change.from), to_string(change.to), to_string(change.event));
    broadcast(MessageKind::SessionEvent, session_event_payload(change, session->state()));
  }
  if (report.error && report.phase == Phase::Estopped && !report.changes.empty()) {
    spdlog::error("e-stop: {}", *report.error);
    broadcast(MessageKind::Error, error_payload("Estop", *report.error));
  }
  if (report.batch && !report.batch->empty()) {
    broadcast(MessageKind::CommandBatch, command_batch_payload(*report.batch, report.tick));
  }
  broadcast(MessageKind::FollowerState,
            follower_state_payload(report, config, session->state(), session->last_leader_sequence()));
}

void SessionService::Impl::loop() {
  double rate = session->state().params.rate_hz;
  auto pacer = std::make_unique<RatePacer>(rate);
  std::uint64_t missed_before = 0;
  std::int64_t next_metric = steady_ns();
  std::int64_t busy_max_ns = 0;
  std::int64_t busy_sum_ns = 0;
  std::uint64_t window_ticks = 0;

  while (running) {
    pacer->wait();
    const std::int64_t now = steady_ns();
    drain_events();
    const TickReport report = session->update(now);
    publish(report);
    refresh_snapshot(&report);
    phase = report.phase;
    ++loop_iterations;

    const std::int64_t busy = steady_ns() - now;
    busy_max_ns = std::max(busy_max_ns, busy);
    busy_sum_ns += busy;
    ++window_ticks;
    missed_ticks = missed_before + pacer->missed();

    if (now >= next_metric) {
      const json metric{{"tick", session->state().tick_count},
                        {"rate_hz", rate},
                        {"loop_busy_us_max", static_cast<double>(busy_max_ns) / 1e3},
                        {"loop_busy_us_mean", static_cast<double>(busy_sum_ns) / 1e3 / static_cast<double>(window_ticks)},
                        {"missed_ticks", missed_ticks.load()},
                        {"skipped_ticks", session->counters().skipped_ticks},
                        {"commands_sent", session->counters().commands_sent},
                        {"connections", open_connections.load()},
                        {"messages_dropped", messages_dropped.load()}};
      broadcast(MessageKind::Metric, metric);
      busy_max_ns = busy_sum_ns = 0;
      window_ticks = 0;
      next_metric = now + static_cast<std::int64_t>(options.metric_period_s * 1e9);
    }

    if (session->state().params.rate_hz != rate) {
      rate = session->state().params.rate_hz;
      missed_before += pacer->missed();
      pacer = std::make_unique<RatePacer>(rate);
    }
  }

  const Phase p = session->state().phase;
  if (p != Phase::Idle && p != Phase::Estopped && p != Phase::Ended) {
    session->handle(Event::Estop);
    spdlog::warn("service stopped while {}; follower held", to_string(p));
  }
  phase = session->state().phase;
}

// --- SessionService ----------------------------------------------------------------

SessionService::SessionService(ServiceOptions options, SessionOptions session, std::shared_ptr<LeaderSource> leader,
                               std::shared_ptr<FollowerBackend> backend)
    : impl_(std::make_unique<Impl>(std::move(options), std::move(session), std::move(leader), std::move(backend))) {}

SessionService::~SessionService() { stop(); }

void SessionService::start() {
  if (impl_->running) return;
  auto& o = impl_->options;
  beast::error_code ec;
  const auto address = net::ip::make_address(o.host == "localhost" ? "127.0.0.1" : o.host, ec);
  if (ec) throw ConfigError("invalid bind address '" + o.host + "': " + ec.message());
  const tcp::endpoint endpoint(address, o.port);
  tcp::acceptor acceptor(impl_->ioc);
  acceptor.open(endpoint.protocol(), ec);
  if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acceptor.bind(endpoint, ec);
  if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw ConfigError("cannot bind " + o.host + ":" + std::to_string(o.port) + ": " + ec.message());
  impl_->bound_port = acceptor.local_endpoint().port();
  impl_->acceptor.emplace(std::move(acceptor));
  impl_->work.emplace(impl_->ioc.get_executor());
  impl_->running = true;
  impl_->accept();
  impl_->io_thread = std::thread([this] { impl_->ioc.run(); });
  impl_->loop_thread = std::thread([this] { impl_->loop(); });
  spdlog::info("serving {} on http://{}:{} (ws path /ws, console /console/)", to_string(impl_->config.id), o.host,
               impl_->bound_port);
}

void SessionService::stop() {
  if (!impl_->running.exchange(false)) return;
  if (impl_->loop_thread.joinable()) impl_->loop_thread.join();
  net::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ec;
    impl->acceptor->close(ec);
    for (auto& [id, c] : impl->connections) c->close();
    impl->connections.clear();
    impl->open_connections = 0;
    impl->ioc.stop();
  });
  impl_->work.reset();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
  spdlog::info("service stopped");
}

bool SessionService::running() const { return impl_->running; }
std::uint16_t SessionService::port() const { return impl_->bound_port; }
Phase SessionService::phase() const { return impl_->phase; }

SessionService::Stats SessionService::stats() const {
  return {impl_->loop_iterations, impl_->missed_ticks, impl_->open_connections, impl_->messages_in,
          impl_->messages_out, impl_->messages_dropped};
}

}  // namespace uarm
