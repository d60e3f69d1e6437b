#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "uarm/session.hpp"

namespace uarm {

enum class LeaderKind { Virtual, Mock, Serial };

std::string to_string(LeaderKind kind);
LeaderKind parse_leader_kind(std::string_view text);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8787;  // 0 picks an ephemeral port
  std::optional<std::filesystem::path> console_dir;
  LeaderKind source = LeaderKind::Virtual;
  // Seconds between metric broadcasts.
  double metric_period_s = 1.0;
  // Outbound messages queued per connection before the oldest are dropped.
  std::size_t max_queue = 1024;
};

// Hosts one session behind a WebSocket endpoint (path "/ws" or "/") and a
// small HTTP API on the same port. The control loop runs on its own thread at
// the session's rate; networking runs on a second thread.
class SessionService {
 public:
  struct Stats {
    std::uint64_t loop_iterations = 0;
    std::uint64_t missed_ticks = 0;
    std::uint64_t connections = 0;  // currently open
    std::uint64_t messages_in = 0;
    std::uint64_t messages_out = 0;
    std::uint64_t messages_dropped = 0;
  };

  // `leader` may be null when the source is virtual; the service then creates one.
  SessionService(ServiceOptions options, SessionOptions session, std::shared_ptr<LeaderSource> leader,
                 std::shared_ptr<FollowerBackend> backend);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  // Binds and starts both threads. Throws ConfigError when the address cannot be bound.
  void start();
  // Idempotent. Open episodes are closed as estop.
  void stop();
  bool running() const;
  std::uint16_t port() const;

  Phase phase() const;
  Stats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace uarm
