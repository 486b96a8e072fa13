#pragma once

#include "riverpilot/service.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace riverpilot::server {

struct ServerOptions {
  std::filesystem::path map_path;  // empty: bundled map
  std::filesystem::path log_dir = "logs";
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;  // 0 picks a free port
  int threads = 1;
  /// Base for every player's hello config.
  service::SessionConfig defaults;
};

/// Clock ticks per second in realtime and accelerated modes.
inline constexpr int kTickHz = 100;
/// Ticks folded into one logged Stepped or Waited event.
inline constexpr int kTicksPerFlush = 10;

/// WebSocket front end, one JSON message per text frame. Each session has
/// its own strand; the map is loaded once and shared read-only.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Loads the map, binds and starts the worker threads.
  /// Throws ConfigError or BindError.
  void start();
  /// Port actually bound, after start.
  std::uint16_t port() const;
  /// Writes every session's trailer and joins the workers.
  void stop();
  /// start, then block until SIGINT or SIGTERM.
  void run_until_signal();

  std::vector<std::string> session_ids() const;

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace riverpilot::server
