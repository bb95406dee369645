// HTTP and WebSocket front end for a LiveSimulation.
//
//   GET /health  service liveness and simulated time
//   GET /state   latest snapshot
//   /ws          snapshots out, commands in, one ack per command
#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "separator/hmi.hpp"

namespace separator {

struct ServerOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks an ephemeral port
  /// Static bearer token for /ws; empty disables the check.
  std::string token;
};

class HmiServer {
 public:
  HmiServer(LiveSimulation& sim, ServerOptions options);
  ~HmiServer();
  HmiServer(const HmiServer&) = delete;
  HmiServer& operator=(const HmiServer&) = delete;

  /// Binds, starts serving on a background thread and returns the bound port.
  std::uint16_t start();
  void stop();
  /// Blocks until SIGINT or SIGTERM.
  void wait();
  std::size_t session_count() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace separator
