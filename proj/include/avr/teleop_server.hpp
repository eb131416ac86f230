#pragma once

#include <memory>
#include <string>

#include "avr/teleop_session.hpp"

namespace avr {

struct ServerOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  SessionOptions session;
  double tick_interval_ms = 2.0;
  bool handle_signals = false;  // stop on SIGINT / SIGTERM
  std::size_t max_queued_frames = 4;  // per client; older frames are dropped first
};

/// WebSocket front end for one Session at ws://host:port/session. All
/// messages and ticks run on a single event loop thread.
class TeleopServer {
 public:
  /// Binds immediately; throws IoError when the address is unavailable.
  TeleopServer(std::shared_ptr<const WorldScene> scene, ServerOptions opts);
  ~TeleopServer();
  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  unsigned short port() const;
  /// Serves until stop(). Closes any open recording before returning.
  void run();
  /// Safe to call from any thread.
  void stop();

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace avr
