#pragma once
/**
 * @file server.hpp
 * @brief Telemetry fan-out over raw TCP (newline-delimited) and WebSocket.
 *
 * Each subscriber owns a one-slot mailbox: while a write is in flight, a
 * newer payload replaces the pending one, so slow clients skip frames and
 * never stall the publisher. Lines received from clients are queued as
 * commands together with a handle for replying to the sender only.
 */

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace navtrace {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  /// 0 picks an ephemeral port.
  std::uint16_t tcp_port = 7000;
  std::uint16_t ws_port = 7001;
  /// Incoming lines longer than this close the connection.
  std::size_t max_line_bytes = 64 * 1024;
};

class Subscriber {
 public:
  virtual ~Subscriber() = default;
  /// Replaces any pending payload.
  virtual void deliver(std::shared_ptr<const std::string> payload) = 0;
  /// Queued behind the current write; never replaced.
  virtual void reply(std::string payload) = 0;
};

struct Command {
  std::string text;
  std::weak_ptr<Subscriber> origin;
};

class Server {
 public:
  explicit Server(ServerConfig config = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds both endpoints and starts the network thread.
  void start();
  void stop();

  std::uint16_t tcp_port() const;
  std::uint16_t ws_port() const;

  /// Thread-safe; returns immediately.
  void publish(std::string payload);

  std::vector<Command> take_commands();

  std::size_t subscriber_count() const;
  /// Payloads replaced in a mailbox before being written.
  std::uint64_t skipped() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

/// Reads NAVTRACE_LOG (trace, debug, info, warn, error, off) and installs a
/// stderr logger.
void init_logging();

}  // namespace navtrace
