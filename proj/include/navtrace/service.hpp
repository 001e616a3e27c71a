#pragma once
/**
 * @file service.hpp
 * @brief Live tracking service: a detection source feeding the tracker and
 *        the telemetry server.
 *
 * The source thread groups detections into frames, applies queued control
 * messages between frames, and hands frames to a worker pool. Results are
 * published strictly in frame order.
 */

#include "navtrace/pipeline.hpp"
#include "navtrace/server.hpp"
#include "navtrace/sim.hpp"
#include "navtrace/wire.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace navtrace {

enum class SourceKind { kSim, kFile, kSocket };

struct ServiceConfig {
  SourceKind source = SourceKind::kSim;
  SceneLayout layout = default_layout();
  TrackerOptions tracker;
  /// kSim: the layout inside is replaced by `layout`.
  SimConfig sim;
  /// kFile: JSON-lines detections, replayed at their timestamps.
  std::filesystem::path detections_path;
  /// kSocket: port receiving JSON-lines detections (0 = ephemeral).
  std::uint16_t ingest_port = 7002;
  std::string ingest_address = "127.0.0.1";
  int assembler_window = 1;
  /// Pace sources in real time; off runs as fast as the workers allow.
  bool realtime = true;
  /// 0 = until stopped (kSim) or exhausted (kFile).
  std::int64_t max_frames = 0;
  int workers = 2;
};

struct ServiceStats {
  std::int64_t frames_published = 0;
  std::int64_t malformed_lines = 0;
  std::int64_t late_records = 0;
  std::int64_t rejected_controls = 0;
};

class Service {
 public:
  /// `server` may be null; results then only reach `on_frame`.
  Service(ServiceConfig config, Server* server);
  ~Service();

  /// Called on a worker thread, in frame order, after publishing.
  void on_frame(std::function<void(const FrameResult&, const std::string&)> callback);

  /// Blocks until the source is exhausted, max_frames is reached, or stop().
  void run();
  void stop();

  /// Port of the socket source once run() has bound it.
  std::uint16_t ingest_port() const;
  ServiceStats stats() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace navtrace
