#pragma once
/**
 * @file pipeline.hpp
 * @brief Per-frame tracking: detection grouping, the stale-data cache and
 *        the solve -> fuse -> target chain.
 *
 * Work is split so that everything stateful (frame grouping, the stale
 * cache) runs sequentially on the ingest side, while process_frame() is a
 * pure function of its input and may run on any worker thread.
 */

#include "navtrace/frames.hpp"
#include "navtrace/pose.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace navtrace {

enum class CameraStatus { kTracked, kStale, kOccluded };
std::string_view to_string(CameraStatus status);

struct CameraState {
  int camera_id = 0;
  CameraStatus status = CameraStatus::kOccluded;
};

struct TrackerOptions {
  PoseSolverOptions solver;
  /// Estimates older than this many frame periods are excluded.
  int stale_frames = 2;
  double frame_period_ms = 1000.0 / 30.0;
  /// Planned target used for alignment; empty selects the first one.
  std::string active_target;
  /// Multi-camera refinement of the fused body poses.
  bool joint_refinement = true;
};

/// Detections for one frame, plus any cached detections that are still
/// within the stale window for cameras that missed this frame.
struct FrameInput {
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  std::vector<TagDetection> detections;
  std::vector<CameraState> cameras;
};

struct FrameResult {
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  std::vector<PoseEstimate> estimates;
  std::optional<HeadPose> head;
  std::optional<CoilPose> coil;
  std::optional<TargetEstimate> target;
  std::vector<CameraState> cameras;
  /// Error names for this frame, e.g. "NoHeadTags" or "BadCorners cam 1 tag 2".
  std::vector<std::string> errors;
  double latency_ms = 0.0;
};

/// Solves every detection, fuses head and coil, and casts the target.
/// Pipeline errors are reported in FrameResult::errors, never thrown.
FrameResult process_frame(const FrameInput& input, const SceneLayout& layout,
                          const TrackerOptions& options);

/// Keeps the most recent detections per camera and classifies cameras as
/// tracked, stale or occluded.
class StaleCache {
 public:
  StaleCache(std::vector<int> camera_ids, TrackerOptions options);

  FrameInput prepare(std::int64_t frame_id, double timestamp_ms,
                     std::vector<TagDetection> detections);
  void set_options(const TrackerOptions& options) { options_ = options; }

 private:
  std::vector<int> camera_ids_;
  TrackerOptions options_;
  std::map<int, std::vector<TagDetection>> last_;
};

/// Sequential tracker for offline replay: StaleCache + process_frame().
class Tracker {
 public:
  Tracker(SceneLayout layout, TrackerOptions options = {});

  FrameResult process(std::int64_t frame_id, double timestamp_ms,
                      std::vector<TagDetection> detections);
  const SceneLayout& layout() const { return layout_; }
  const TrackerOptions& options() const { return options_; }
  void set_options(const TrackerOptions& options);

 private:
  SceneLayout layout_;
  TrackerOptions options_;
  StaleCache cache_;
};

struct DetectionGroup {
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  /// Sorted by (camera_id, tag_id).
  std::vector<TagDetection> detections;
};

/// Groups a detection stream by frame_id. A frame stays open until a
/// record more than `window_frames` frames newer arrives; records arriving
/// after that point are dropped and counted.
class FrameAssembler {
 public:
  explicit FrameAssembler(int window_frames = 1) : window_(window_frames) {}

  /// Returns the frames closed by this record, in frame_id order.
  std::vector<DetectionGroup> push(const TagDetection& det);
  /// Emits every open frame.
  std::vector<DetectionGroup> flush();

  std::int64_t dropped() const { return dropped_; }

 private:
  std::vector<DetectionGroup> close_through(std::int64_t frame_id);

  int window_;
  std::map<std::int64_t, std::vector<TagDetection>> open_;
  std::optional<std::int64_t> last_emitted_;
  std::optional<std::int64_t> newest_;
  std::int64_t dropped_ = 0;
};

}  // namespace navtrace
