#pragma once
/**
 * @file wire.hpp
 * @brief Telemetry and control messages exchanged with stream clients.
 *
 * Every message is one JSON object. On the raw TCP endpoint each message is
 * followed by '\n'; on the WebSocket endpoint each message is one text
 * frame. The payload bytes are identical on both.
 *
 * Frame message (server -> client), keys in this order:
 *   type            "frame"
 *   frame_id        strictly increasing per session
 *   timestamp_ms    capture time of the frame
 *   head_pose       {"translation_mm": [x,y,z], "rotation_wxyz": [w,x,y,z]}
 *                   head -> world, or null when the head is lost
 *   coil_pose       coil -> world, same encoding, or null
 *   target_point_mm stimulation point in the head frame, or null
 *   target_name     planned target the alignment refers to
 *   alignment       {"lateral_mm", "gap_mm", "tilt_deg"} or null
 *   sigma_fused_mm  fused distance sigma of the target chain, or null
 *   camera_status   [{"camera_id": 0, "status": "tracked|stale|occluded"}]
 *   latency_ms      ingest-to-publish time of this frame
 *   errors          pipeline error names for this frame
 *
 * Control messages (client -> server):
 *   {"type": "select_target", "name": "T03"}
 *   {"type": "coil_delta", "translation_mm": [x,y,z], "rotation_deg": [x,y,z]}
 *       rotation is a rotation vector in degrees, applied in the coil frame;
 *       |translation| <= 50 mm and |rotation| <= 30 deg
 *   {"type": "pause"} / {"type": "resume"}
 *   {"type": "set_fusion", "use_fy_correction": bool, "stale_frames": n}
 * Replies: {"type": "ack", "request": "<type>"} or
 *          {"type": "error", "reason": "<text>"}.
 */

#include "navtrace/pipeline.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace navtrace {

/// Pose as carried on the wire; kept verbatim so decode/encode round-trips
/// byte for byte.
struct WirePose {
  std::array<double, 3> translation_mm{};
  std::array<double, 4> rotation_wxyz{1.0, 0.0, 0.0, 0.0};

  static WirePose from(const RigidTransform& t);
  RigidTransform transform() const;
};

struct WireCamera {
  int camera_id = 0;
  std::string status;
};

struct FrameMessage {
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  std::optional<WirePose> head_pose;
  std::optional<WirePose> coil_pose;
  std::optional<std::array<double, 3>> target_point_mm;
  std::string target_name;
  std::optional<AlignmentError> alignment;
  std::optional<double> sigma_fused_mm;
  std::vector<WireCamera> camera_status;
  double latency_ms = 0.0;
  std::vector<std::string> errors;
};

FrameMessage to_message(const FrameResult& result);

/// One line, no trailing newline.
std::string encode_frame(const FrameMessage& msg);

/// Throws Error(kParseError), including for quaternions more than 1e-6 away
/// from unit norm.
FrameMessage decode_frame(std::string_view text);

inline constexpr double kMaxDeltaMm = 50.0;
inline constexpr double kMaxDeltaDeg = 30.0;

struct ControlMessage {
  enum class Kind { kSelectTarget, kCoilDelta, kPause, kResume, kSetFusion };
  Kind kind = Kind::kPause;
  std::string target;
  Vec3 translation_mm = Vec3::Zero();
  Vec3 rotation_deg = Vec3::Zero();
  std::optional<bool> use_fy_correction;
  std::optional<int> stale_frames;
};

std::string_view to_string(ControlMessage::Kind kind);

/// Throws Error(kParseError) for malformed input and Error(kInvalidArgument)
/// for out-of-bounds deltas.
ControlMessage decode_control(std::string_view text);
std::string encode_control(const ControlMessage& msg);

std::string encode_ack(ControlMessage::Kind kind);
std::string encode_error(std::string_view reason);

}  // namespace navtrace
