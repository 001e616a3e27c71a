#include "navtrace/wire.hpp"

#include "navtrace/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace navtrace {

namespace {

using Json = nlohmann::ordered_json;

template <std::size_t N>
std::array<double, N> to_array(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw Error(ErrorCode::kParseError, std::string(what) + " has the wrong length");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j.at(i).get<double>();
  return out;
}

Json encode_pose(const std::optional<WirePose>& p) {
  if (!p) return nullptr;
  return Json{{"translation_mm", p->translation_mm}, {"rotation_wxyz", p->rotation_wxyz}};
}

std::optional<WirePose> decode_pose(const Json& j) {
  if (j.is_null()) return std::nullopt;
  WirePose p;
  p.translation_mm = to_array<3>(j.at("translation_mm"), "translation_mm");
  p.rotation_wxyz = to_array<4>(j.at("rotation_wxyz"), "rotation_wxyz");
  double n2 = 0.0;
  for (const double v : p.rotation_wxyz) n2 += v * v;
  if (!(std::abs(std::sqrt(n2) - 1.0) <= 1e-6)) {
    throw Error(ErrorCode::kParseError, "rotation quaternion is not unit length");
  }
  return p;
}

Json parse_object(std::string_view text) {
  Json j = Json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kParseError, "message is not a JSON object");
  }
  return j;
}

template <typename F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

}  // namespace

WirePose WirePose::from(const RigidTransform& t) {
  const Eigen::Quaterniond q = t.rotation.quaternion();
  return {{t.translation.x(), t.translation.y(), t.translation.z()}, {q.w(), q.x(), q.y(), q.z()}};
}

RigidTransform WirePose::transform() const {
  return {Rotation::from_quaternion(rotation_wxyz[0], rotation_wxyz[1], rotation_wxyz[2],
                                    rotation_wxyz[3]),
          Vec3(translation_mm[0], translation_mm[1], translation_mm[2])};
}

FrameMessage to_message(const FrameResult& result) {
  FrameMessage m;
  m.frame_id = result.frame_id;
  m.timestamp_ms = result.timestamp_ms;
  if (result.head) m.head_pose = WirePose::from(result.head->pose);
  if (result.coil) m.coil_pose = WirePose::from(result.coil->pose);
  if (result.target) {
    const Vec3& p = result.target->point;
    m.target_point_mm = std::array<double, 3>{p.x(), p.y(), p.z()};
    m.target_name = result.target->target_name;
    m.alignment = result.target->alignment;
    m.sigma_fused_mm = result.target->sigma_fused;
  } else if (result.coil) {
    m.sigma_fused_mm = result.coil->sigma_fused;
  }
  for (const auto& c : result.cameras) {
    m.camera_status.push_back({c.camera_id, std::string(to_string(c.status))});
  }
  m.latency_ms = result.latency_ms;
  m.errors = result.errors;
  return m;
}

std::string encode_frame(const FrameMessage& msg) {
  Json cams = Json::array();
  for (const auto& c : msg.camera_status) {
    cams.push_back(Json{{"camera_id", c.camera_id}, {"status", c.status}});
  }
  Json alignment = nullptr;
  if (msg.alignment) {
    alignment = Json{{"lateral_mm", msg.alignment->lateral_mm},
                     {"gap_mm", msg.alignment->gap_mm},
                     {"tilt_deg", msg.alignment->tilt_deg}};
  }
  const Json j{{"type", "frame"},
               {"frame_id", msg.frame_id},
               {"timestamp_ms", msg.timestamp_ms},
               {"head_pose", encode_pose(msg.head_pose)},
               {"coil_pose", encode_pose(msg.coil_pose)},
               {"target_point_mm", msg.target_point_mm ? Json(*msg.target_point_mm) : Json(nullptr)},
               {"target_name", msg.target_name},
               {"alignment", alignment},
               {"sigma_fused_mm", msg.sigma_fused_mm ? Json(*msg.sigma_fused_mm) : Json(nullptr)},
               {"camera_status", cams},
               {"latency_ms", msg.latency_ms},
               {"errors", msg.errors}};
  return j.dump();
}

FrameMessage decode_frame(std::string_view text) {
  return guarded([&] {
    const Json j = parse_object(text);
    if (j.value("type", "") != "frame") throw Error(ErrorCode::kParseError, "not a frame message");
    FrameMessage m;
    m.frame_id = j.at("frame_id").get<std::int64_t>();
    m.timestamp_ms = j.at("timestamp_ms").get<double>();
    m.head_pose = decode_pose(j.at("head_pose"));
    m.coil_pose = decode_pose(j.at("coil_pose"));
    if (!j.at("target_point_mm").is_null()) {
      m.target_point_mm = to_array<3>(j.at("target_point_mm"), "target_point_mm");
    }
    m.target_name = j.at("target_name").get<std::string>();
    if (!j.at("alignment").is_null()) {
      const Json& a = j.at("alignment");
      m.alignment = AlignmentError{a.at("lateral_mm").get<double>(), a.at("gap_mm").get<double>(),
                                   a.at("tilt_deg").get<double>()};
    }
    if (!j.at("sigma_fused_mm").is_null()) m.sigma_fused_mm = j.at("sigma_fused_mm").get<double>();
    for (const auto& c : j.at("camera_status")) {
      m.camera_status.push_back({c.at("camera_id").get<int>(), c.at("status").get<std::string>()});
    }
    m.latency_ms = j.at("latency_ms").get<double>();
    m.errors = j.at("errors").get<std::vector<std::string>>();
    return m;
  });
}

std::string_view to_string(ControlMessage::Kind kind) {
  switch (kind) {
    case ControlMessage::Kind::kSelectTarget: return "select_target";
    case ControlMessage::Kind::kCoilDelta: return "coil_delta";
    case ControlMessage::Kind::kPause: return "pause";
    case ControlMessage::Kind::kResume: return "resume";
    case ControlMessage::Kind::kSetFusion: return "set_fusion";
  }
  return "pause";
}

ControlMessage decode_control(std::string_view text) {
  return guarded([&] {
    const Json j = parse_object(text);
    const std::string type = j.at("type").get<std::string>();
    ControlMessage m;
    if (type == "select_target") {
      m.kind = ControlMessage::Kind::kSelectTarget;
      m.target = j.at("name").get<std::string>();
    } else if (type == "coil_delta") {
      m.kind = ControlMessage::Kind::kCoilDelta;
      const auto t = to_array<3>(j.value("translation_mm", Json::array({0.0, 0.0, 0.0})),
                                 "translation_mm");
      const auto r = to_array<3>(j.value("rotation_deg", Json::array({0.0, 0.0, 0.0})),
                                 "rotation_deg");
      m.translation_mm = Vec3(t[0], t[1], t[2]);
      m.rotation_deg = Vec3(r[0], r[1], r[2]);
      if (!m.translation_mm.allFinite() || !m.rotation_deg.allFinite()) {
        throw Error(ErrorCode::kParseError, "coil_delta must be finite");
      }
      if (m.translation_mm.norm() > kMaxDeltaMm) {
        throw Error(ErrorCode::kInvalidArgument, "translation delta exceeds 50 mm");
      }
      if (m.rotation_deg.norm() > kMaxDeltaDeg) {
        throw Error(ErrorCode::kInvalidArgument, "rotation delta exceeds 30 deg");
      }
    } else if (type == "pause") {
      m.kind = ControlMessage::Kind::kPause;
    } else if (type == "resume") {
      m.kind = ControlMessage::Kind::kResume;
    } else if (type == "set_fusion") {
      m.kind = ControlMessage::Kind::kSetFusion;
      if (j.contains("use_fy_correction")) m.use_fy_correction = j.at("use_fy_correction").get<bool>();
      if (j.contains("stale_frames")) {
        m.stale_frames = j.at("stale_frames").get<int>();
        if (*m.stale_frames < 0) throw Error(ErrorCode::kInvalidArgument, "stale_frames must be >= 0");
      }
    } else {
      throw Error(ErrorCode::kParseError, "unknown control type '" + type + "'");
    }
    return m;
  });
}

std::string encode_control(const ControlMessage& msg) {
  Json j{{"type", std::string(to_string(msg.kind))}};
  switch (msg.kind) {
    case ControlMessage::Kind::kSelectTarget:
      j["name"] = msg.target;
      break;
    case ControlMessage::Kind::kCoilDelta:
      j["translation_mm"] = {msg.translation_mm.x(), msg.translation_mm.y(), msg.translation_mm.z()};
      j["rotation_deg"] = {msg.rotation_deg.x(), msg.rotation_deg.y(), msg.rotation_deg.z()};
      break;
    case ControlMessage::Kind::kSetFusion:
      if (msg.use_fy_correction) j["use_fy_correction"] = *msg.use_fy_correction;
      if (msg.stale_frames) j["stale_frames"] = *msg.stale_frames;
      break;
    default:
      break;
  }
  return j.dump();
}

std::string encode_ack(ControlMessage::Kind kind) {
  return Json{{"type", "ack"}, {"request", std::string(to_string(kind))}}.dump();
}

std::string encode_error(std::string_view reason) {
  return Json{{"type", "error"}, {"reason", std::string(reason)}}.dump();
}

}  // namespace navtrace
