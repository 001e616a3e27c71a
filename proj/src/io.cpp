#include "navtrace/io.hpp"

#include "navtrace/error.hpp"

#include <fstream>
#include <sstream>

namespace navtrace::io {

namespace {

Json vec(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 to_vec3(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kParseError, "expected [x, y, z]");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

Json pixel(const Pixel& p) { return Json::array({p.u, p.v}); }

Pixel to_pixel(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::kParseError, "expected [u, v]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

std::array<Pixel, 4> to_corners(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::kParseError, "expected 4 corners");
  std::array<Pixel, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = to_pixel(j.at(i));
  return out;
}

Json corners(const std::array<Pixel, 4>& c) {
  Json out = Json::array();
  for (const auto& p : c) out.push_back(pixel(p));
  return out;
}

// Runs a decoder, turning library exceptions into ParseError.
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

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kParseError, "cannot write " + path.string());
  return out;
}

template <typename T, typename Decode>
std::vector<T> read_lines(const std::filesystem::path& path, Decode decode) {
  std::ifstream in = open_in(path);
  std::vector<T> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(guarded([&] { return decode(Json::parse(line)); }));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

Json encode(const RigidTransform& t) {
  const Eigen::Quaterniond q = t.rotation.quaternion();
  return Json{{"translation_mm", vec(t.translation)},
              {"rotation_wxyz", Json::array({q.w(), q.x(), q.y(), q.z()})}};
}

RigidTransform decode_transform(const Json& j) {
  return guarded([&] {
    RigidTransform t;
    if (j.contains("translation_mm")) t.translation = to_vec3(j.at("translation_mm"));
    if (j.contains("rotation_wxyz")) {
      const Json& q = j.at("rotation_wxyz");
      if (!q.is_array() || q.size() != 4) {
        throw Error(ErrorCode::kParseError, "expected [w, x, y, z]");
      }
      t.rotation = Rotation::from_quaternion(q.at(0).get<double>(), q.at(1).get<double>(),
                                             q.at(2).get<double>(), q.at(3).get<double>());
    }
    return t;
  });
}

Json encode(const CameraModel& cam) {
  const auto d = cam.distortion.as_array();
  return Json{{"camera_id", cam.camera_id},
              {"fx", cam.fx},
              {"fy", cam.fy},
              {"cx", cam.cx},
              {"cy", cam.cy},
              {"distortion", Json::array({d[0], d[1], d[2], d[3], d[4]})},
              {"image_width", cam.image_width},
              {"image_height", cam.image_height},
              {"extrinsic", encode(cam.extrinsic)}};
}

CameraModel decode_camera(const Json& j) {
  return guarded([&] {
    CameraModel cam;
    cam.camera_id = j.value("camera_id", 0);
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    if (j.contains("distortion")) {
      const Json& d = j.at("distortion");
      if (!d.is_array() || d.size() != 5) {
        throw Error(ErrorCode::kParseError, "distortion needs [k1, k2, p1, p2, k3]");
      }
      cam.distortion = Distortion::from_array({d.at(0).get<double>(), d.at(1).get<double>(),
                                               d.at(2).get<double>(), d.at(3).get<double>(),
                                               d.at(4).get<double>()});
    }
    cam.image_width = j.at("image_width").get<int>();
    cam.image_height = j.at("image_height").get<int>();
    if (j.contains("extrinsic")) cam.extrinsic = decode_transform(j.at("extrinsic"));
    cam.validate();
    return cam;
  });
}

Json encode(const TagDetection& det) {
  return Json{{"camera_id", det.camera_id},     {"frame_id", det.frame_id},
              {"timestamp_ms", det.timestamp_ms}, {"tag_id", det.tag_id},
              {"corners", corners(det.corners)},  {"confidence", det.confidence}};
}

TagDetection decode_detection(const Json& j) {
  return guarded([&] {
    TagDetection det;
    det.camera_id = j.at("camera_id").get<int>();
    det.frame_id = j.at("frame_id").get<std::int64_t>();
    det.timestamp_ms = j.at("timestamp_ms").get<double>();
    det.tag_id = j.at("tag_id").get<int>();
    det.corners = to_corners(j.at("corners"));
    det.confidence = j.value("confidence", 1.0);
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
      throw Error(ErrorCode::kParseError, "confidence must lie in [0, 1]");
    }
    return det;
  });
}

Json encode(const GroundTruthFrame& frame) {
  Json cs = Json::array();
  for (const auto& c : frame.corners) {
    cs.push_back(Json{{"camera_id", c.camera_id}, {"tag_id", c.tag_id}, {"corners", corners(c.corners)}});
  }
  Json j{{"frame_id", frame.frame_id}, {"timestamp_ms", frame.timestamp_ms}};
  if (!frame.segment.empty()) j["segment"] = frame.segment;
  j["head_to_world"] = encode(frame.head_to_world);
  j["coil_to_world"] = encode(frame.coil_to_world);
  j["target_mm"] = frame.target ? vec(*frame.target) : Json(nullptr);
  j["corners"] = cs;
  return j;
}

GroundTruthFrame decode_truth(const Json& j) {
  return guarded([&] {
    GroundTruthFrame f;
    f.frame_id = j.at("frame_id").get<std::int64_t>();
    f.timestamp_ms = j.at("timestamp_ms").get<double>();
    f.segment = j.value("segment", std::string{});
    f.head_to_world = decode_transform(j.at("head_to_world"));
    f.coil_to_world = decode_transform(j.at("coil_to_world"));
    if (j.contains("target_mm") && !j.at("target_mm").is_null()) {
      f.target = to_vec3(j.at("target_mm"));
    }
    if (j.contains("corners")) {
      for (const auto& c : j.at("corners")) {
        f.corners.push_back(
            {c.at("camera_id").get<int>(), c.at("tag_id").get<int>(), to_corners(c.at("corners"))});
      }
    }
    return f;
  });
}

Json encode(const CheckerboardObservation& obs) {
  Json cs = Json::array();
  for (const auto& p : obs.corners) cs.push_back(pixel(p));
  return Json{{"view_id", obs.view_id},
              {"rows", obs.board.rows},
              {"cols", obs.board.cols},
              {"square_mm", obs.board.square_mm},
              {"corners", cs}};
}

CheckerboardObservation decode_observation(const Json& j) {
  return guarded([&] {
    CheckerboardObservation obs;
    obs.view_id = j.at("view_id").get<int>();
    obs.board.rows = j.at("rows").get<int>();
    obs.board.cols = j.at("cols").get<int>();
    obs.board.square_mm = j.at("square_mm").get<double>();
    for (const auto& p : j.at("corners")) obs.corners.push_back(to_pixel(p));
    return obs;
  });
}

Json encode(const CalibrationReport& report) {
  Json poses = Json::array();
  for (const auto& p : report.board_poses) poses.push_back(encode(p));
  return Json{{"camera", encode(report.camera)},
              {"mean_error_px", report.mean_error_px},
              {"per_view_error_px", report.per_view_error_px},
              {"initial_cost", report.initial_cost},
              {"final_cost", report.final_cost},
              {"iterations", report.iterations},
              {"board_poses", poses}};
}

Json encode(const SceneLayout& layout) {
  Json cams = Json::array();
  for (const auto& c : layout.cameras) cams.push_back(encode(c));
  const auto mount = [](const TagMount& m, const char* key) {
    return Json{{"tag_id", m.tag_id}, {"side_mm", m.side_mm}, {key, encode(m.tag_to_body)}};
  };
  Json head_tags = Json::array();
  for (const auto& m : layout.head_tags) head_tags.push_back(mount(m, "tag_to_head"));
  Json model;
  if (layout.head.kind == HeadModel::Kind::kSphere) {
    model = Json{{"type", "sphere"}, {"radius_mm", layout.head.radius_mm},
                 {"center_mm", vec(layout.head.center)}};
  } else {
    model = Json{{"type", "mesh"}, {"path", layout.head.mesh_path}};
  }
  Json targets = Json::array();
  for (const auto& t : layout.targets) targets.push_back(Json{{"name", t.name}, {"point_mm", vec(t.point)}});
  return Json{{"cameras", cams},
              {"head_tags", head_tags},
              {"coil_tag", mount(layout.coil_tag, "tag_to_coil")},
              {"head_model", model},
              {"coil_offset_mm", layout.coil_offset_mm},
              {"targets", targets}};
}

SceneLayout decode_layout(const Json& j, const std::filesystem::path& base_dir) {
  SceneLayout layout = guarded([&] {
    SceneLayout l;
    for (const auto& c : j.at("cameras")) l.cameras.push_back(decode_camera(c));
    for (const auto& m : j.at("head_tags")) {
      TagMount tm;
      tm.tag_id = m.at("tag_id").get<int>();
      tm.side_mm = m.value("side_mm", 24.0);
      tm.tag_to_body = decode_transform(m.at("tag_to_head"));
      l.head_tags.push_back(tm);
    }
    const Json& coil = j.at("coil_tag");
    l.coil_tag.tag_id = coil.at("tag_id").get<int>();
    l.coil_tag.side_mm = coil.value("side_mm", 24.0);
    if (coil.contains("tag_to_coil")) l.coil_tag.tag_to_body = decode_transform(coil.at("tag_to_coil"));
    if (j.contains("head_model")) {
      const Json& m = j.at("head_model");
      const std::string type = m.value("type", "sphere");
      if (type == "sphere") {
        l.head.radius_mm = m.value("radius_mm", 85.0);
        if (m.contains("center_mm")) l.head.center = to_vec3(m.at("center_mm"));
      } else if (type == "mesh") {
        l.head.kind = HeadModel::Kind::kMesh;
        l.head.mesh_path = m.at("path").get<std::string>();
        std::filesystem::path p(l.head.mesh_path);
        if (p.is_relative()) p = base_dir / p;
        l.head.triangles = read_mesh_obj(p);
      } else {
        throw Error(ErrorCode::kParseError, "unknown head model type '" + type + "'");
      }
    }
    l.coil_offset_mm = j.value("coil_offset_mm", 0.0);
    if (j.contains("targets")) {
      for (const auto& t : j.at("targets")) {
        l.targets.push_back({t.at("name").get<std::string>(), to_vec3(t.at("point_mm"))});
      }
    }
    return l;
  });
  layout.validate();
  return layout;
}

SimConfig decode_sim_config(const Json& j, const std::filesystem::path& base_dir) {
  return guarded([&] {
    SimConfig cfg;
    if (j.contains("layout")) {
      const Json& l = j.at("layout");
      if (l.is_string()) {
        std::filesystem::path p(l.get<std::string>());
        if (p.is_relative()) p = base_dir / p;
        cfg.layout = read_layout(p);
      } else {
        cfg.layout = decode_layout(l, base_dir);
      }
    }
    cfg.sigma_px = j.value("sigma_px", cfg.sigma_px);
    if (j.contains("motion")) {
      const Json& m = j.at("motion");
      MotionConfig& mc = cfg.motion;
      mc.sway_amplitude_mm = m.value("sway_amplitude_mm", mc.sway_amplitude_mm);
      mc.sway_amplitude_deg = m.value("sway_amplitude_deg", mc.sway_amplitude_deg);
      mc.sway_frequency_hz = m.value("sway_frequency_hz", mc.sway_frequency_hz);
      mc.tremor_amplitude_mm = m.value("tremor_amplitude_mm", mc.tremor_amplitude_mm);
      mc.tremor_amplitude_deg = m.value("tremor_amplitude_deg", mc.tremor_amplitude_deg);
      mc.tremor_cutoff_hz = m.value("tremor_cutoff_hz", mc.tremor_cutoff_hz);
    }
    if (j.contains("occlusions")) {
      for (const auto& o : j.at("occlusions")) {
        cfg.occlusions.push_back({o.at("camera_id").get<int>(), o.value("tag_id", -1),
                                  o.at("first_frame").get<std::int64_t>(),
                                  o.at("last_frame").get<std::int64_t>()});
      }
    }
    cfg.frame_rate_hz = j.value("frame_rate_hz", cfg.frame_rate_hz);
    cfg.frames = j.value("frames", cfg.frames);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.max_view_angle_deg = j.value("max_view_angle_deg", cfg.max_view_angle_deg);
    cfg.segment = j.value("segment", cfg.segment);
    if (j.contains("head_rest")) cfg.head_rest = decode_transform(j.at("head_rest"));
    if (j.contains("coil_rest")) {
      cfg.coil_rest = decode_transform(j.at("coil_rest"));
    } else if (j.contains("coil_target")) {
      const std::string name = j.at("coil_target").get<std::string>();
      const PlannedTarget* t = cfg.layout.find_target(name);
      if (t == nullptr) throw Error(ErrorCode::kParseError, "unknown coil_target '" + name + "'");
      cfg.coil_rest = coil_over(cfg.layout, t->point, j.value("coil_standoff_mm", 10.0));
    }
    cfg.validate();
    return cfg;
  });
}

std::string format_detection(const TagDetection& det) { return encode(det).dump(); }

TagDetection parse_detection(const std::string& line) {
  return guarded([&] { return decode_detection(Json::parse(line)); });
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return guarded([&] { return Json::parse(in); });
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

DetectionFile read_detections(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  DetectionFile out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.detections.push_back(parse_detection(line));
    } catch (const Error&) {
      ++out.malformed;
    }
  }
  return out;
}

void write_detections(const std::filesystem::path& path, const std::vector<TagDetection>& dets) {
  std::ofstream out = open_out(path);
  for (const auto& d : dets) out << format_detection(d) << '\n';
}

std::vector<GroundTruthFrame> read_truth(const std::filesystem::path& path) {
  return read_lines<GroundTruthFrame>(path, [](const Json& j) { return decode_truth(j); });
}

void write_truth(const std::filesystem::path& path, const std::vector<GroundTruthFrame>& frames) {
  std::ofstream out = open_out(path);
  for (const auto& f : frames) out << encode(f).dump() << '\n';
}

std::vector<CheckerboardObservation> read_observations(const std::filesystem::path& path) {
  return read_lines<CheckerboardObservation>(path,
                                             [](const Json& j) { return decode_observation(j); });
}

void write_observations(const std::filesystem::path& path,
                        const std::vector<CheckerboardObservation>& observations) {
  std::ofstream out = open_out(path);
  for (const auto& o : observations) out << encode(o).dump() << '\n';
}

CameraModel read_camera(const std::filesystem::path& path) {
  const Json j = read_json(path);
  return decode_camera(j.contains("camera") ? j.at("camera") : j);
}

SceneLayout read_layout(const std::filesystem::path& path) {
  return decode_layout(read_json(path), path.parent_path());
}

std::vector<Triangle> read_mesh_obj(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x() >> v.y() >> v.z())) throw Error(ErrorCode::kParseError, "bad vertex: " + line);
      vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        const int resolved = i < 0 ? static_cast<int>(vertices.size()) + i : i - 1;
        if (resolved < 0 || resolved >= static_cast<int>(vertices.size())) {
          throw Error(ErrorCode::kParseError, "face index out of range: " + line);
        }
        idx.push_back(resolved);
      }
      for (std::size_t k = 2; k < idx.size(); ++k) {
        triangles.push_back({vertices[idx[0]], vertices[idx[k - 1]], vertices[idx[k]]});
      }
    }
  }
  return triangles;
}

}  // namespace navtrace::io
