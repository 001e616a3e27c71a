#pragma once
/**
 * @file io.hpp
 * @brief JSON and JSON-lines encodings of every on-disk record.
 *
 * Units: millimeters, pixels, milliseconds. Quaternions are written
 * [w, x, y, z]. A rigid transform is
 *   {"translation_mm": [x, y, z], "rotation_wxyz": [w, x, y, z]}
 * and always maps child-frame coordinates into the parent frame.
 *
 * Detection stream, one object per line, fields in this order:
 *   {"camera_id": 0, "frame_id": 12, "timestamp_ms": 400.0, "tag_id": 4,
 *    "corners": [[u0, v0], [u1, v1], [u2, v2], [u3, v3]], "confidence": 1.0}
 * Corner order follows TagSpec.
 */

#include "navtrace/calibration.hpp"
#include "navtrace/frames.hpp"
#include "navtrace/pose.hpp"
#include "navtrace/sim.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace navtrace::io {

using Json = nlohmann::ordered_json;

Json encode(const RigidTransform& t);
RigidTransform decode_transform(const Json& j);

Json encode(const CameraModel& cam);
CameraModel decode_camera(const Json& j);

Json encode(const TagDetection& det);
TagDetection decode_detection(const Json& j);

Json encode(const GroundTruthFrame& frame);
GroundTruthFrame decode_truth(const Json& j);

Json encode(const CheckerboardObservation& obs);
CheckerboardObservation decode_observation(const Json& j);

Json encode(const CalibrationReport& report);

/// Mesh models are written by path, relative paths resolve against
/// `base_dir`.
Json encode(const SceneLayout& layout);
SceneLayout decode_layout(const Json& j, const std::filesystem::path& base_dir = {});

/// Keys: layout (object or file path), sigma_px, motion {...}, occlusions
/// [{camera_id, tag_id, first_frame, last_frame}], frame_rate_hz, frames,
/// seed, max_view_angle_deg, segment, head_rest (head -> world), and either
/// coil_rest (coil -> head) or coil_target (planned target name) with
/// coil_standoff_mm.
/// Every key is optional.
SimConfig decode_sim_config(const Json& j, const std::filesystem::path& base_dir = {});

/// Single-line encodings; parse_* throw Error(kParseError).
std::string format_detection(const TagDetection& det);
TagDetection parse_detection(const std::string& line);

struct DetectionFile {
  std::vector<TagDetection> detections;
  /// Lines that failed to parse; they are skipped.
  std::size_t malformed = 0;
};

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

DetectionFile read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const std::vector<TagDetection>& dets);

std::vector<GroundTruthFrame> read_truth(const std::filesystem::path& path);
void write_truth(const std::filesystem::path& path, const std::vector<GroundTruthFrame>& frames);

/// One observation per line.
std::vector<CheckerboardObservation> read_observations(const std::filesystem::path& path);
void write_observations(const std::filesystem::path& path,
                        const std::vector<CheckerboardObservation>& observations);

/// Accepts a bare camera object or a calibration report with a "camera" key.
CameraModel read_camera(const std::filesystem::path& path);

SceneLayout read_layout(const std::filesystem::path& path);

/// Wavefront OBJ subset: "v x y z" and "f a b c" lines (1-based, polygons
/// are fanned, "a/b/c" index forms accepted); everything else is ignored.
std::vector<Triangle> read_mesh_obj(const std::filesystem::path& path);

}  // namespace navtrace::io
