#pragma once
/**
 * @file frames.hpp
 * @brief Scene layout and the camera -> world -> head -> coil frame chain.
 *
 * Frame conventions:
 *  - world: right-handed, y up. The default layout puts the resting head
 *    center at the origin facing +z.
 *  - camera: x right, y down, z along the optical axis.
 *  - tag: see TagSpec; +z leaves the printed face.
 *  - head: rigidly attached to the skull; the head model lives here.
 *  - coil: origin at the coil center, -z points out of the coil face into
 *    the head. The coil tag sits at the origin facing +z.
 */

#include "navtrace/fusion.hpp"
#include "navtrace/geometry.hpp"
#include "navtrace/pose.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace navtrace {

struct TagMount {
  int tag_id = 0;
  double side_mm = 24.0;
  /// tag frame -> body (head or coil) frame
  RigidTransform tag_to_body;

  TagSpec spec() const { return {tag_id, side_mm}; }
};

using Triangle = std::array<Vec3, 3>;

struct HeadModel {
  enum class Kind { kSphere, kMesh };
  Kind kind = Kind::kSphere;
  double radius_mm = 85.0;
  Vec3 center = Vec3::Zero();
  /// Head-frame triangles, outward normals by counter-clockwise winding.
  std::vector<Triangle> triangles;
  /// Source file of a mesh model, kept for serialization.
  std::string mesh_path;
};

struct PlannedTarget {
  std::string name;
  /// head frame, mm
  Vec3 point = Vec3::Zero();
};

struct SceneLayout {
  std::vector<CameraModel> cameras;
  std::vector<TagMount> head_tags;
  TagMount coil_tag;
  HeadModel head;
  std::vector<PlannedTarget> targets;
  /// Shift of the coil ray origin along the coil -z axis (mm).
  double coil_offset_mm = 0.0;

  /// Throws Error(kInvalidArgument) on duplicate tag ids, coincident head
  /// tags, missing cameras or invalid intrinsics.
  void validate() const;
  /// Throws Error(kFrameMismatch) for an unknown id.
  const CameraModel& camera(int camera_id) const;
  const TagMount* find_head_tag(int tag_id) const;
  const PlannedTarget* find_target(const std::string& name) const;
};

/// Three 1920x1280 cameras with a 65 degree horizontal field of view on a
/// 700 mm ring (front and +-60 degrees azimuth, 400 mm above the head
/// center), four 24 mm head tags (both cheekbones, forehead, back of the
/// head), one coil tag and 15 planned targets on an 85 mm sphere.
SceneLayout default_layout();

/// A mount whose tag origin sits on the sphere at (azimuth, elevation) and
/// whose face normal points along (normal_azimuth, normal_elevation).
/// Azimuth is measured from +z towards +x, elevation towards +y.
TagMount sphere_mount(int tag_id, double radius_mm, double azimuth_deg, double elevation_deg,
                      double normal_azimuth_deg, double normal_elevation_deg);

/// Camera -> world transform for a camera at `position` looking at `target`
/// with world +y as up.
RigidTransform look_at(const Vec3& position, const Vec3& target);

/// A fused body pose (head -> world or coil -> world).
struct BodyPose {
  RigidTransform pose;
  Vec3 sigma_t = Vec3::Zero();
  double sigma_fused = 0.0;
  double rotation_dispersion_deg = 0.0;
  int tag_count = 0;
  int camera_count = 0;
  std::vector<int> tag_ids;
  /// Fewer tags than registered contributed.
  bool reduced_confidence = false;
};

using HeadPose = BodyPose;
using CoilPose = BodyPose;

/// Sigma multiplier applied when a multi-tag body is seen through a single
/// tag, where lever-arm errors of the registry are not averaged out.
inline constexpr double kSingleTagInflation = 2.0;

/// Per-tag estimates are mapped through the registry and fused with
/// fuse_hypotheses(). When the raw detections are passed too, the fused pose
/// seeds a damped least-squares refinement of the summed corner residuals
/// over every camera and tag of the body; the reported sigmas stay those
/// of the inverse-variance fusion. Estimates and detections of tags outside
/// the body are ignored. Throws Error(kNoHeadTags).
HeadPose solve_head_pose(std::span<const PoseEstimate> estimates, const SceneLayout& layout,
                         std::span<const TagDetection> detections = {});

/// As solve_head_pose() for the coil tag. Throws Error(kNoCoilTag).
CoilPose solve_coil_pose(std::span<const PoseEstimate> estimates, const SceneLayout& layout,
                         std::span<const TagDetection> detections = {});

/// Sum of squared corner residuals of a body pose over `detections`.
/// Detections of tags not in `mounts` are skipped.
double body_cost(const SceneLayout& layout, std::span<const TagMount> mounts,
                 std::span<const TagDetection> detections, const RigidTransform& body_to_world);

/// Analytic gradient of body_cost() for the perturb_pose() increment.
Eigen::Matrix<double, 6, 1> body_cost_gradient(const SceneLayout& layout,
                                               std::span<const TagMount> mounts,
                                               std::span<const TagDetection> detections,
                                               const RigidTransform& body_to_world);

/// Multi-camera refinement used by the body solvers; returns `init` when
/// no detection belongs to the body.
RigidTransform refine_body_pose(const SceneLayout& layout, std::span<const TagMount> mounts,
                                std::span<const TagDetection> detections,
                                const RigidTransform& init);

struct AlignmentError {
  /// Offset of the stimulation point from the planned target, tangential
  /// to the surface at the target.
  double lateral_mm = 0.0;
  /// Distance of the coil ray origin from the target along the surface
  /// normal at the target.
  double gap_mm = 0.0;
  /// Angle between the coil ray and the inward surface normal.
  double tilt_deg = 0.0;
};

struct TargetEstimate {
  /// Stimulation point, head frame (mm).
  Vec3 point = Vec3::Zero();
  /// coil -> head
  RigidTransform coil_in_head;
  AlignmentError alignment;
  std::string target_name;
  double sigma_fused = 0.0;
};

/// First intersection of a ray with the head model, or nullopt.
std::optional<Vec3> intersect_head(const HeadModel& head, const Vec3& origin, const Vec3& dir);

/// Outward unit normal of the head model near `p`.
Vec3 head_normal(const HeadModel& head, const Vec3& p);

/// Casts the coil -z ray onto the head model. Alignment is measured against
/// `target_name`, or the first planned target when empty. Throws
/// Error(kMissingPose) or Error(kNoIntersection).
TargetEstimate estimate_target(const std::optional<HeadPose>& head,
                               const std::optional<CoilPose>& coil, const SceneLayout& layout,
                               const std::string& target_name = {});

/// Stimulation point for exact poses, used by the simulator ground truth.
std::optional<Vec3> stimulation_point(const RigidTransform& head_to_world,
                                      const RigidTransform& coil_to_world,
                                      const SceneLayout& layout);

/// Coil -> head pose that hovers `standoff_mm` above `point` on the head
/// model with the coil axis along the surface normal.
RigidTransform coil_over(const SceneLayout& layout, const Vec3& point, double standoff_mm);

}  // namespace navtrace
