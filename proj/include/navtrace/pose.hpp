#pragma once
/**
 * @file pose.hpp
 * @brief Single-camera square-tag pose: planar initialization, damped
 *        least-squares refinement and reprojection statistics.
 */

#include "navtrace/geometry.hpp"
#include "navtrace/uncertainty.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace navtrace {

/// Square tag centered at the origin of its own frame, lying in z = 0 with
/// +z pointing out of the printed face. Corner order is counter-clockwise
/// seen from +z, starting at (-s/2, -s/2):
///   0: (-s/2, -s/2)  1: (+s/2, -s/2)  2: (+s/2, +s/2)  3: (-s/2, +s/2)
struct TagSpec {
  int tag_id = 0;
  double side_mm = 24.0;

  std::array<Vec3, 4> corners() const;
};

struct TagDetection {
  int camera_id = 0;
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  int tag_id = 0;
  std::array<Pixel, 4> corners{};
  double confidence = 1.0;
};

struct PoseEstimate {
  int camera_id = 0;
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  int tag_id = 0;
  /// tag frame -> camera frame
  RigidTransform pose;
  double e_proj = 0.0;
  Vec3 sigma_t = Vec3::Zero();
  double distance = 0.0;
  double sigma_distance = 0.0;
  /// Set when the second planar minimum is within the ambiguity ratio; the
  /// competing solution is kept in `alternate`.
  bool ambiguous = false;
  std::optional<RigidTransform> alternate;
  double alternate_e_proj = 0.0;
  int iterations = 0;
};

struct PoseSolverOptions {
  UncertaintyOptions uncertainty;
  int max_iterations = 50;
  double relative_tolerance = 1e-12;
  double ambiguity_ratio = 1.5;
};

/// Throws Error(kBadCorners) unless the quad is strictly convex and wound the
/// way a front-facing tag projects (negative shoelace area in pixel space).
void check_corners(const TagDetection& det);

PoseEstimate solve_tag_pose(const CameraModel& cam, const TagSpec& spec,
                            const TagDetection& det,
                            const PoseSolverOptions& options = {});

/// Mean Euclidean corner distance between detection and projection (px).
double reprojection_error(const CameraModel& cam, const TagSpec& spec,
                          const TagDetection& det, const RigidTransform& pose);

/// Sum of squared pixel residuals over the four corners.
double pose_cost(const CameraModel& cam, const TagSpec& spec,
                 const TagDetection& det, const RigidTransform& pose);

/// Analytic gradient of pose_cost() with respect to the local increment
/// (rotation vector applied on the left, then translation in mm).
Eigen::Matrix<double, 6, 1> pose_cost_gradient(const CameraModel& cam,
                                               const TagSpec& spec,
                                               const TagDetection& det,
                                               const RigidTransform& pose);

/// Applies the local increment used by the solver and pose_cost_gradient().
RigidTransform perturb_pose(const RigidTransform& pose,
                            const Eigen::Matrix<double, 6, 1>& delta);

/// Both planar-pose hypotheses from the homography of the undistorted
/// corners, before refinement.
std::array<RigidTransform, 2> planar_pose_candidates(const CameraModel& cam,
                                                     const TagSpec& spec,
                                                     const TagDetection& det);

/// Projects the tag corners of `pose` into `cam` (no noise); used by the
/// simulator and the tests.
std::array<Pixel, 4> project_tag(const CameraModel& cam, const TagSpec& spec,
                                 const RigidTransform& pose);

}  // namespace navtrace
