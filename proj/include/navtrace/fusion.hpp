#pragma once
/**
 * @file fusion.hpp
 * @brief Inverse-variance fusion of per-camera estimates.
 *
 * Scalar distances are fused with the classic weighted mean
 *   d = sum(d_j / s_j^2) / sum(1 / s_j^2),  s = sqrt(1 / sum(1 / s_j^2)).
 * Full poses extend the same weighting per translation axis, and fuse
 * rotations with a weighted chordal (eigenvector) quaternion mean.
 */

#include "navtrace/geometry.hpp"
#include "navtrace/pose.hpp"

#include <span>
#include <vector>

namespace navtrace {

struct DistanceEstimate {
  int camera_id = 0;
  double distance_mm = 0.0;
  double sigma_mm = 0.0;
};

struct CameraWeight {
  int camera_id = 0;
  double weight = 0.0;  // normalized, sums to 1 over the fused set
};

struct FusedScalar {
  double distance_mm = 0.0;
  double sigma_mm = 0.0;
  std::vector<CameraWeight> weights;
};

/// Throws Error(kEmptyInput) or Error(kNonPositiveSigma).
FusedScalar fuse_distances(std::span<const DistanceEstimate> estimates);

/// One world-frame hypothesis for a tracked frame (tag, head or coil).
struct PoseHypothesis {
  int camera_id = 0;
  int tag_id = 0;
  /// tracked frame -> world
  RigidTransform pose;
  /// Per-axis translation sigma along the world axes (mm).
  Vec3 sigma_t = Vec3::Zero();
  double sigma_distance = 0.0;
};

struct FusedPose {
  RigidTransform pose;
  Vec3 sigma_t = Vec3::Zero();
  /// Inverse-variance combination of the hypotheses' sigma_distance (mm).
  double sigma_fused = 0.0;
  /// Weighted mean geodesic distance of the inputs to the fused rotation.
  double rotation_dispersion_deg = 0.0;
  int camera_count = 0;
  std::vector<int> camera_ids;
};

/// Sigmas below this floor (mm) are clamped before weighting, so
/// zero-residual estimates still produce finite weights.
inline constexpr double kSigmaFloorMm = 1e-9;

/// Weighted chordal mean: the principal eigenvector of sum w_i q_i q_i^T.
/// Insensitive to the sign of each input quaternion.
Eigen::Quaterniond chordal_mean(std::span<const Eigen::Quaterniond> quaternions,
                                std::span<const double> weights);

/// Expresses a camera-frame tag estimate in the world frame. The diagonal
/// camera-frame covariance is rotated and its diagonal kept.
PoseHypothesis to_world(const PoseEstimate& estimate, const CameraModel& camera);

/// Throws Error(kNoEstimates) for an empty set.
FusedPose fuse_hypotheses(std::span<const PoseHypothesis> hypotheses);

/// All estimates must refer to the same tag and frame, and every camera_id
/// must be present in `cameras`; otherwise Error(kFrameMismatch).
FusedPose fuse_poses(std::span<const PoseEstimate> estimates,
                     std::span<const CameraModel> cameras);

}  // namespace navtrace
