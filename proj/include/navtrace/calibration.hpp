#pragma once
/**
 * @file calibration.hpp
 * @brief Planar checkerboard intrinsic calibration.
 *
 * Per-view homographies give a closed-form zero-skew K; a linear radial
 * fit seeds k1, k2; then all intrinsics, distortion and board poses are
 * refined jointly by damped least squares. The normal equations are
 * reduced over the per-view pose blocks (Schur complement), so the cost
 * of one iteration grows linearly with the number of views.
 */

#include "navtrace/geometry.hpp"

#include <vector>

namespace navtrace {

struct BoardSpec {
  int rows = 6;
  int cols = 9;
  double square_mm = 25.0;

  /// Inner-corner coordinates in the board frame (z = 0), row-major:
  /// index r * cols + c sits at (c * square, r * square, 0).
  std::vector<Vec3> points() const;
};

struct CheckerboardObservation {
  int view_id = 0;
  BoardSpec board;
  std::vector<Pixel> corners;
};

struct CalibrationOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-10;
  /// View sets whose board normals all lie within this angle are rejected.
  double min_normal_spread_deg = 5.0;
  bool estimate_k3 = true;
  bool estimate_tangential = true;
};

struct CalibrationReport {
  /// Intrinsics and distortion; extrinsic left at identity.
  CameraModel camera;
  /// board frame -> camera frame, one per observation, same order.
  std::vector<RigidTransform> board_poses;
  double mean_error_px = 0.0;
  std::vector<double> per_view_error_px;
  /// Total squared reprojection error before and after refinement.
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};

/// Throws Error(kTooFewViews), Error(kDegenerateViews),
/// Error(kDivergedRefinement) or Error(kInvalidArgument) for malformed
/// observations.
CalibrationReport calibrate(const std::vector<CheckerboardObservation>& observations,
                            int image_width, int image_height,
                            const CalibrationOptions& options = {});

/// Mean corner distance (px) per view for the given camera and board poses.
std::vector<double> reprojection_report(const CameraModel& cam,
                                        const std::vector<CheckerboardObservation>& observations,
                                        const std::vector<RigidTransform>& board_poses);

}  // namespace navtrace
