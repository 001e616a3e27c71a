#pragma once
/**
 * @file uncertainty.hpp
 * @brief Reprojection error to translation uncertainty, and the first-order
 *        standard deviation of the camera-to-tag distance.
 */

#include "navtrace/geometry.hpp"

namespace navtrace {

struct UncertaintyOptions {
  /// Off: sigma_ty uses f_x and sigma_tz uses sqrt(f_x^2 + f_x^2).
  /// On: sigma_ty uses f_y and sigma_tz uses sqrt(f_x^2 + f_y^2).
  bool use_fy_correction = false;
};

/// Per-axis translation standard deviation (mm) in the camera frame.
/// Requires e_proj >= 0 and t.z() > 0.
Vec3 propagate_uncertainty(double e_proj, const Vec3& t, const CameraModel& cam,
                           const UncertaintyOptions& options = {});

struct DistanceSigma {
  double distance = 0.0;  // mm, |t|
  double sigma = 0.0;     // mm
};

/// d = |t|, sigma_d = sqrt(sum_i (t_i / d * sigma_i)^2).
/// Throws Error(kZeroDistance) for t = 0.
DistanceSigma distance_sigma(const Vec3& t, const Vec3& sigma);

}  // namespace navtrace
