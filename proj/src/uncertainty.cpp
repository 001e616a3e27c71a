#include "navtrace/uncertainty.hpp"

#include "navtrace/error.hpp"

#include <cmath>

namespace navtrace {

Vec3 propagate_uncertainty(double e_proj, const Vec3& t, const CameraModel& cam,
                           const UncertaintyOptions& options) {
  if (!(e_proj >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "reprojection error must be non-negative");
  }
  if (!(t.z() > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "translation depth must be positive");
  }
  const double fx = cam.fx;
  const double fy = options.use_fy_correction ? cam.fy : cam.fx;
  return {e_proj * t.z() / fx, e_proj * t.z() / fy,
          e_proj * t.z() / std::sqrt(fx * fx + fy * fy)};
}

DistanceSigma distance_sigma(const Vec3& t, const Vec3& sigma) {
  const double d = t.norm();
  if (!(d > 0.0)) throw Error(ErrorCode::kZeroDistance, "distance is zero");
  const Vec3 terms = (t / d).cwiseProduct(sigma);
  return {d, terms.norm()};
}

}  // namespace navtrace
