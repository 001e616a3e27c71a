#include "navtrace/pose.hpp"

#include "navtrace/error.hpp"
#include "navtrace/homography.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <string>

namespace navtrace {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Residual8 = Eigen::Matrix<double, 8, 1>;
using Jacobian8x6 = Eigen::Matrix<double, 8, 6>;

struct Linearization {
  Residual8 residual = Residual8::Zero();
  Jacobian8x6 jacobian = Jacobian8x6::Zero();
  bool valid = false;
};

Linearization linearize(const CameraModel& cam, const std::array<Vec3, 4>& model,
                        const TagDetection& det, const RigidTransform& pose,
                        bool with_jacobian) {
  Linearization out;
  const Mat3 r = pose.rotation.matrix();
  for (int i = 0; i < 4; ++i) {
    const Vec3 rotated = r * model[i];
    const Vec3 p = rotated + pose.translation;
    if (!(p.z() > 0.0)) return out;
    Eigen::Matrix<double, 2, 3> dp;
    const Projection proj = project(cam, p, dp);
    out.residual.segment<2>(2 * i) = proj.pixel.vec() - det.corners[i].vec();
    if (with_jacobian) {
      // Left increment: exp(w) R X + t  ->  d/dw = -[R X]x
      out.jacobian.block<2, 3>(2 * i, 0) = -dp * skew(rotated);
      out.jacobian.block<2, 3>(2 * i, 3) = dp;
    }
  }
  out.valid = out.residual.allFinite();
  return out;
}

double cost_of(const CameraModel& cam, const std::array<Vec3, 4>& model,
               const TagDetection& det, const RigidTransform& pose) {
  const Linearization lin = linearize(cam, model, det, pose, false);
  return lin.valid ? lin.residual.squaredNorm() : std::numeric_limits<double>::infinity();
}

struct Refined {
  RigidTransform pose;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

Refined refine(const CameraModel& cam, const std::array<Vec3, 4>& model,
               const TagDetection& det, const RigidTransform& init,
               const PoseSolverOptions& options) {
  Refined best{init, cost_of(cam, model, det, init), 0};
  if (!std::isfinite(best.cost)) return best;

  double lambda = 1e-3;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    best.iterations = iter + 1;
    if (best.cost < 1e-30) break;
    const Linearization lin = linearize(cam, model, det, best.pose, true);
    const Eigen::Matrix<double, 6, 6> h = lin.jacobian.transpose() * lin.jacobian;
    const Vec6 g = lin.jacobian.transpose() * lin.residual;

    bool improved = false;
    bool converged = false;
    while (lambda < 1e16) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() += lambda * (h.diagonal().array() + 1e-12).matrix();
      const Vec6 step = -damped.ldlt().solve(g);
      const RigidTransform candidate = perturb_pose(best.pose, step);
      const double cost = cost_of(cam, model, det, candidate);
      if (cost < best.cost) {
        converged = (best.cost - cost) < options.relative_tolerance * best.cost;
        best.pose = candidate;
        best.cost = cost;
        lambda = std::max(lambda * 0.1, 1e-15);
        improved = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved || converged) break;
  }
  return best;
}

}  // namespace

std::array<Vec3, 4> TagSpec::corners() const {
  const double h = 0.5 * side_mm;
  return {Vec3(-h, -h, 0.0), Vec3(h, -h, 0.0), Vec3(h, h, 0.0), Vec3(-h, h, 0.0)};
}

void check_corners(const TagDetection& det) {
  for (const auto& c : det.corners) {
    if (!std::isfinite(c.u) || !std::isfinite(c.v)) {
      throw Error(ErrorCode::kBadCorners, "non-finite corner");
    }
  }
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = det.corners[i].vec();
    const Vec2 b = det.corners[(i + 1) % 4].vec();
    const Vec2 c = det.corners[(i + 2) % 4].vec();
    const Vec2 e0 = b - a;
    const Vec2 e1 = c - b;
    const double cross = e0.x() * e1.y() - e0.y() * e1.x();
    if (!(cross < 0.0)) {
      throw Error(ErrorCode::kBadCorners,
                  "tag " + std::to_string(det.tag_id) +
                      ": corners not a convex quad in the expected winding");
    }
  }
}

RigidTransform perturb_pose(const RigidTransform& pose,
                            const Eigen::Matrix<double, 6, 1>& delta) {
  return {Rotation::from_rotation_vector(delta.head<3>()) * pose.rotation,
          pose.translation + delta.tail<3>()};
}

std::array<Pixel, 4> project_tag(const CameraModel& cam, const TagSpec& spec,
                                 const RigidTransform& pose) {
  std::array<Pixel, 4> out{};
  const auto model = spec.corners();
  for (int i = 0; i < 4; ++i) out[i] = project(cam, pose.apply(model[i])).pixel;
  return out;
}

std::array<RigidTransform, 2> planar_pose_candidates(const CameraModel& cam,
                                                     const TagSpec& spec,
                                                     const TagDetection& det) {
  const auto model = spec.corners();
  std::array<Vec2, 4> plane{};
  std::array<Vec2, 4> image{};
  for (int i = 0; i < 4; ++i) {
    plane[i] = model[i].head<2>();
    image[i] = undistort(cam, det.corners[i]);
  }
  const Mat3 h = estimate_homography(plane, image);

  // The homography at the tag origin: image point v and its 2x2 Jacobian.
  const Vec2 v(h(0, 2), h(1, 2));
  Eigen::Matrix2d jac;
  jac << h(0, 0) - h(2, 0) * h(0, 2), h(0, 1) - h(2, 1) * h(0, 2),
      h(1, 0) - h(2, 0) * h(1, 2), h(1, 1) - h(2, 1) * h(1, 2);

  // Rotate the optical axis onto the viewing ray of the origin. In that
  // frame the Jacobian is a scaled 2x2 block of the tag rotation.
  const Vec3 ray = Vec3(v.x(), v.y(), 1.0).normalized();
  const Mat3 rv = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), ray).toRotationMatrix();
  Eigen::Matrix<double, 2, 3> proj_v;
  proj_v << 1.0, 0.0, -v.x(), 0.0, 1.0, -v.y();
  const Eigen::Matrix2d b = proj_v * rv.leftCols<2>();
  const Eigen::Matrix2d a = b.inverse() * jac;

  const Eigen::Matrix2d ata = a * a.transpose();
  const double tr = ata.trace();
  const double disc = std::sqrt(std::max(0.0, (ata(0, 0) - ata(1, 1)) * (ata(0, 0) - ata(1, 1)) +
                                                  4.0 * ata(0, 1) * ata(0, 1)));
  const double gamma = std::sqrt(0.5 * (tr + disc));
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorCode::kDiverged, "degenerate tag homography");
  }
  const Eigen::Matrix2d r2 = a / gamma;
  double b0 = std::sqrt(std::max(0.0, 1.0 - r2.col(0).squaredNorm()));
  double b1 = std::sqrt(std::max(0.0, 1.0 - r2.col(1).squaredNorm()));
  if (-(r2.col(0).dot(r2.col(1))) < 0.0) b1 = -b1;

  std::array<RigidTransform, 2> out{};
  for (int k = 0; k < 2; ++k) {
    const double sign = k == 0 ? 1.0 : -1.0;
    Mat3 local;
    local.col(0) = Vec3(r2(0, 0), r2(1, 0), sign * b0);
    local.col(1) = Vec3(r2(0, 1), r2(1, 1), sign * b1);
    local.col(2) = local.col(0).cross(local.col(1));
    const Rotation rot = Rotation::from_matrix(rv * local);

    // Translation by linear least squares given the rotation.
    const Mat3 r = rot.matrix();
    Eigen::Matrix<double, 8, 3> m;
    Eigen::Matrix<double, 8, 1> rhs;
    for (int i = 0; i < 4; ++i) {
      const Vec3 p = r * model[i];
      m.row(2 * i) << 1.0, 0.0, -image[i].x();
      m.row(2 * i + 1) << 0.0, 1.0, -image[i].y();
      rhs(2 * i) = image[i].x() * p.z() - p.x();
      rhs(2 * i + 1) = image[i].y() * p.z() - p.y();
    }
    const Vec3 t = m.colPivHouseholderQr().solve(rhs);
    out[k] = {rot, t};
  }
  return out;
}

PoseEstimate solve_tag_pose(const CameraModel& cam, const TagSpec& spec,
                            const TagDetection& det, const PoseSolverOptions& options) {
  if (det.tag_id != spec.tag_id) {
    throw Error(ErrorCode::kInvalidArgument, "detection tag id does not match spec");
  }
  check_corners(det);
  const auto model = spec.corners();
  const auto candidates = planar_pose_candidates(cam, spec, det);

  std::array<Refined, 2> refined{};
  for (int k = 0; k < 2; ++k) refined[k] = refine(cam, model, det, candidates[k], options);
  std::array<double, 2> e_proj{};
  for (int k = 0; k < 2; ++k) {
    e_proj[k] = std::isfinite(refined[k].cost)
                    ? reprojection_error(cam, spec, det, refined[k].pose)
                    : std::numeric_limits<double>::infinity();
  }
  if (e_proj[1] < e_proj[0]) {
    std::swap(refined[0], refined[1]);
    std::swap(e_proj[0], e_proj[1]);
  }
  const Refined& best = refined[0];
  if (!std::isfinite(best.cost) || !(best.pose.translation.z() > 0.0)) {
    throw Error(ErrorCode::kDiverged, "pose refinement diverged");
  }

  PoseEstimate est;
  est.camera_id = det.camera_id;
  est.frame_id = det.frame_id;
  est.timestamp_ms = det.timestamp_ms;
  est.tag_id = det.tag_id;
  est.pose = best.pose;
  est.iterations = best.iterations;
  est.e_proj = e_proj[0];

  const Refined& other = refined[1];
  const bool distinct =
      std::isfinite(other.cost) && other.pose.translation.z() > 0.0 &&
      (best.pose.rotation.angle_to(other.pose.rotation) > 1e-6 ||
       (best.pose.translation - other.pose.translation).norm() > 1e-6);
  if (distinct) {
    est.alternate_e_proj = e_proj[1];
    if (est.alternate_e_proj < options.ambiguity_ratio * est.e_proj) {
      est.ambiguous = true;
      est.alternate = other.pose;
    }
  }

  est.sigma_t = propagate_uncertainty(est.e_proj, est.pose.translation, cam, options.uncertainty);
  const DistanceSigma ds = distance_sigma(est.pose.translation, est.sigma_t);
  est.distance = ds.distance;
  est.sigma_distance = ds.sigma;
  return est;
}

double reprojection_error(const CameraModel& cam, const TagSpec& spec,
                          const TagDetection& det, const RigidTransform& pose) {
  const auto model = spec.corners();
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Pixel px = project(cam, pose.apply(model[i])).pixel;
    sum += (px.vec() - det.corners[i].vec()).norm();
  }
  return sum / 4.0;
}

double pose_cost(const CameraModel& cam, const TagSpec& spec, const TagDetection& det,
                 const RigidTransform& pose) {
  return cost_of(cam, spec.corners(), det, pose);
}

Eigen::Matrix<double, 6, 1> pose_cost_gradient(const CameraModel& cam, const TagSpec& spec,
                                               const TagDetection& det,
                                               const RigidTransform& pose) {
  const Linearization lin = linearize(cam, spec.corners(), det, pose, true);
  if (!lin.valid) throw Error(ErrorCode::kBehindCamera, "tag corner behind camera");
  return 2.0 * lin.jacobian.transpose() * lin.residual;
}

}  // namespace navtrace
