#include "navtrace/geometry.hpp"

#include "navtrace/error.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace navtrace {

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q) {
  // Already-unit input is kept bit for bit so serialized poses round-trip.
  if (std::abs(q_.squaredNorm() - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) {
    q_.normalize();
  }
  // Canonical hemisphere keeps serialized output stable.
  if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  return from_quaternion(Eigen::Quaterniond(w, x, y, z));
}

Rotation Rotation::from_quaternion(const Eigen::Quaterniond& q) {
  if (!(q.norm() > 0.0) || !q.coeffs().allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "quaternion must be finite and non-zero");
  }
  return Rotation(q);
}

Rotation Rotation::from_matrix(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return Rotation(Eigen::Quaterniond(r));
}

Rotation Rotation::from_rotation_vector(const Vec3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-300) return identity();
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, rv / angle)));
}

Rotation Rotation::about_axis(const Vec3& axis, double angle_rad) {
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis.normalized())));
}

Vec3 Rotation::rotation_vector() const {
  // q_ is kept with w >= 0, so the angle lands in [0, pi].
  const double s = q_.vec().norm();
  const double angle = 2.0 * std::atan2(s, q_.w());
  if (s < 1e-300) return 2.0 * q_.vec();
  return q_.vec() * (angle / s);
}

double Rotation::angle() const {
  return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w()));
}

double Rotation::angle_to(const Rotation& other) const {
  return (inverse() * other).angle();
}

Rotation Rotation::inverse() const { return Rotation(q_.conjugate()); }

Rotation Rotation::operator*(const Rotation& rhs) const {
  return Rotation(q_ * rhs.q_);
}

RigidTransform RigidTransform::inverse() const {
  const Rotation inv = rotation.inverse();
  return {inv, -inv.rotate(translation)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  return {rotation * rhs.rotation, rotation.rotate(rhs.translation) + translation};
}

Vec3 transform_point(const RigidTransform& t, const Vec3& p) { return t.apply(p); }

RigidTransform compose(const RigidTransform& parent_from_mid,
                       const RigidTransform& mid_from_child) {
  return parent_from_mid * mid_from_child;
}

RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }

void CameraModel::validate() const {
  const auto fail = [this](const char* what) {
    throw Error(ErrorCode::kInvalidArgument,
                "camera " + std::to_string(camera_id) + ": " + what);
  };
  if (!(fx > 0.0) || !(fy > 0.0)) fail("focal lengths must be positive");
  if (image_width <= 0 || image_height <= 0) fail("image size must be positive");
  if (!(cx > 0.0 && cx < image_width)) fail("cx outside image");
  if (!(cy > 0.0 && cy < image_height)) fail("cy outside image");
}

bool CameraModel::in_frame(const Pixel& px) const {
  return px.u >= 0.0 && px.v >= 0.0 && px.u <= image_width && px.v <= image_height;
}

double CameraModel::focal_from_hfov(int image_width, double hfov_deg) {
  return 0.5 * image_width / std::tan(0.5 * deg_to_rad(hfov_deg));
}

Vec2 distort(const Distortion& d, const Vec2& xy, Eigen::Matrix2d* jacobian) {
  const double x = xy.x();
  const double y = xy.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  const Vec2 out(x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
                 y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y);
  if (jacobian != nullptr) {
    const double dradial = d.k1 + r2 * (2.0 * d.k2 + 3.0 * d.k3 * r2);
    (*jacobian)(0, 0) = radial + 2.0 * x * x * dradial + 2.0 * d.p1 * y + 6.0 * d.p2 * x;
    (*jacobian)(0, 1) = 2.0 * x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
    (*jacobian)(1, 0) = 2.0 * x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
    (*jacobian)(1, 1) = radial + 2.0 * y * y * dradial + 6.0 * d.p1 * y + 2.0 * d.p2 * x;
  }
  return out;
}

Eigen::Matrix<double, 2, 5> distortion_jacobian(const Vec2& xy) {
  const double x = xy.x();
  const double y = xy.y();
  const double r2 = x * x + y * y;
  Eigen::Matrix<double, 2, 5> j;
  j << x * r2, x * r2 * r2, 2.0 * x * y, r2 + 2.0 * x * x, x * r2 * r2 * r2,
      y * r2, y * r2 * r2, r2 + 2.0 * y * y, 2.0 * x * y, y * r2 * r2 * r2;
  return j;
}

Pixel normalized_to_pixel(const CameraModel& cam, const Vec2& xy) {
  const Vec2 xd = distort(cam.distortion, xy);
  return {cam.fx * xd.x() + cam.cx, cam.fy * xd.y() + cam.cy};
}

Projection project(const CameraModel& cam, const Vec3& p_cam) {
  if (!(p_cam.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "point is not in front of the camera");
  }
  const Pixel px = normalized_to_pixel(cam, p_cam.head<2>() / p_cam.z());
  return {px, !cam.in_frame(px)};
}

Projection project(const CameraModel& cam, const Vec3& p_cam,
                   Eigen::Matrix<double, 2, 3>& d_point) {
  if (!(p_cam.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "point is not in front of the camera");
  }
  const double iz = 1.0 / p_cam.z();
  const Vec2 xy = p_cam.head<2>() * iz;
  Eigen::Matrix2d dd;
  const Vec2 xd = distort(cam.distortion, xy, &dd);
  Eigen::Matrix<double, 2, 3> dxy;
  dxy << iz, 0.0, -xy.x() * iz, 0.0, iz, -xy.y() * iz;
  const Eigen::Matrix2d k = Eigen::Vector2d(cam.fx, cam.fy).asDiagonal();
  d_point = k * dd * dxy;
  const Pixel px{cam.fx * xd.x() + cam.cx, cam.fy * xd.y() + cam.cy};
  return {px, !cam.in_frame(px)};
}

Vec2 undistort(const CameraModel& cam, const Pixel& px) {
  const Vec2 target((px.u - cam.cx) / cam.fx, (px.v - cam.cy) / cam.fy);
  if (cam.distortion.is_zero()) return target;

  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-15;
  Vec2 xy = target;
  for (int i = 0; i < kMaxIterations; ++i) {
    Eigen::Matrix2d j;
    const Vec2 residual = distort(cam.distortion, xy, &j) - target;
    if (!residual.allFinite()) break;
    if (residual.norm() < kTolerance) {
      // A root past the fold of the radial polynomial is not a valid preimage.
      if (j.determinant() > 0.0 && j.trace() > 0.0) return xy;
      break;
    }
    const Vec2 step = j.partialPivLu().solve(residual);
    if (!step.allFinite()) break;
    xy -= step;
  }
  Eigen::Matrix2d j;
  const Vec2 residual = distort(cam.distortion, xy, &j) - target;
  if (residual.allFinite() && residual.norm() < 1e-12 && j.determinant() > 0.0 &&
      j.trace() > 0.0) {
    return xy;
  }
  throw Error(ErrorCode::kNoConvergence, "distortion inversion did not converge");
}

Mat3 skew(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
  return m;
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace navtrace
