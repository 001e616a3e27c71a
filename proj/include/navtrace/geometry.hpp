#pragma once
/**
 * @file geometry.hpp
 * @brief Rigid transforms, pinhole projection and Brown-Conrady distortion.
 *
 * Conventions used throughout the library:
 *  - translations in millimetres, angles in radians internally;
 *  - a RigidTransform maps child-frame coordinates into its parent frame;
 *  - camera frame: +z along the optical axis, +x right, +y down in the image.
 */

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <optional>

namespace navtrace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Pixel {
  double u = 0.0;
  double v = 0.0;

  Vec2 vec() const { return {u, v}; }
  static Pixel from(const Vec2& p) { return {p.x(), p.y()}; }
};

/// Unit-quaternion rotation. Renormalized on every construction and
/// composition so long-running chains stay on the manifold.
class Rotation {
 public:
  Rotation() = default;

  static Rotation identity() { return {}; }
  /// Quaternion in (w, x, y, z) order; normalized on entry.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_quaternion(const Eigen::Quaterniond& q);
  /// Projects onto SO(3) first, so near-orthonormal input is accepted.
  static Rotation from_matrix(const Mat3& m);
  /// Rotation vector (axis * angle, radians).
  static Rotation from_rotation_vector(const Vec3& rv);
  static Rotation about_axis(const Vec3& axis, double angle_rad);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }
  Vec3 rotation_vector() const;
  /// Geodesic angle from the identity, in [0, pi].
  double angle() const;
  /// Geodesic distance to another rotation, in [0, pi].
  double angle_to(const Rotation& other) const;

  Vec3 rotate(const Vec3& p) const { return q_ * p; }
  Rotation inverse() const;
  Rotation operator*(const Rotation& rhs) const;

 private:
  explicit Rotation(const Eigen::Quaterniond& q);
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  RigidTransform inverse() const;
  /// (this * rhs).apply(p) == this->apply(rhs.apply(p))
  RigidTransform operator*(const RigidTransform& rhs) const;
};

Vec3 transform_point(const RigidTransform& t, const Vec3& p);
RigidTransform compose(const RigidTransform& parent_from_mid,
                       const RigidTransform& mid_from_child);
RigidTransform inverse(const RigidTransform& t);

/// Five-coefficient radial-tangential model (k1, k2, p1, p2, k3).
struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double k3 = 0.0;

  bool is_zero() const {
    return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0 && k3 == 0.0;
  }
  std::array<double, 5> as_array() const { return {k1, k2, p1, p2, k3}; }
  static Distortion from_array(const std::array<double, 5>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }
};

struct CameraModel {
  int camera_id = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  Distortion distortion;
  int image_width = 0;
  int image_height = 0;
  /// camera frame -> world frame
  RigidTransform extrinsic;

  /// Throws Error(kInvalidArgument) when the intrinsic invariants fail.
  void validate() const;
  bool in_frame(const Pixel& px) const;
  /// Focal length from horizontal field of view for an ideal pinhole.
  static double focal_from_hfov(int image_width, double hfov_deg);
};

/// Distorted normalized coordinates. When `jacobian` is given it receives
/// d(distorted)/d(undistorted).
Vec2 distort(const Distortion& d, const Vec2& xy,
             Eigen::Matrix2d* jacobian = nullptr);

/// Partial derivatives of distort() with respect to (k1, k2, p1, p2, k3).
Eigen::Matrix<double, 2, 5> distortion_jacobian(const Vec2& xy);

struct Projection {
  Pixel pixel;
  bool out_of_frame = false;
};

/// Camera-frame point to pixel: divide by depth, distort, apply K.
/// Throws Error(kBehindCamera) when z <= 0.
Projection project(const CameraModel& cam, const Vec3& p_cam);

/// Same as project() plus d(pixel)/d(p_cam).
Projection project(const CameraModel& cam, const Vec3& p_cam,
                   Eigen::Matrix<double, 2, 3>& d_point);

/// Pixel to undistorted normalized coordinates (x/z, y/z). Newton iteration
/// on the distortion map; throws Error(kNoConvergence) past the iteration cap.
Vec2 undistort(const CameraModel& cam, const Pixel& px);

/// Pixel of an undistorted normalized point.
Pixel normalized_to_pixel(const CameraModel& cam, const Vec2& xy);

Mat3 skew(const Vec3& a);

double deg_to_rad(double deg);
double rad_to_deg(double rad);

}  // namespace navtrace
