#include "doctest.h"

#include "navtrace/error.hpp"
#include "navtrace/pose.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace navtrace;

namespace {

CameraModel wide_camera() {
  CameraModel cam;
  cam.fx = CameraModel::focal_from_hfov(1920, 65.0);
  cam.fy = cam.fx;
  cam.cx = 960.0;
  cam.cy = 640.0;
  cam.image_width = 1920;
  cam.image_height = 1280;
  return cam;
}

// Tag facing the camera (tag +z towards the camera), tilted by the given
// angles about the tag's own x and y axes.
RigidTransform facing_pose(const Vec3& t, double tilt_x_deg, double tilt_y_deg) {
  const Rotation facing = Rotation::about_axis(Vec3::UnitX(), std::numbers::pi);
  const Rotation tilt = Rotation::about_axis(Vec3::UnitX(), deg_to_rad(tilt_x_deg)) *
                        Rotation::about_axis(Vec3::UnitY(), deg_to_rad(tilt_y_deg));
  return {facing * tilt, t};
}

TagDetection detect(const CameraModel& cam, const TagSpec& spec, const RigidTransform& pose,
                    double sigma_px = 0.0, std::mt19937_64* rng = nullptr) {
  TagDetection det;
  det.tag_id = spec.tag_id;
  det.corners = project_tag(cam, spec, pose);
  if (sigma_px > 0.0 && rng != nullptr) {
    std::normal_distribution<double> n(0.0, sigma_px);
    for (auto& c : det.corners) {
      c.u += n(*rng);
      c.v += n(*rng);
    }
  }
  return det;
}

}  // namespace

TEST_CASE("tag corner layout") {
  const TagSpec spec{3, 24.0};
  const auto c = spec.corners();
  CHECK(c[0].x() == -12.0);
  CHECK(c[0].y() == -12.0);
  CHECK(c[2].x() == 12.0);
  CHECK(c[2].y() == 12.0);
  for (const auto& p : c) CHECK(p.z() == 0.0);
}

TEST_CASE("noiseless round trip recovers the pose") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> tilt(-50.0, 50.0);
  std::uniform_real_distribution<double> lateral(-80.0, 80.0);
  std::uniform_real_distribution<double> depth(300.0, 750.0);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform truth =
        facing_pose(Vec3(lateral(rng), lateral(rng), depth(rng)), tilt(rng), tilt(rng));
    const PoseEstimate est = solve_tag_pose(cam, spec, detect(cam, spec, truth));
    CHECK(est.pose.rotation.angle_to(truth.rotation) < 1e-6);
    CHECK((est.pose.translation - truth.translation).norm() < 1e-6);
    CHECK(est.e_proj < 1e-9);
    CHECK(est.distance == doctest::Approx(est.pose.translation.norm()).epsilon(1e-12));
    CHECK(est.sigma_distance >= 0.0);
  }
}

TEST_CASE("noiseless round trip with lens distortion") {
  CameraModel cam = wide_camera();
  cam.distortion = {-0.2, 0.05, 0.001, -0.0005, 0.0};
  const TagSpec spec{1, 24.0};
  const RigidTransform truth = facing_pose(Vec3(150.0, -90.0, 520.0), 25.0, -15.0);
  const PoseEstimate est = solve_tag_pose(cam, spec, detect(cam, spec, truth));
  CHECK(est.pose.rotation.angle_to(truth.rotation) < 1e-6);
  CHECK((est.pose.translation - truth.translation).norm() < 1e-6);
}

TEST_CASE("both planar candidates are offered and one is exact") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  const RigidTransform truth = facing_pose(Vec3(30.0, 10.0, 600.0), 20.0, 10.0);
  const auto cands = planar_pose_candidates(cam, spec, detect(cam, spec, truth));
  const double best = std::min(cands[0].rotation.angle_to(truth.rotation),
                               cands[1].rotation.angle_to(truth.rotation));
  CHECK(best < 1e-8);
  CHECK(cands[0].rotation.angle_to(cands[1].rotation) > 1e-3);
}

TEST_CASE("near-frontal noisy view flags planar ambiguity") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  std::mt19937_64 rng(4);
  int flagged = 0;
  for (int i = 0; i < 200; ++i) {
    const PoseEstimate est = solve_tag_pose(
        cam, spec, detect(cam, spec, facing_pose(Vec3(0, 0, 700), 0.5, 0.0), 0.3, &rng));
    if (est.ambiguous) {
      ++flagged;
      REQUIRE(est.alternate.has_value());
      CHECK(est.alternate_e_proj >= est.e_proj);
      CHECK(est.alternate_e_proj < 1.5 * est.e_proj);
    }
  }
  CHECK(flagged > 0);
}

TEST_CASE("reprojection_error fixtures") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  const RigidTransform truth = facing_pose(Vec3(0, 0, 600), 10.0, 0.0);
  TagDetection det = detect(cam, spec, truth);
  CHECK(reprojection_error(cam, spec, det, truth) == 0.0);
  det.corners[2].u += 2.0;
  CHECK(reprojection_error(cam, spec, det, truth) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("reprojection_error matches direct per-corner summation") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  const RigidTransform truth = facing_pose(Vec3(20, -30, 550), 15.0, -20.0);
  const TagDetection det = detect(cam, spec, truth, 0.5, &rng);
  const auto model = spec.corners();
  for (int i = 0; i < 100; ++i) {
    Eigen::Matrix<double, 6, 1> d;
    d << 0.01 * n(rng), 0.01 * n(rng), 0.01 * n(rng), n(rng), n(rng), n(rng);
    const RigidTransform pose = perturb_pose(truth, d);
    const Mat3 r = pose.rotation.matrix();
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      double p[3];
      for (int a = 0; a < 3; ++a) {
        p[a] = pose.translation[a];
        for (int b = 0; b < 3; ++b) p[a] += r(a, b) * model[k][b];
      }
      const double u = cam.fx * p[0] / p[2] + cam.cx;
      const double v = cam.fy * p[1] / p[2] + cam.cy;
      sum += std::hypot(u - det.corners[k].u, v - det.corners[k].v);
    }
    CHECK(std::abs(reprojection_error(cam, spec, det, pose) - sum / 4.0) < 1e-12);
  }
}

TEST_CASE("solution is a local minimizer of the squared-residual cost") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const TagDetection det =
        detect(cam, spec, facing_pose(Vec3(40, 20, 600), 25.0, 10.0), 0.13, &rng);
    const PoseEstimate est = solve_tag_pose(cam, spec, det);
    const double base = pose_cost(cam, spec, det, est.pose);
    for (int axis = 0; axis < 6; ++axis) {
      for (double sign : {-1.0, 1.0}) {
        Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
        d[axis] = sign * (axis < 3 ? 1e-3 : 1e-2);
        CHECK(pose_cost(cam, spec, det, perturb_pose(est.pose, d)) >= base);
      }
    }
  }
}

TEST_CASE("solver is equivariant to rigid motion of the scene") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> small(-0.15, 0.15);
  std::uniform_real_distribution<double> shift(-40.0, 40.0);
  const RigidTransform base = facing_pose(Vec3(10, -20, 600), 20.0, 5.0);
  const PoseEstimate est0 = solve_tag_pose(cam, spec, detect(cam, spec, base));
  for (int i = 0; i < 50; ++i) {
    const RigidTransform g{Rotation::from_rotation_vector(Vec3(small(rng), small(rng), small(rng))),
                           Vec3(shift(rng), shift(rng), shift(rng))};
    const RigidTransform moved = g * base;
    const PoseEstimate est = solve_tag_pose(cam, spec, detect(cam, spec, moved));
    const RigidTransform expected = g * est0.pose;
    CHECK(est.pose.rotation.angle_to(expected.rotation) < 1e-6);
    CHECK((est.pose.translation - expected.translation).norm() < 1e-6);
  }
}

TEST_CASE("analytic cost gradient matches central differences") {
  CameraModel cam = wide_camera();
  cam.distortion = {-0.1, 0.02, 0.0, 0.0, 0.0};
  const TagSpec spec{1, 24.0};
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  const TagDetection det = detect(cam, spec, facing_pose(Vec3(30, 30, 600), 20.0, 20.0), 0.2, &rng);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Eigen::Matrix<double, 6, 1> d;
    d << 0.02 * n(rng), 0.02 * n(rng), 0.02 * n(rng), 2.0 * n(rng), 2.0 * n(rng), 5.0 * n(rng);
    const RigidTransform pose = perturb_pose(facing_pose(Vec3(30, 30, 600), 20.0, 20.0), d);
    const auto g = pose_cost_gradient(cam, spec, det, pose);
    Eigen::Matrix<double, 6, 1> fd;
    constexpr double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Eigen::Matrix<double, 6, 1> e = Eigen::Matrix<double, 6, 1>::Zero();
      e[k] = h;
      fd[k] = (pose_cost(cam, spec, det, perturb_pose(pose, e)) -
               pose_cost(cam, spec, det, perturb_pose(pose, -e))) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).norm() / fd.norm());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("bad corners are rejected") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  TagDetection det = detect(cam, spec, facing_pose(Vec3(0, 0, 600), 0.0, 0.0));
  std::swap(det.corners[1], det.corners[2]);  // self-intersecting
  CHECK_THROWS_AS(solve_tag_pose(cam, spec, det), Error);

  TagDetection mirrored = detect(cam, spec, facing_pose(Vec3(0, 0, 600), 0.0, 0.0));
  std::swap(mirrored.corners[1], mirrored.corners[3]);  // reversed winding
  try {
    check_corners(mirrored);
    FAIL("expected BadCorners");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadCorners);
  }

  TagDetection wrong_id = detect(cam, spec, facing_pose(Vec3(0, 0, 600), 0.0, 0.0));
  wrong_id.tag_id = 2;
  CHECK_THROWS_AS(solve_tag_pose(cam, spec, wrong_id), Error);
}

TEST_CASE("working range keeps e_proj small at the operating noise") {
  const CameraModel cam = wide_camera();
  const TagSpec spec{1, 24.0};
  std::mt19937_64 rng(2024);
  for (double z = 300.0; z <= 750.0; z += 50.0) {
    const PoseEstimate est =
        solve_tag_pose(cam, spec, detect(cam, spec, facing_pose(Vec3(0, 0, z), 30.0, 0.0), 0.104, &rng));
    CHECK(est.e_proj < 0.15);
    CHECK(est.pose.translation.z() > 0.0);
  }
}
