#include "doctest.h"

#include "navtrace/error.hpp"
#include "navtrace/fusion.hpp"
#include "navtrace/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace navtrace;

namespace {

CameraModel focal_camera(double fx, double fy = 0.0) {
  CameraModel cam;
  cam.fx = fx;
  cam.fy = fy > 0.0 ? fy : fx;
  cam.cx = 960.0;
  cam.cy = 640.0;
  cam.image_width = 1920;
  cam.image_height = 1280;
  return cam;
}

double variance(const std::vector<double>& xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / (xs.size() - 1);
}

// Golden-section minimization of a 1-D convex function.
template <typename F>
double golden_min(F f, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int i = 0; i < 200; ++i) {
    if (f(c) < f(d)) b = d; else a = c;
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("propagate_uncertainty fixtures") {
  const CameraModel cam = focal_camera(1000.0);
  const Vec3 zero = propagate_uncertainty(0.0, Vec3(10, 20, 500), cam);
  CHECK(zero.norm() == 0.0);

  const Vec3 s = propagate_uncertainty(0.1, Vec3(0, 0, 500), cam);
  CHECK(std::abs(s.x() - 0.05) < 1e-12);
  CHECK(std::abs(s.y() - 0.05) < 1e-12);
  CHECK(std::abs(s.z() - 0.1 * 500.0 / std::sqrt(2e6)) < 1e-12);
  CHECK(std::abs(s.z() - 0.0353553390593) < 1e-12);
}

TEST_CASE("propagate_uncertainty: printed form ignores fy, correction uses it") {
  const CameraModel cam = focal_camera(1000.0, 1250.0);
  const Vec3 printed = propagate_uncertainty(0.2, Vec3(0, 0, 600), cam);
  CHECK(std::abs(printed.y() - 0.2 * 600.0 / 1000.0) < 1e-12);
  CHECK(std::abs(printed.z() - 0.2 * 600.0 / std::sqrt(2.0e6)) < 1e-12);

  const Vec3 corrected = propagate_uncertainty(0.2, Vec3(0, 0, 600), cam, {.use_fy_correction = true});
  CHECK(std::abs(corrected.x() - 0.2 * 600.0 / 1000.0) < 1e-12);
  CHECK(std::abs(corrected.y() - 0.2 * 600.0 / 1250.0) < 1e-12);
  CHECK(std::abs(corrected.z() - 0.2 * 600.0 / std::sqrt(1000.0 * 1000.0 + 1250.0 * 1250.0)) < 1e-12);

  CHECK_THROWS_AS(propagate_uncertainty(-0.1, Vec3(0, 0, 1), cam), Error);
  CHECK_THROWS_AS(propagate_uncertainty(0.1, Vec3(0, 0, -1), cam), Error);
}

TEST_CASE("distance_sigma fixtures") {
  const DistanceSigma a = distance_sigma(Vec3(0, 0, 500), Vec3(0.05, 0.05, 0.0354));
  CHECK(std::abs(a.distance - 500.0) < 1e-12);
  CHECK(std::abs(a.sigma - 0.0354) < 1e-12);

  const DistanceSigma b = distance_sigma(Vec3(300, 0, 400), Vec3(0.1, 0.1, 0.1));
  CHECK(std::abs(b.distance - 500.0) < 1e-12);
  CHECK(std::abs(b.sigma - 0.1) < 1e-12);

  try {
    distance_sigma(Vec3::Zero(), Vec3(0.1, 0.1, 0.1));
    FAIL("expected ZeroDistance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kZeroDistance);
  }
}

TEST_CASE("distance_sigma matches finite-difference propagation of the norm") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> t(-800.0, 800.0);
  std::uniform_real_distribution<double> s(0.001, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 tv(t(rng), t(rng), std::abs(t(rng)) + 50.0);
    const Vec3 sv(s(rng), s(rng), s(rng));
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) {
      Vec3 h = Vec3::Zero();
      h[k] = 1e-2;
      // Fourth-order central stencil.
      const double dk = (8.0 * ((tv + h).norm() - (tv - h).norm()) -
                         ((tv + 2.0 * h).norm() - (tv - 2.0 * h).norm())) / (12.0 * 1e-2);
      acc += (dk * sv[k]) * (dk * sv[k]);
    }
    CHECK(std::abs(distance_sigma(tv, sv).sigma - std::sqrt(acc)) < 1e-9);
  }
}

TEST_CASE("fuse_distances fixtures") {
  const std::vector<DistanceEstimate> one{{0, 512.5, 0.3}};
  const FusedScalar single = fuse_distances(one);
  CHECK(single.distance_mm == 512.5);
  CHECK(std::abs(single.sigma_mm - 0.3) < 1e-15);
  CHECK(single.weights.size() == 1);
  CHECK(single.weights[0].weight == 1.0);

  const std::vector<DistanceEstimate> equal{{0, 500.0, 0.1}, {1, 502.0, 0.1}};
  const FusedScalar e = fuse_distances(equal);
  CHECK(std::abs(e.distance_mm - 501.0) < 1e-9);
  CHECK(std::abs(e.sigma_mm - 0.1 / std::sqrt(2.0)) < 1e-9);
  CHECK(std::abs(e.sigma_mm - 0.0707106781) < 1e-9);

  const std::vector<DistanceEstimate> mixed{{0, 500.0, 0.1}, {1, 510.0, 0.3}};
  const FusedScalar m = fuse_distances(mixed);
  const double w0 = 100.0, w1 = 1.0 / 0.09;
  CHECK(std::abs(m.distance_mm - (500.0 * w0 + 510.0 * w1) / (w0 + w1)) < 1e-9);
  CHECK(std::abs(m.distance_mm - 501.0) < 1e-9);
  CHECK(std::abs(m.sigma_mm - std::sqrt(1.0 / (w0 + w1))) < 1e-9);
  CHECK(std::abs(m.sigma_mm - 0.0948683298) < 1e-9);
}

TEST_CASE("fuse_distances errors") {
  CHECK_THROWS_AS(fuse_distances(std::vector<DistanceEstimate>{}), Error);
  try {
    fuse_distances(std::vector<DistanceEstimate>{{0, 500.0, 0.1}, {1, 500.0, 0.0}});
    FAIL("expected NonPositiveSigma");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonPositiveSigma);
  }
}

TEST_CASE("fuse_distances algebraic properties") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> d(300.0, 1000.0);
  std::uniform_real_distribution<double> s(0.01, 2.0);
  std::uniform_int_distribution<int> count(1, 6);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<DistanceEstimate> est(count(rng));
    for (int j = 0; j < static_cast<int>(est.size()); ++j) est[j] = {j, d(rng), s(rng)};
    const FusedScalar f = fuse_distances(est);
    const auto [dmin, dmax] = std::minmax_element(
        est.begin(), est.end(), [](auto& a, auto& b) { return a.distance_mm < b.distance_mm; });
    const double smin = std::min_element(est.begin(), est.end(), [](auto& a, auto& b) {
                          return a.sigma_mm < b.sigma_mm;
                        })->sigma_mm;
    CHECK(f.distance_mm >= dmin->distance_mm - 1e-9);
    CHECK(f.distance_mm <= dmax->distance_mm + 1e-9);
    if (est.size() >= 2) CHECK(f.sigma_mm < smin); else CHECK(f.sigma_mm <= smin);
    double wsum = 0.0;
    for (const auto& w : f.weights) wsum += w.weight;
    CHECK(std::abs(wsum - 1.0) < 1e-12);

    std::vector<DistanceEstimate> shuffled = est;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const FusedScalar g = fuse_distances(shuffled);
    CHECK(std::abs(g.distance_mm - f.distance_mm) < 1e-9);
    CHECK(std::abs(g.sigma_mm - f.sigma_mm) < 1e-12);
  }
}

TEST_CASE("fuse_distances dominance limit") {
  std::vector<DistanceEstimate> est{{0, 500.0, 0.2}, {1, 507.0, 0.3}, {2, 495.0, 0.25}};
  est[1].sigma_mm = 1e-6 * 0.2;
  const FusedScalar f = fuse_distances(est);
  CHECK(std::abs(f.distance_mm - 507.0) / 507.0 < 1e-3);
}

TEST_CASE("fused distance is more efficient than any single camera") {
  std::mt19937_64 rng(123);
  const std::vector<double> sigmas{0.08, 0.12, 0.2};
  std::vector<std::vector<double>> per_camera(3);
  std::vector<double> fused;
  for (int frame = 0; frame < 1000; ++frame) {
    std::vector<DistanceEstimate> est;
    for (int j = 0; j < 3; ++j) {
      std::normal_distribution<double> n(650.0, sigmas[j]);
      est.push_back({j, n(rng), sigmas[j]});
      per_camera[j].push_back(est.back().distance_mm);
    }
    fused.push_back(fuse_distances(est).distance_mm);
  }
  for (const auto& c : per_camera) CHECK(variance(fused) < variance(c));
}

TEST_CASE("chordal mean is sign invariant") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  const Eigen::Quaterniond base(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
  std::vector<Eigen::Quaterniond> qs;
  std::vector<double> ws;
  for (int i = 0; i < 5; ++i) {
    qs.push_back(base * Eigen::Quaterniond(Eigen::AngleAxisd(n(rng), Vec3(n(rng), n(rng), 1).normalized())));
    ws.push_back(1.0 + i);
  }
  const Eigen::Quaterniond ref = chordal_mean(qs, ws);
  for (std::size_t k = 0; k < qs.size(); ++k) {
    auto flipped = qs;
    flipped[k].coeffs() *= -1.0;
    const Eigen::Quaterniond m = chordal_mean(flipped, ws);
    CHECK(std::abs(std::abs(m.dot(ref)) - 1.0) < 1e-12);
  }
}

TEST_CASE("fuse_poses consensus and equal-weight mean") {
  std::vector<CameraModel> cams(3, focal_camera(1507.0));
  for (int j = 0; j < 3; ++j) {
    cams[j].camera_id = j;
    cams[j].extrinsic = {Rotation::about_axis(Vec3::UnitY(), 0.5 * (j - 1)), Vec3(100.0 * j, 0, 0)};
  }
  const RigidTransform world_tag{Rotation::about_axis(Vec3(0, 1, 1), 0.4), Vec3(10, 20, 30)};
  std::vector<PoseEstimate> est;
  for (int j = 0; j < 3; ++j) {
    PoseEstimate e;
    e.camera_id = j;
    e.tag_id = 4;
    e.pose = cams[j].extrinsic.inverse() * world_tag;
    e.sigma_t = Vec3(0.05, 0.05, 0.03);
    e.sigma_distance = 0.04 + 0.01 * j;
    est.push_back(e);
  }
  const FusedPose f = fuse_poses(est, cams);
  CHECK(f.pose.rotation.angle_to(world_tag.rotation) < 1e-9);
  CHECK((f.pose.translation - world_tag.translation).norm() < 1e-9);
  CHECK(f.rotation_dispersion_deg < 1e-6);
  CHECK(f.camera_count == 3);

  // Two identity-extrinsic cameras, equal sigma.
  std::vector<CameraModel> two(2, focal_camera(1507.0));
  two[1].camera_id = 1;
  std::vector<PoseEstimate> pair(2);
  pair[0].pose.translation = Vec3(0, 0, 500);
  pair[1].pose.translation = Vec3(0, 0, 502);
  pair[1].camera_id = 1;
  for (auto& p : pair) {
    p.sigma_t = Vec3(0.1, 0.1, 0.1);
    p.sigma_distance = 0.1;
  }
  const FusedPose g = fuse_poses(pair, two);
  CHECK((g.pose.translation - Vec3(0, 0, 501)).norm() < 1e-9);
  for (int a = 0; a < 3; ++a) CHECK(g.sigma_t[a] <= 0.1);
  CHECK(g.sigma_fused < 0.1);
}

TEST_CASE("fuse_poses errors") {
  std::vector<CameraModel> cams(1, focal_camera(1507.0));
  CHECK_THROWS_AS(fuse_poses(std::vector<PoseEstimate>{}, cams), Error);
  std::vector<PoseEstimate> est(2);
  est[1].tag_id = 9;
  try {
    fuse_poses(est, cams);
    FAIL("expected FrameMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFrameMismatch);
  }
  std::vector<PoseEstimate> unknown(1);
  unknown[0].camera_id = 42;
  CHECK_THROWS_AS(fuse_poses(unknown, cams), Error);
}

TEST_CASE("fuse_hypotheses against Monte-Carlo minimization oracle") {
  // Three cameras with heterogeneous per-axis sigma. For each noisy draw the
  // oracle minimizes the weighted cost numerically (golden section per axis,
  // projected gradient for the rotation) and must agree with the closed form;
  // across draws the fused spread must match the predicted fused sigma.
  std::mt19937_64 rng(2718);
  const RigidTransform truth{Rotation::about_axis(Vec3(1, -1, 2), 0.9), Vec3(5, -12, 640)};
  const std::vector<Vec3> sigmas{Vec3(0.05, 0.09, 0.3), Vec3(0.2, 0.04, 0.1), Vec3(0.12, 0.12, 0.06)};
  const std::vector<double> sigma_d{0.05, 0.1, 0.08};
  const std::vector<double> rot_sigma{0.002, 0.004, 0.003};

  constexpr int kSamples = 10000;
  std::vector<Vec3> fused_t;
  std::vector<double> max_oracle_gap(2, 0.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int s = 0; s < kSamples; ++s) {
    std::vector<PoseHypothesis> hyps;
    for (int j = 0; j < 3; ++j) {
      PoseHypothesis h;
      h.camera_id = j;
      h.sigma_t = sigmas[j];
      h.sigma_distance = sigma_d[j];
      const Vec3 noise(n(rng) * sigmas[j].x(), n(rng) * sigmas[j].y(), n(rng) * sigmas[j].z());
      const Vec3 rn(n(rng), n(rng), n(rng));
      h.pose = {Rotation::from_rotation_vector(rot_sigma[j] * rn) * truth.rotation,
                truth.translation + noise};
      hyps.push_back(h);
    }
    const FusedPose f = fuse_hypotheses(hyps);
    fused_t.push_back(f.pose.translation);

    if (s % 100 == 0) {
      Vec3 oracle_t;
      for (int a = 0; a < 3; ++a) {
        auto cost = [&](double x) {
          double c = 0.0;
          for (const auto& h : hyps) {
            const double r = (x - h.pose.translation[a]) / h.sigma_t[a];
            c += r * r;
          }
          return c;
        };
        oracle_t[a] = golden_min(cost, truth.translation[a] - 5.0, truth.translation[a] + 5.0);
      }
      max_oracle_gap[0] = std::max(max_oracle_gap[0], (oracle_t - f.pose.translation).norm());

      // Cost -sum w_j (q . q_j)^2, which is sign invariant, minimized over unit
      // quaternions by projected gradient descent.
      Eigen::Vector4d q = hyps[0].pose.rotation.quaternion().coeffs();
      for (int it = 0; it < 5000; ++it) {
        Eigen::Vector4d grad = Eigen::Vector4d::Zero();
        for (std::size_t j = 0; j < hyps.size(); ++j) {
          const Eigen::Vector4d qj = hyps[j].pose.rotation.quaternion().coeffs();
          grad -= 2.0 / (sigma_d[j] * sigma_d[j]) * q.dot(qj) * qj;
        }
        q -= 5e-4 * grad;
        q.normalize();
      }
      const Eigen::Quaterniond oq(q(3), q(0), q(1), q(2));
      max_oracle_gap[1] = std::max(max_oracle_gap[1],
                                   Rotation::from_quaternion(oq).angle_to(f.pose.rotation));
    }
  }
  CHECK(max_oracle_gap[0] < 1e-6);
  CHECK(max_oracle_gap[1] < 1e-8);

  // Predicted per-axis sigma of the weighted mean.
  Vec3 predicted;
  for (int a = 0; a < 3; ++a) {
    double w = 0.0;
    for (const auto& s : sigmas) w += 1.0 / (s[a] * s[a]);
    predicted[a] = std::sqrt(1.0 / w);
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& t : fused_t) mean += t;
  mean /= kSamples;
  Vec3 var = Vec3::Zero();
  for (const auto& t : fused_t) var += (t - mean).cwiseAbs2();
  var /= kSamples - 1;
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(mean[a] - truth.translation[a]) < 3.0 * predicted[a] / std::sqrt(double(kSamples)));
    CHECK(std::sqrt(var[a]) == doctest::Approx(predicted[a]).epsilon(0.05));
  }
}

TEST_CASE("to_world rotates the per-axis sigma") {
  CameraModel cam = focal_camera(1507.0);
  cam.extrinsic = {Rotation::about_axis(Vec3::UnitY(), std::acos(-1.0) / 2.0), Vec3(0, 0, 0)};
  PoseEstimate e;
  e.pose.translation = Vec3(0, 0, 600);
  e.sigma_t = Vec3(0.01, 0.02, 0.3);
  const PoseHypothesis h = to_world(e, cam);
  // Camera z maps onto world x under a +90 degree turn about y.
  CHECK(h.sigma_t.x() == doctest::Approx(0.3));
  CHECK(h.sigma_t.y() == doctest::Approx(0.02));
  CHECK(h.sigma_t.z() == doctest::Approx(0.01));
}
