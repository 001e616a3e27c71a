#include "doctest.h"

#include "navtrace/error.hpp"
#include "navtrace/frames.hpp"
#include "navtrace/pipeline.hpp"
#include "navtrace/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace navtrace;

namespace {

std::vector<PoseEstimate> solve_all(const SceneLayout& layout,
                                    const std::vector<TagDetection>& dets) {
  std::vector<PoseEstimate> out;
  for (const auto& d : dets) {
    const TagSpec spec = d.tag_id == layout.coil_tag.tag_id
                             ? layout.coil_tag.spec()
                             : layout.find_head_tag(d.tag_id)->spec();
    out.push_back(solve_tag_pose(layout.camera(d.camera_id), spec, d));
  }
  return out;
}

std::vector<TagDetection> without(std::vector<TagDetection> dets, const std::set<int>& tags) {
  std::erase_if(dets, [&](const TagDetection& d) { return tags.count(d.tag_id) > 0; });
  return dets;
}

BodyPose body(const RigidTransform& pose) {
  BodyPose b;
  b.pose = pose;
  b.tag_count = 1;
  return b;
}

SceneLayout top_target_layout() {
  SceneLayout layout = default_layout();
  layout.targets = {{"top", Vec3(0.0, 0.0, 85.0)}};
  return layout;
}

SimConfig still(double sigma_px) {
  SimConfig sc;
  sc.sigma_px = sigma_px;
  sc.motion = MotionConfig::none();
  return sc;
}

}  // namespace

TEST_CASE("axis-aligned coil over a sphere hits the pole") {
  const SceneLayout layout = top_target_layout();
  const RigidTransform coil{Rotation::identity(), Vec3(0.0, 0.0, 120.0)};
  const TargetEstimate t = estimate_target(body(RigidTransform{}), body(coil), layout);
  CHECK((t.point - Vec3(0.0, 0.0, 85.0)).norm() < 1e-12);
  CHECK(t.alignment.lateral_mm == doctest::Approx(0.0));
  CHECK(t.alignment.gap_mm == doctest::Approx(35.0));
  CHECK(t.alignment.tilt_deg == doctest::Approx(0.0));
  CHECK(t.target_name == "top");
}

TEST_CASE("tilted coil matches the line-sphere quadratic root") {
  const SceneLayout layout = top_target_layout();
  const RigidTransform head{Rotation::about_axis(Vec3(1.0, 2.0, -0.5), 0.7), Vec3(10.0, -40.0, 300.0)};
  for (double tilt : {10.0, -10.0, 25.0}) {
    const Rotation r = Rotation::about_axis(Vec3::UnitX(), deg_to_rad(tilt));
    const Vec3 o(0.0, 0.0, 120.0);
    const RigidTransform coil_in_head{r, o};
    const TargetEstimate t =
        estimate_target(body(head), body(head * coil_in_head), layout);

    const Vec3 d = r.rotate(Vec3(0.0, 0.0, -1.0));
    const double b = o.dot(d);
    const double c = o.squaredNorm() - 85.0 * 85.0;
    const Vec3 expected = o + (-b - std::sqrt(b * b - c)) * d;
    CHECK((t.point - expected).norm() < 1e-9);
    CHECK(std::abs(t.point.norm() - 85.0) < 1e-6);
    CHECK(t.alignment.tilt_deg == doctest::Approx(std::abs(tilt)).epsilon(1e-9));
    CHECK(t.alignment.lateral_mm >= 0.0);
    CHECK(t.alignment.gap_mm >= 0.0);
  }
}

TEST_CASE("target errors: missing pose and no intersection") {
  const SceneLayout layout = top_target_layout();
  const RigidTransform away{Rotation::about_axis(Vec3::UnitX(), M_PI), Vec3(0.0, 0.0, 120.0)};
  try {
    estimate_target(body(RigidTransform{}), body(away), layout);
    FAIL("expected NoIntersection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoIntersection);
  }
  try {
    estimate_target(std::nullopt, body(away), layout);
    FAIL("expected MissingPose");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingPose);
  }
  CHECK_THROWS_AS(estimate_target(body({}), body({}), layout, "nope"), Error);
}

TEST_CASE("mesh head intersection and normal") {
  HeadModel mesh;
  mesh.kind = HeadModel::Kind::kMesh;
  const double h = 85.0;
  mesh.triangles = {Triangle{Vec3(-50, -50, h), Vec3(50, -50, h), Vec3(50, 50, h)},
                    Triangle{Vec3(-50, -50, h), Vec3(50, 50, h), Vec3(-50, 50, h)},
                    Triangle{Vec3(-50, -50, 0), Vec3(50, 50, 0), Vec3(50, -50, 0)}};
  const auto hit = intersect_head(mesh, Vec3(3.0, -7.0, 120.0), Vec3(0.0, 0.0, -1.0));
  REQUIRE(hit);
  CHECK((*hit - Vec3(3.0, -7.0, h)).norm() < 1e-12);
  CHECK((head_normal(mesh, *hit) - Vec3::UnitZ()).norm() < 1e-12);
  CHECK_FALSE(intersect_head(mesh, Vec3(80.0, 0.0, 120.0), Vec3(0.0, 0.0, -1.0)));
  CHECK_FALSE(intersect_head(mesh, Vec3(0.0, 0.0, 120.0), Vec3(0.0, 0.0, 1.0)));

  HeadModel sphere;
  const auto s = intersect_head(sphere, Vec3(0.0, 200.0, 0.0), Vec3(0.0, -1.0, 0.0));
  REQUIRE(s);
  CHECK((*s - Vec3(0.0, 85.0, 0.0)).norm() < 1e-12);
  CHECK((head_normal(sphere, *s) - Vec3::UnitY()).norm() < 1e-12);
}

TEST_CASE("noiseless head and coil poses equal ground truth") {
  Simulator sim(still(0.0));
  const SceneLayout& layout = sim.config().layout;
  for (int i = 0; i < 5; ++i) {
    const SimFrame f = sim.next();
    const auto est = solve_all(layout, f.detections);
    const HeadPose head = solve_head_pose(est, layout, f.detections);
    const CoilPose coil = solve_coil_pose(est, layout, f.detections);
    CHECK((head.pose.translation - f.truth.head_to_world.translation).norm() < 1e-6);
    CHECK(head.pose.rotation.angle_to(f.truth.head_to_world.rotation) < 1e-6);
    CHECK((coil.pose.translation - f.truth.coil_to_world.translation).norm() < 1e-6);
    CHECK(coil.pose.rotation.angle_to(f.truth.coil_to_world.rotation) < 1e-6);
    CHECK(head.tag_count == 4);
    CHECK_FALSE(head.reduced_confidence);

    // Fusion alone, without the multi-camera refinement.
    const HeadPose fused = solve_head_pose(est, layout);
    CHECK((fused.pose.translation - f.truth.head_to_world.translation).norm() < 1e-6);
  }
}

TEST_CASE("frame chain recovers the tag registry on noiseless data") {
  Simulator sim(still(0.0));
  const SceneLayout& layout = sim.config().layout;
  const SimFrame f = sim.next();
  const auto est = solve_all(layout, f.detections);
  const HeadPose head = solve_head_pose(est, layout, f.detections);
  for (const auto& e : est) {
    const TagMount* m = layout.find_head_tag(e.tag_id);
    if (!m) continue;
    const RigidTransform tag_to_head =
        head.pose.inverse() * layout.camera(e.camera_id).extrinsic * e.pose;
    CHECK((tag_to_head.translation - m->tag_to_body.translation).norm() < 1e-6);
    CHECK(tag_to_head.rotation.angle_to(m->tag_to_body.rotation) < 1e-6);
  }
}

TEST_CASE("cheekbone-only frames give a reduced-confidence head pose") {
  Simulator sim(still(kTunedSigmaPx));
  const SceneLayout& layout = sim.config().layout;
  const SimFrame f = sim.next();
  const auto dets = without(f.detections, {2, 3});
  const auto est = solve_all(layout, dets);
  const HeadPose head = solve_head_pose(est, layout, dets);
  CHECK(head.tag_count == 2);
  CHECK(head.reduced_confidence);
  CHECK((head.pose.translation - f.truth.head_to_world.translation).norm() < 1.0);

  const auto none = without(f.detections, {0, 1, 2, 3});
  try {
    solve_head_pose(solve_all(layout, none), layout, none);
    FAIL("expected NoHeadTags");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoHeadTags);
  }
  const auto no_coil = without(f.detections, {layout.coil_tag.tag_id});
  CHECK_THROWS_AS(solve_coil_pose(solve_all(layout, no_coil), layout, no_coil), Error);
}

TEST_CASE("dropping one head tag at most doubles the error") {
  SimConfig sc;
  Simulator sim(sc);
  const SceneLayout& layout = sim.config().layout;
  const int frames = 500;
  const std::vector<std::set<int>> drops = {{}, {0}, {1}, {2}, {3}};
  std::vector<double> head_err(drops.size(), 0.0), target_err(drops.size(), 0.0);
  TrackerOptions opts;
  for (int i = 0; i < frames; ++i) {
    const SimFrame f = sim.next();
    REQUIRE(f.truth.target);
    for (std::size_t k = 0; k < drops.size(); ++k) {
      FrameInput in;
      in.frame_id = f.truth.frame_id;
      in.detections = without(f.detections, drops[k]);
      const FrameResult r = process_frame(in, layout, opts);
      REQUIRE(r.head);
      REQUIRE(r.target);
      head_err[k] += (r.head->pose.translation - f.truth.head_to_world.translation).norm();
      target_err[k] += (r.target->point - *f.truth.target).norm();
    }
  }
  for (std::size_t k = 1; k < drops.size(); ++k) {
    MESSAGE("drop tag " << *drops[k].begin() << ": head " << head_err[k] / head_err[0]
                        << "x, target " << target_err[k] / target_err[0] << "x");
    CHECK(target_err[k] <= 2.0 * target_err[0]);
    CHECK(head_err[k] <= 2.0 * head_err[0]);
  }
}

TEST_CASE("moving the whole world leaves the head-frame target unchanged") {
  SimConfig sc;
  Simulator sim(sc);
  const SceneLayout layout = sim.config().layout;
  SceneLayout moved = layout;
  const RigidTransform g{Rotation::about_axis(Vec3(0.3, -1.0, 0.4), 1.1), Vec3(250.0, -80.0, 1200.0)};
  for (auto& cam : moved.cameras) cam.extrinsic = g * cam.extrinsic;
  TrackerOptions opts;
  for (int i = 0; i < 20; ++i) {
    const SimFrame f = sim.next();
    FrameInput in;
    in.frame_id = f.truth.frame_id;
    in.detections = f.detections;
    const FrameResult a = process_frame(in, layout, opts);
    const FrameResult b = process_frame(in, moved, opts);
    REQUIRE(a.target);
    REQUIRE(b.target);
    CHECK((a.target->point - b.target->point).norm() < 1e-9);
    CHECK((g * a.head->pose).translation.isApprox(b.head->pose.translation, 1e-9));
  }
}

TEST_CASE("body cost gradient matches central differences") {
  SimConfig sc;
  Simulator sim(sc);
  const SceneLayout& layout = sim.config().layout;
  const SimFrame f = sim.next();
  RigidTransform x = f.truth.head_to_world;
  x = perturb_pose(x, (Eigen::Matrix<double, 6, 1>() << 0.01, -0.02, 0.015, 1.5, -0.8, 2.0).finished());
  const auto g = body_cost_gradient(layout, layout.head_tags, f.detections, x);
  double worst = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double h = i < 3 ? 1e-6 : 1e-4;
    Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
    d[i] = h;
    const double fd = (body_cost(layout, layout.head_tags, f.detections, perturb_pose(x, d)) -
                       body_cost(layout, layout.head_tags, f.detections, perturb_pose(x, -d))) /
                      (2.0 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i])));
  }
  CHECK(worst < 1e-4);

  const RigidTransform refined = refine_body_pose(layout, layout.head_tags, f.detections, x);
  CHECK(body_cost(layout, layout.head_tags, f.detections, refined) <
        body_cost(layout, layout.head_tags, f.detections, x));
  CHECK((refined.translation - f.truth.head_to_world.translation).norm() < 0.5);
}

TEST_CASE("layout validation") {
  SceneLayout layout = default_layout();
  CHECK_NOTHROW(layout.validate());
  CHECK(layout.head_tags.size() == 4);
  CHECK(layout.targets.size() == 15);
  CHECK_THROWS_AS(layout.camera(9), Error);

  SceneLayout dup = layout;
  dup.coil_tag.tag_id = dup.head_tags[0].tag_id;
  CHECK_THROWS_AS(dup.validate(), Error);
  SceneLayout same = layout;
  same.head_tags[1].tag_to_body = same.head_tags[0].tag_to_body;
  CHECK_THROWS_AS(same.validate(), Error);
}
