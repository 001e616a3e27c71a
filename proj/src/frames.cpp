#include "navtrace/frames.hpp"

#include "navtrace/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace navtrace {

namespace {

Vec3 direction(double azimuth_deg, double elevation_deg) {
  const double az = deg_to_rad(azimuth_deg);
  const double el = deg_to_rad(elevation_deg);
  return {std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el)};
}

// Rotation whose third column is `z`, with x kept horizontal when possible.
Mat3 frame_with_z(const Vec3& z_axis) {
  const Vec3 z = z_axis.normalized();
  Vec3 x = Vec3::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  Mat3 r;
  r << x, z.cross(x), z;
  return r;
}

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

const TagMount* find_mount(std::span<const TagMount> mounts, int tag_id) {
  for (const auto& m : mounts) {
    if (m.tag_id == tag_id) return &m;
  }
  return nullptr;
}

struct BodyLinearization {
  double cost = 0.0;
  Mat6 h = Mat6::Zero();
  Vec6 g = Vec6::Zero();
  bool valid = true;
};

BodyLinearization linearize_body(const SceneLayout& layout, std::span<const TagMount> mounts,
                                 std::span<const TagDetection> detections,
                                 const RigidTransform& body_to_world, bool with_jacobian) {
  BodyLinearization out;
  const Mat3 rb = body_to_world.rotation.matrix();
  for (const auto& det : detections) {
    const TagMount* mount = find_mount(mounts, det.tag_id);
    if (mount == nullptr) continue;
    const CameraModel& cam = layout.camera(det.camera_id);
    const RigidTransform world_to_camera = cam.extrinsic.inverse();
    const Mat3 rc = world_to_camera.rotation.matrix();
    const auto model = mount->spec().corners();
    for (int i = 0; i < 4; ++i) {
      const Vec3 arm = rb * mount->tag_to_body.apply(model[i]);
      const Vec3 p = rc * (arm + body_to_world.translation) + world_to_camera.translation;
      if (!(p.z() > 0.0)) {
        out.valid = false;
        return out;
      }
      Eigen::Matrix<double, 2, 3> dp;
      const Projection proj = project(cam, p, dp);
      const Vec2 r = proj.pixel.vec() - det.corners[i].vec();
      out.cost += r.squaredNorm();
      if (with_jacobian) {
        Eigen::Matrix<double, 2, 6> j;
        j.leftCols<3>() = -dp * rc * skew(arm);
        j.rightCols<3>() = dp * rc;
        out.h += j.transpose() * j;
        out.g += j.transpose() * r;
      }
    }
  }
  out.valid = out.valid && std::isfinite(out.cost);
  return out;
}

BodyPose solve_body(std::span<const PoseEstimate> estimates, const SceneLayout& layout,
                    std::span<const TagMount> mounts, std::span<const TagDetection> detections,
                    ErrorCode missing) {
  std::vector<PoseHypothesis> hyps;
  std::set<int> tags;
  for (const auto& e : estimates) {
    const TagMount* mount = find_mount(mounts, e.tag_id);
    if (mount == nullptr) continue;
    PoseHypothesis h = to_world(e, layout.camera(e.camera_id));
    h.pose = h.pose * mount->tag_to_body.inverse();
    hyps.push_back(h);
    tags.insert(e.tag_id);
  }
  if (hyps.empty()) {
    throw Error(missing, missing == ErrorCode::kNoHeadTags ? "no head tag estimates"
                                                           : "no coil tag estimates");
  }
  const FusedPose f = fuse_hypotheses(hyps);
  BodyPose out;
  out.pose = refine_body_pose(layout, mounts, detections, f.pose);
  out.sigma_t = f.sigma_t;
  out.sigma_fused = f.sigma_fused;
  out.rotation_dispersion_deg = f.rotation_dispersion_deg;
  out.camera_count = f.camera_count;
  out.tag_ids.assign(tags.begin(), tags.end());
  out.tag_count = static_cast<int>(tags.size());
  out.reduced_confidence = tags.size() < mounts.size();
  if (tags.size() == 1 && mounts.size() > 1) {
    out.sigma_t *= kSingleTagInflation;
    out.sigma_fused *= kSingleTagInflation;
  }
  return out;
}

}  // namespace

void SceneLayout::validate() const {
  if (cameras.empty()) throw Error(ErrorCode::kInvalidArgument, "layout has no cameras");
  std::set<int> camera_ids;
  for (const auto& c : cameras) {
    c.validate();
    if (!camera_ids.insert(c.camera_id).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate camera id " + std::to_string(c.camera_id));
    }
  }
  std::set<int> tag_ids{coil_tag.tag_id};
  for (std::size_t i = 0; i < head_tags.size(); ++i) {
    if (!tag_ids.insert(head_tags[i].tag_id).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate tag id " + std::to_string(head_tags[i].tag_id));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if ((head_tags[i].tag_to_body.translation - head_tags[j].tag_to_body.translation).norm() <
          1e-6) {
        throw Error(ErrorCode::kInvalidArgument, "head tags share a position");
      }
    }
  }
  for (const auto& m : head_tags) {
    if (!(m.side_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tag side must be positive");
  }
  if (!(coil_tag.side_mm > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tag side must be positive");
  }
  if (head.kind == HeadModel::Kind::kSphere && !(head.radius_mm > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "head sphere radius must be positive");
  }
  if (head.kind == HeadModel::Kind::kMesh && head.triangles.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "head mesh has no triangles");
  }
}

const CameraModel& SceneLayout::camera(int camera_id) const {
  for (const auto& c : cameras) {
    if (c.camera_id == camera_id) return c;
  }
  throw Error(ErrorCode::kFrameMismatch, "unknown camera " + std::to_string(camera_id));
}

const TagMount* SceneLayout::find_head_tag(int tag_id) const {
  for (const auto& m : head_tags) {
    if (m.tag_id == tag_id) return &m;
  }
  return nullptr;
}

const PlannedTarget* SceneLayout::find_target(const std::string& name) const {
  for (const auto& t : targets) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

TagMount sphere_mount(int tag_id, double radius_mm, double azimuth_deg, double elevation_deg,
                      double normal_azimuth_deg, double normal_elevation_deg) {
  TagMount m;
  m.tag_id = tag_id;
  m.tag_to_body.translation = radius_mm * direction(azimuth_deg, elevation_deg);
  m.tag_to_body.rotation =
      Rotation::from_matrix(frame_with_z(direction(normal_azimuth_deg, normal_elevation_deg)));
  return m;
}

RigidTransform look_at(const Vec3& position, const Vec3& target) {
  const Vec3 f = (target - position).normalized();
  const Vec3 x = f.cross(Vec3::UnitY()).normalized();
  Mat3 r;
  r << x, f.cross(x), f;
  return {Rotation::from_matrix(r), position};
}

SceneLayout default_layout() {
  SceneLayout layout;
  const double f = CameraModel::focal_from_hfov(1920, 65.0);
  const double ring = 700.0;
  const double height = 400.0;
  const std::array<double, 3> azimuths{0.0, 60.0, -60.0};
  for (int i = 0; i < 3; ++i) {
    CameraModel cam;
    cam.camera_id = i;
    cam.fx = cam.fy = f;
    cam.cx = 960.0;
    cam.cy = 640.0;
    cam.image_width = 1920;
    cam.image_height = 1280;
    const double az = deg_to_rad(azimuths[i]);
    cam.extrinsic = look_at(Vec3(ring * std::sin(az), height, ring * std::cos(az)), Vec3::Zero());
    layout.cameras.push_back(cam);
  }

  const double r = layout.head.radius_mm;
  layout.head_tags = {
      sphere_mount(0, r, 35.0, -25.0, 25.0, 0.0),     // left cheekbone
      sphere_mount(1, r, -35.0, -25.0, -25.0, 0.0),   // right cheekbone
      sphere_mount(2, r, 0.0, 35.0, 0.0, 20.0),       // forehead
      sphere_mount(3, r, 180.0, 55.0, 180.0, 80.0),   // back of the head
  };
  layout.coil_tag.tag_id = 4;

  int n = 1;
  for (const double el : {20.0, 45.0, 70.0}) {
    for (const double az : {-60.0, -30.0, 0.0, 30.0, 60.0}) {
      const std::string name = (n < 10 ? "T0" : "T") + std::to_string(n);
      layout.targets.push_back({name, r * direction(az, el)});
      ++n;
    }
  }
  return layout;
}

HeadPose solve_head_pose(std::span<const PoseEstimate> estimates, const SceneLayout& layout,
                         std::span<const TagDetection> detections) {
  return solve_body(estimates, layout, layout.head_tags, detections, ErrorCode::kNoHeadTags);
}

CoilPose solve_coil_pose(std::span<const PoseEstimate> estimates, const SceneLayout& layout,
                         std::span<const TagDetection> detections) {
  return solve_body(estimates, layout, std::span<const TagMount>(&layout.coil_tag, 1), detections,
                    ErrorCode::kNoCoilTag);
}

double body_cost(const SceneLayout& layout, std::span<const TagMount> mounts,
                 std::span<const TagDetection> detections, const RigidTransform& body_to_world) {
  const BodyLinearization lin = linearize_body(layout, mounts, detections, body_to_world, false);
  return lin.valid ? lin.cost : std::numeric_limits<double>::infinity();
}

Eigen::Matrix<double, 6, 1> body_cost_gradient(const SceneLayout& layout,
                                               std::span<const TagMount> mounts,
                                               std::span<const TagDetection> detections,
                                               const RigidTransform& body_to_world) {
  return 2.0 * linearize_body(layout, mounts, detections, body_to_world, true).g;
}

RigidTransform refine_body_pose(const SceneLayout& layout, std::span<const TagMount> mounts,
                                std::span<const TagDetection> detections,
                                const RigidTransform& init) {
  RigidTransform best = init;
  double cost = body_cost(layout, mounts, detections, best);
  if (!std::isfinite(cost)) return best;
  double lambda = 1e-3;
  for (int iter = 0; iter < 50; ++iter) {
    if (cost < 1e-30) break;
    const BodyLinearization lin = linearize_body(layout, mounts, detections, best, true);
    if (lin.h.isZero()) break;
    bool improved = false;
    bool converged = false;
    while (lambda < 1e16) {
      Mat6 damped = lin.h;
      damped.diagonal() += lambda * (lin.h.diagonal().array() + 1e-12).matrix();
      const Vec6 step = -damped.ldlt().solve(lin.g);
      const RigidTransform candidate = perturb_pose(best, step);
      const double trial = body_cost(layout, mounts, detections, candidate);
      if (trial < cost) {
        converged = (cost - trial) < 1e-12 * cost;
        best = candidate;
        cost = trial;
        lambda = std::max(lambda * 0.1, 1e-15);
        improved = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved || converged) break;
  }
  // Cost comparisons only resolve the minimum to ~sqrt(eps); finish with
  // plain Gauss-Newton steps, which are limited by the gradient instead.
  for (int iter = 0; iter < 3; ++iter) {
    const BodyLinearization lin = linearize_body(layout, mounts, detections, best, true);
    const Vec6 step = -lin.h.ldlt().solve(lin.g);
    if (!step.allFinite() || step.head<3>().norm() > 1e-6 || step.tail<3>().norm() > 1e-4) break;
    best = perturb_pose(best, step);
  }
  return best;
}

std::optional<Vec3> intersect_head(const HeadModel& head, const Vec3& origin, const Vec3& dir) {
  const Vec3 d = dir.normalized();
  if (head.kind == HeadModel::Kind::kSphere) {
    const Vec3 oc = origin - head.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - head.radius_mm * head.radius_mm;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t < 0.0) t = -b + sq;
    if (t < 0.0) return std::nullopt;
    return origin + t * d;
  }
  // Moller-Trumbore over every triangle; nearest hit in front of the origin.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : head.triangles) {
    const Vec3 e1 = tri[1] - tri[0];
    const Vec3 e2 = tri[2] - tri[0];
    const Vec3 p = d.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Vec3 s = origin - tri[0];
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 q = s.cross(e1);
    const double v = d.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) continue;
    const double t = e2.dot(q) * inv;
    if (t >= 0.0 && t < best) best = t;
  }
  if (!std::isfinite(best)) return std::nullopt;
  return origin + best * d;
}

Vec3 head_normal(const HeadModel& head, const Vec3& p) {
  if (head.kind == HeadModel::Kind::kSphere) return (p - head.center).normalized();
  const Triangle* nearest = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : head.triangles) {
    const double d = (p - (tri[0] + tri[1] + tri[2]) / 3.0).squaredNorm();
    if (d < best) {
      best = d;
      nearest = &tri;
    }
  }
  if (nearest == nullptr) return Vec3::UnitZ();
  const auto& t = *nearest;
  return (t[1] - t[0]).cross(t[2] - t[0]).normalized();
}

std::optional<Vec3> stimulation_point(const RigidTransform& head_to_world,
                                      const RigidTransform& coil_to_world,
                                      const SceneLayout& layout) {
  const RigidTransform coil_in_head = head_to_world.inverse() * coil_to_world;
  const Vec3 origin = coil_in_head.apply(Vec3(0.0, 0.0, -layout.coil_offset_mm));
  const Vec3 dir = coil_in_head.rotation.rotate(-Vec3::UnitZ());
  return intersect_head(layout.head, origin, dir);
}

TargetEstimate estimate_target(const std::optional<HeadPose>& head,
                               const std::optional<CoilPose>& coil, const SceneLayout& layout,
                               const std::string& target_name) {
  if (!head || !coil) {
    throw Error(ErrorCode::kMissingPose, !head ? "head pose missing" : "coil pose missing");
  }
  TargetEstimate out;
  out.coil_in_head = head->pose.inverse() * coil->pose;
  const auto hit = stimulation_point(head->pose, coil->pose, layout);
  if (!hit) throw Error(ErrorCode::kNoIntersection, "coil axis misses the head model");
  out.point = *hit;
  out.sigma_fused = std::hypot(head->sigma_fused, coil->sigma_fused);

  const PlannedTarget* target = nullptr;
  if (!target_name.empty()) {
    target = layout.find_target(target_name);
    if (target == nullptr) {
      throw Error(ErrorCode::kInvalidArgument, "unknown planned target '" + target_name + "'");
    }
  } else if (!layout.targets.empty()) {
    target = &layout.targets.front();
  }
  if (target != nullptr) {
    out.target_name = target->name;
    const Vec3 n = head_normal(layout.head, target->point);
    const Vec3 offset = out.point - target->point;
    out.alignment.lateral_mm = (offset - offset.dot(n) * n).norm();
    const Vec3 origin = out.coil_in_head.apply(Vec3(0.0, 0.0, -layout.coil_offset_mm));
    out.alignment.gap_mm = std::abs((origin - target->point).dot(n));
    const Vec3 ray = out.coil_in_head.rotation.rotate(-Vec3::UnitZ());
    out.alignment.tilt_deg = rad_to_deg(std::atan2(ray.cross(-n).norm(), ray.dot(-n)));
  }
  return out;
}

RigidTransform coil_over(const SceneLayout& layout, const Vec3& point, double standoff_mm) {
  const Vec3 n = head_normal(layout.head, point);
  return {Rotation::from_matrix(frame_with_z(n)), point + standoff_mm * n};
}

}  // namespace navtrace
