#include "navtrace/fusion.hpp"

#include "navtrace/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace navtrace {

namespace {

double floored(double sigma) { return std::max(sigma, kSigmaFloorMm); }

const CameraModel& find_camera(std::span<const CameraModel> cameras, int camera_id) {
  const auto it = std::find_if(cameras.begin(), cameras.end(),
                               [&](const CameraModel& c) { return c.camera_id == camera_id; });
  if (it == cameras.end()) {
    throw Error(ErrorCode::kFrameMismatch, "unknown camera " + std::to_string(camera_id));
  }
  return *it;
}

}  // namespace

FusedScalar fuse_distances(std::span<const DistanceEstimate> estimates) {
  if (estimates.empty()) throw Error(ErrorCode::kEmptyInput, "no distance estimates");
  if (estimates.size() == 1 && estimates[0].sigma_mm > 0.0 && std::isfinite(estimates[0].sigma_mm)) {
    return {estimates[0].distance_mm, estimates[0].sigma_mm, {{estimates[0].camera_id, 1.0}}};
  }
  double sum_w = 0.0;
  double sum_wd = 0.0;
  for (const auto& e : estimates) {
    if (!(e.sigma_mm > 0.0) || !std::isfinite(e.sigma_mm)) {
      throw Error(ErrorCode::kNonPositiveSigma,
                  "camera " + std::to_string(e.camera_id) + " has non-positive sigma");
    }
    const double w = 1.0 / (e.sigma_mm * e.sigma_mm);
    sum_w += w;
    sum_wd += w * e.distance_mm;
  }
  FusedScalar out;
  out.distance_mm = sum_wd / sum_w;
  out.sigma_mm = std::sqrt(1.0 / sum_w);
  out.weights.reserve(estimates.size());
  for (const auto& e : estimates) {
    out.weights.push_back({e.camera_id, 1.0 / (e.sigma_mm * e.sigma_mm) / sum_w});
  }
  return out;
}

Eigen::Quaterniond chordal_mean(std::span<const Eigen::Quaterniond> quaternions,
                                std::span<const double> weights) {
  if (quaternions.empty() || quaternions.size() != weights.size()) {
    throw Error(ErrorCode::kNoEstimates, "chordal mean needs matching, non-empty inputs");
  }
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (std::size_t i = 0; i < quaternions.size(); ++i) {
    const Eigen::Vector4d q = quaternions[i].normalized().coeffs();
    m += weights[i] * q * q.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(m);
  Eigen::Vector4d v = eig.eigenvectors().col(3);
  if (v(3) < 0.0) v = -v;  // coeffs() order is (x, y, z, w)
  return Eigen::Quaterniond(v(3), v(0), v(1), v(2)).normalized();
}

PoseHypothesis to_world(const PoseEstimate& estimate, const CameraModel& camera) {
  PoseHypothesis h;
  h.camera_id = estimate.camera_id;
  h.tag_id = estimate.tag_id;
  h.pose = camera.extrinsic * estimate.pose;
  const Mat3 r = camera.extrinsic.rotation.matrix();
  const Vec3 var = estimate.sigma_t.cwiseProduct(estimate.sigma_t);
  h.sigma_t = (r.cwiseProduct(r) * var).cwiseSqrt();
  h.sigma_distance = estimate.sigma_distance;
  return h;
}

FusedPose fuse_hypotheses(std::span<const PoseHypothesis> hypotheses) {
  if (hypotheses.empty()) throw Error(ErrorCode::kNoEstimates, "no pose hypotheses");

  FusedPose out;
  Vec3 sum_w = Vec3::Zero();
  Vec3 sum_wt = Vec3::Zero();
  double sum_wd = 0.0;
  std::vector<Eigen::Quaterniond> quats;
  std::vector<double> rot_weights;
  quats.reserve(hypotheses.size());
  rot_weights.reserve(hypotheses.size());
  for (const auto& h : hypotheses) {
    for (int a = 0; a < 3; ++a) {
      const double s = floored(h.sigma_t[a]);
      const double w = 1.0 / (s * s);
      sum_w[a] += w;
      sum_wt[a] += w * h.pose.translation[a];
    }
    const double sd = floored(h.sigma_distance);
    sum_wd += 1.0 / (sd * sd);
    quats.push_back(h.pose.rotation.quaternion());
    rot_weights.push_back(1.0 / (sd * sd));
    if (std::find(out.camera_ids.begin(), out.camera_ids.end(), h.camera_id) ==
        out.camera_ids.end()) {
      out.camera_ids.push_back(h.camera_id);
    }
  }
  std::sort(out.camera_ids.begin(), out.camera_ids.end());
  out.camera_count = static_cast<int>(out.camera_ids.size());

  out.pose.translation = sum_wt.cwiseQuotient(sum_w);
  out.sigma_t = sum_w.cwiseInverse().cwiseSqrt();
  out.sigma_fused = std::sqrt(1.0 / sum_wd);
  out.pose.rotation = Rotation::from_quaternion(chordal_mean(quats, rot_weights));

  double total = 0.0;
  double dispersion = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    dispersion += rot_weights[i] * hypotheses[i].pose.rotation.angle_to(out.pose.rotation);
    total += rot_weights[i];
  }
  out.rotation_dispersion_deg = rad_to_deg(dispersion / total);
  return out;
}

FusedPose fuse_poses(std::span<const PoseEstimate> estimates,
                     std::span<const CameraModel> cameras) {
  if (estimates.empty()) throw Error(ErrorCode::kNoEstimates, "no pose estimates");
  std::vector<PoseHypothesis> hyps;
  hyps.reserve(estimates.size());
  for (const auto& e : estimates) {
    if (e.tag_id != estimates.front().tag_id || e.frame_id != estimates.front().frame_id) {
      throw Error(ErrorCode::kFrameMismatch, "estimates span several tags or frames");
    }
    hyps.push_back(to_world(e, find_camera(cameras, e.camera_id)));
  }
  return fuse_hypotheses(hyps);
}

}  // namespace navtrace
