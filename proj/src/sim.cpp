#include "navtrace/sim.hpp"

#include "navtrace/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace navtrace {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

std::array<Pixel, 4> with_noise(const std::array<Pixel, 4>& corners, double sigma,
                                std::mt19937_64& rng) {
  std::array<Pixel, 4> out = corners;
  if (sigma <= 0.0) return out;
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& c : out) {
    c.u += n(rng);
    c.v += n(rng);
  }
  return out;
}

}  // namespace

void SimConfig::validate() const {
  layout.validate();
  if (!(sigma_px >= 0.0) || !std::isfinite(sigma_px)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma_px must be non-negative");
  }
  if (!(frame_rate_hz > 0.0)) throw Error(ErrorCode::kInvalidArgument, "frame rate must be positive");
  if (frames < 0) throw Error(ErrorCode::kInvalidArgument, "frame count must be non-negative");
  if (!(max_view_angle_deg > 0.0 && max_view_angle_deg <= 90.0)) {
    throw Error(ErrorCode::kInvalidArgument, "view angle must lie in (0, 90] degrees");
  }
  if (!(motion.tremor_cutoff_hz > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tremor cutoff must be positive");
  }
}

bool tag_visible(const CameraModel& cam, const TagSpec& spec, const RigidTransform& tag_to_camera,
                 double max_view_angle_deg) {
  const Vec3 center = tag_to_camera.translation;
  if (!(center.z() > 0.0)) return false;
  const Vec3 normal = tag_to_camera.rotation.rotate(Vec3::UnitZ());
  // Facing: the normal points back towards the camera center.
  const double cos_view = -normal.dot(center) / center.norm();
  if (cos_view <= std::cos(deg_to_rad(max_view_angle_deg))) return false;
  for (const Vec3& corner : spec.corners()) {
    const Vec3 p = tag_to_camera.apply(corner);
    if (!(p.z() > 0.0)) return false;
    if (project(cam, p).out_of_frame) return false;
  }
  return true;
}

Simulator::Simulator(SimConfig config)
    : config_(std::move(config)), motion_rng_(seeded(config_.seed, 0)) {
  config_.validate();
  if (config_.coil_rest) {
    coil_rest_ = *config_.coil_rest;
  } else if (!config_.layout.targets.empty()) {
    coil_rest_ = coil_over(config_.layout, config_.layout.targets.front().point, 10.0);
  } else {
    coil_rest_ = {Rotation::identity(), Vec3(0.0, 0.0, config_.layout.head.radius_mm + 10.0)};
  }
  for (const auto& cam : config_.layout.cameras) {
    noise_rng_.push_back(seeded(config_.seed, 1000 + static_cast<std::uint64_t>(cam.camera_id)));
  }
  for (const auto& m : config_.layout.head_tags) seen_.push_back(m.tag_id);
  seen_.push_back(config_.layout.coil_tag.tag_id);
}

void Simulator::nudge_coil(const RigidTransform& delta) { coil_rest_ = coil_rest_ * delta; }

std::vector<int> Simulator::never_visible() const { return seen_; }

SimFrame Simulator::next() {
  const MotionConfig& m = config_.motion;
  const double dt = 1.0 / config_.frame_rate_hz;
  const double t = static_cast<double>(frame_) * dt;

  SimFrame out;
  out.truth.frame_id = frame_;
  out.truth.timestamp_ms = 1000.0 * t;
  out.truth.segment = config_.segment;

  const double phase = 2.0 * std::numbers::pi * m.sway_frequency_hz * t;
  const RigidTransform sway{
      Rotation::about_axis(Vec3(0.2, 1.0, 0.1), deg_to_rad(m.sway_amplitude_deg) *
                                                     std::sin(phase + 0.5)),
      m.sway_amplitude_mm * std::sin(phase) * Vec3(1.0, 0.2, 0.3).normalized()};
  out.truth.head_to_world = sway * config_.head_rest;

  // Discrete first-order low-pass with unit stationary variance per axis.
  const double a = std::exp(-2.0 * std::numbers::pi * m.tremor_cutoff_hz * dt);
  std::normal_distribution<double> n(0.0, 1.0);
  Vec6 drive;
  for (int i = 0; i < 6; ++i) drive[i] = n(motion_rng_);
  tremor_ = frame_ == 0 ? drive : Vec6(a * tremor_ + std::sqrt(1.0 - a * a) * drive);
  const RigidTransform tremor{
      Rotation::from_rotation_vector(deg_to_rad(m.tremor_amplitude_deg) * tremor_.head<3>()),
      m.tremor_amplitude_mm * tremor_.tail<3>()};
  out.truth.coil_to_world = out.truth.head_to_world * coil_rest_ * tremor;
  out.truth.target =
      stimulation_point(out.truth.head_to_world, out.truth.coil_to_world, config_.layout);

  struct Body {
    const TagMount* mount;
    const RigidTransform* body_to_world;
  };
  std::vector<Body> bodies;
  for (const auto& mount : config_.layout.head_tags) {
    bodies.push_back({&mount, &out.truth.head_to_world});
  }
  bodies.push_back({&config_.layout.coil_tag, &out.truth.coil_to_world});

  for (std::size_t c = 0; c < config_.layout.cameras.size(); ++c) {
    const CameraModel& cam = config_.layout.cameras[c];
    const RigidTransform world_to_camera = cam.extrinsic.inverse();
    for (const Body& body : bodies) {
      const TagSpec spec = body.mount->spec();
      const RigidTransform tag_to_camera =
          world_to_camera * *body.body_to_world * body.mount->tag_to_body;
      if (!tag_visible(cam, spec, tag_to_camera, config_.max_view_angle_deg)) continue;
      TrueCorners truth{cam.camera_id, spec.tag_id, project_tag(cam, spec, tag_to_camera)};
      TagDetection det;
      det.camera_id = cam.camera_id;
      det.frame_id = frame_;
      det.timestamp_ms = out.truth.timestamp_ms;
      det.tag_id = spec.tag_id;
      // Noise is drawn before the occlusion test so a schedule never shifts
      // the remaining stream.
      det.corners = with_noise(truth.corners, config_.sigma_px, noise_rng_[c]);
      const bool occluded = std::any_of(
          config_.occlusions.begin(), config_.occlusions.end(),
          [&](const OcclusionWindow& w) { return w.covers(cam.camera_id, spec.tag_id, frame_); });
      if (occluded) continue;
      out.truth.corners.push_back(truth);
      out.detections.push_back(det);
      std::erase(seen_, spec.tag_id);
    }
  }
  ++frame_;
  return out;
}

SimOutput simulate(const SimConfig& config) {
  Simulator sim(config);
  SimOutput out;
  out.truth.reserve(static_cast<std::size_t>(config.frames));
  for (std::int64_t i = 0; i < config.frames; ++i) {
    SimFrame f = sim.next();
    out.detections.insert(out.detections.end(), f.detections.begin(), f.detections.end());
    out.truth.push_back(std::move(f.truth));
  }
  for (const int tag : sim.never_visible()) {
    out.warnings.push_back("TagNeverVisible: tag " + std::to_string(tag));
  }
  return out;
}

MonteCarloSamples monte_carlo_pose_oracle(const CameraModel& cam, const TagSpec& spec,
                                          const RigidTransform& true_pose, double sigma_px,
                                          int trials, std::uint64_t seed) {
  if (trials < 100) throw Error(ErrorCode::kInvalidArgument, "oracle needs at least 100 trials");
  std::mt19937_64 rng = seeded(seed, 7);
  const auto model = spec.corners();
  const auto clean = project_tag(cam, spec, true_pose);

  // Parameters: rotation vector relative to the true rotation, translation.
  const auto residual = [&](const Vec6& x, const std::array<Pixel, 4>& obs) {
    const Mat3 r = (Rotation::from_rotation_vector(x.head<3>()) * true_pose.rotation).matrix();
    Eigen::Matrix<double, 8, 1> res;
    for (int i = 0; i < 4; ++i) {
      const Vec3 p = r * model[i] + x.tail<3>();
      const Pixel px = project(cam, p).pixel;
      res(2 * i) = px.u - obs[i].u;
      res(2 * i + 1) = px.v - obs[i].v;
    }
    return res;
  };

  MonteCarloSamples out;
  for (int trial = 0; trial < trials; ++trial) {
    const auto obs = with_noise(clean, sigma_px, rng);
    Vec6 x;
    x << 0.0, 0.0, 0.0, true_pose.translation;
    for (int it = 0; it < 30; ++it) {
      const Eigen::Matrix<double, 8, 1> r0 = residual(x, obs);
      Eigen::Matrix<double, 8, 6> j;
      for (int k = 0; k < 6; ++k) {
        const double h = k < 3 ? 1e-7 : 1e-5;
        Vec6 xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        j.col(k) = (residual(xp, obs) - residual(xm, obs)) / (2.0 * h);
      }
      const Vec6 step = -(j.transpose() * j).ldlt().solve(j.transpose() * r0);
      x += step;
      if (step.norm() < 1e-13) break;
    }
    const Rotation est = Rotation::from_rotation_vector(x.head<3>()) * true_pose.rotation;
    out.translation_error.push_back(x.tail<3>() - true_pose.translation);
    out.rotation_error.push_back((est * true_pose.rotation.inverse()).rotation_vector());
  }
  return out;
}

CheckerboardViews generate_checkerboard_views(const CameraModel& cam, const BoardSpec& board,
                                              int views, double sigma_px, std::uint64_t seed) {
  std::mt19937_64 pose_rng = seeded(seed, 11);
  std::mt19937_64 noise_rng = seeded(seed, 12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto model = board.points();
  const Vec3 centroid = Vec3((board.cols - 1) * board.square_mm, (board.rows - 1) * board.square_mm,
                             0.0) * 0.5;
  std::normal_distribution<double> n(0.0, sigma_px > 0.0 ? sigma_px : 1.0);

  CheckerboardViews out;
  int attempts = 0;
  while (static_cast<int>(out.observations.size()) < views) {
    if (++attempts > 1000 * std::max(views, 1)) {
      throw Error(ErrorCode::kInvalidArgument, "board does not fit the image");
    }
    const double depth = 450.0 + 450.0 * unit(pose_rng);
    const double x = (unit(pose_rng) - 0.5) * 0.9 * cam.image_width / cam.fx;
    const double y = (unit(pose_rng) - 0.5) * 0.9 * cam.image_height / cam.fy;
    const double tilt = deg_to_rad(15.0 + 35.0 * unit(pose_rng));
    const double tilt_dir = 2.0 * std::numbers::pi * unit(pose_rng);
    const double spin = 2.0 * std::numbers::pi * unit(pose_rng);
    // Board +z faces away from the camera so its corner grid reads
    // row-major in the image.
    const Rotation r = Rotation::about_axis(Vec3(std::cos(tilt_dir), std::sin(tilt_dir), 0.0), tilt) *
                       Rotation::about_axis(Vec3::UnitZ(), spin);
    const RigidTransform pose{r, Vec3(x * depth, y * depth, depth) - r.rotate(centroid)};

    CheckerboardObservation obs;
    obs.view_id = static_cast<int>(out.observations.size());
    obs.board = board;
    bool ok = true;
    for (const Vec3& p : model) {
      const Vec3 pc = pose.apply(p);
      if (!(pc.z() > 0.0)) {
        ok = false;
        break;
      }
      Pixel px = project(cam, pc).pixel;
      if (sigma_px > 0.0) {
        px.u += n(noise_rng);
        px.v += n(noise_rng);
      }
      if (!cam.in_frame(px)) {
        ok = false;
        break;
      }
      obs.corners.push_back(px);
    }
    if (!ok) continue;
    out.observations.push_back(std::move(obs));
    out.poses.push_back(pose);
  }
  return out;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptyInput, "KS test needs two samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  // Kolmogorov survival series Q(l) = 2 sum (-1)^(k-1) exp(-2 k^2 l^2).
  double q = 0.0;
  if (lambda < 0.2) {
    q = 1.0;
  } else {
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      q += term;
      if (std::abs(term) < 1e-12) break;
      sign = -sign;
    }
    q = std::clamp(2.0 * q, 0.0, 1.0);
  }
  return {d, q};
}

}  // namespace navtrace
