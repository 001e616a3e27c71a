#pragma once
/**
 * @file sim.hpp
 * @brief Synthetic three-camera scene: ground-truth motion, visibility,
 *        noisy corner detections, and the Monte-Carlo oracles used to
 *        validate the solvers.
 */

#include "navtrace/calibration.hpp"
#include "navtrace/frames.hpp"
#include "navtrace/pose.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace navtrace {

/// Corner noise that puts the mean per-detection reprojection error of the
/// default scene near 0.065 px.
inline constexpr double kTunedSigmaPx = 0.104;

struct MotionConfig {
  /// Head sway: sinusoid applied about the world origin.
  double sway_amplitude_mm = 5.0;
  double sway_amplitude_deg = 2.0;
  double sway_frequency_hz = 0.1;
  /// Coil tremor: first-order low-pass filtered Gaussian noise per axis,
  /// amplitude is the stationary standard deviation.
  double tremor_amplitude_mm = 0.5;
  double tremor_amplitude_deg = 0.25;
  double tremor_cutoff_hz = 2.0;

  static MotionConfig none() { return {0.0, 0.0, 0.1, 0.0, 0.0, 2.0}; }
};

struct OcclusionWindow {
  int camera_id = 0;
  /// -1 hides every tag from the camera.
  int tag_id = -1;
  std::int64_t first_frame = 0;
  std::int64_t last_frame = 0;  // inclusive

  bool covers(int camera, int tag, std::int64_t frame) const {
    return camera == camera_id && (tag_id < 0 || tag == tag_id) && frame >= first_frame &&
           frame <= last_frame;
  }
};

struct SimConfig {
  SceneLayout layout = default_layout();
  double sigma_px = kTunedSigmaPx;
  MotionConfig motion;
  std::vector<OcclusionWindow> occlusions;
  double frame_rate_hz = 30.0;
  std::int64_t frames = 300;
  std::uint64_t seed = 42;
  /// head -> world at rest
  RigidTransform head_rest;
  /// coil -> head at rest; defaults to 10 mm above the first planned target.
  std::optional<RigidTransform> coil_rest;
  /// Tags seen more obliquely than this are not detected.
  double max_view_angle_deg = 75.0;
  /// Copied into every ground-truth frame; names a run when several are
  /// concatenated for evaluation.
  std::string segment;

  /// Throws Error(kInvalidArgument).
  void validate() const;
};

struct TrueCorners {
  int camera_id = 0;
  int tag_id = 0;
  std::array<Pixel, 4> corners{};
};

struct GroundTruthFrame {
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  std::string segment;
  RigidTransform head_to_world;
  RigidTransform coil_to_world;
  /// Stimulation point in the head frame; empty when the coil misses.
  std::optional<Vec3> target;
  std::vector<TrueCorners> corners;
};

struct SimFrame {
  GroundTruthFrame truth;
  std::vector<TagDetection> detections;
};

/// Frame-by-frame generator. Streams are independent seeded engines (one
/// for motion, one per camera), so output is bit-identical for a given
/// seed and configuration.
class Simulator {
 public:
  explicit Simulator(SimConfig config);

  SimFrame next();
  std::int64_t frame_index() const { return frame_; }
  const SimConfig& config() const { return config_; }
  /// Composes a delta onto the resting coil pose, in the coil frame.
  void nudge_coil(const RigidTransform& delta);
  /// Tags that have not yet been visible in any camera.
  std::vector<int> never_visible() const;

 private:
  SimConfig config_;
  RigidTransform coil_rest_;
  std::int64_t frame_ = 0;
  std::mt19937_64 motion_rng_;
  std::vector<std::mt19937_64> noise_rng_;
  Eigen::Matrix<double, 6, 1> tremor_ = Eigen::Matrix<double, 6, 1>::Zero();
  std::vector<int> seen_;
};

struct SimOutput {
  std::vector<TagDetection> detections;
  std::vector<GroundTruthFrame> truth;
  /// "TagNeverVisible" warnings, one per tag.
  std::vector<std::string> warnings;
};

SimOutput simulate(const SimConfig& config);

/// True when the tag is in front of the camera, faces it within the view
/// angle, and all four corners land inside the image.
bool tag_visible(const CameraModel& cam, const TagSpec& spec, const RigidTransform& tag_to_camera,
                 double max_view_angle_deg);

struct MonteCarloSamples {
  /// estimate minus truth, camera frame (mm)
  std::vector<Vec3> translation_error;
  /// rotation vector of R_est * R_true^T (rad)
  std::vector<Vec3> rotation_error;
};

/// Resamples the corner noise `trials` times and re-solves each draw with a
/// plain Gauss-Newton on a finite-difference Jacobian started at the true
/// pose. Shares no code with solve_tag_pose beyond projection. Throws
/// Error(kInvalidArgument) for fewer than 100 trials.
MonteCarloSamples monte_carlo_pose_oracle(const CameraModel& cam, const TagSpec& spec,
                                          const RigidTransform& true_pose, double sigma_px,
                                          int trials, std::uint64_t seed);

struct CheckerboardViews {
  std::vector<CheckerboardObservation> observations;
  /// board -> camera, one per observation
  std::vector<RigidTransform> poses;
};

/// Random tilted board poses 450-900 mm from the camera, fully in frame.
CheckerboardViews generate_checkerboard_views(const CameraModel& cam, const BoardSpec& board,
                                              int views, double sigma_px, std::uint64_t seed);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace navtrace
