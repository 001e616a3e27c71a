#pragma once
/**
 * @file evaluate.hpp
 * @brief Offline evaluation harness: replays a detection stream through the
 *        tracker, joins it with ground truth and summarizes reprojection,
 *        precision, latency and target accuracy.
 *
 * Every aggregate in an EvaluationReport is a function of its per-frame
 * records (see summarize_records), so a report can be re-derived from its
 * own raw data. Only the latency fields are measured rather than computed.
 */
#include "navtrace/pipeline.hpp"
#include "navtrace/sim.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace navtrace {

struct EstimateSample {
  int camera_id = 0;
  int tag_id = 0;
  /// Camera-to-tag distance (mm).
  double distance_mm = 0.0;
  double e_proj_px = 0.0;
};

struct FrameRecord {
  std::int64_t frame_id = 0;
  double timestamp_ms = 0.0;
  std::string segment;
  std::optional<double> head_translation_error_mm;
  std::optional<double> head_rotation_error_deg;
  std::optional<double> coil_translation_error_mm;
  std::optional<double> coil_rotation_error_deg;
  /// Estimated minus true stimulation point, head frame.
  std::optional<double> target_error_mm;
  /// Estimated coil origin distance from the reference camera center.
  std::optional<double> coil_distance_mm;
  /// Geodesic angle of the estimated coil rotation from the world axes.
  std::optional<double> coil_rotation_deg;
  double true_coil_distance_mm = 0.0;
  double true_coil_rotation_deg = 0.0;
  /// Target sigma when a target was cast, else the coil sigma.
  std::optional<double> sigma_fused_mm;
  int cameras_tracked = 0;
  std::vector<EstimateSample> estimates;
  std::vector<std::string> errors;
  double latency_ms = 0.0;
};

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  /// Sample standard deviation (n - 1).
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  /// Sample skewness m3 / m2^1.5; zero for constant data.
  double skew = 0.0;
};

/// Quantiles interpolate linearly between order statistics. Empty input
/// yields a zero count.
SummaryStats summarize(std::span<const double> values);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> counts;
};

Histogram histogram(std::span<const double> values, int bins);

struct CameraReprojection {
  int camera_id = 0;
  SummaryStats e_proj_px;
};

struct PositionPrecision {
  std::string segment;
  SummaryStats distance_mm;
  SummaryStats rotation_deg;
  Histogram distance_histogram;
  Histogram rotation_histogram;
  double true_distance_mm = 0.0;
  double true_rotation_deg = 0.0;
};

struct TargetAccuracy {
  std::string segment;
  SummaryStats error_mm;
};

struct EvaluationReport {
  int reference_camera = 0;
  std::vector<FrameRecord> records;
  std::vector<CameraReprojection> cameras;
  /// One entry per segment, in order of first appearance.
  std::vector<PositionPrecision> positions;
  std::vector<TargetAccuracy> targets;
  SummaryStats target_error_mm;
  SummaryStats head_translation_error_mm;
  SummaryStats head_rotation_error_deg;
  SummaryStats coil_translation_error_mm;
  SummaryStats coil_rotation_error_deg;
  SummaryStats latency_ms;
  std::int64_t frames_without_target = 0;
};

struct EvaluationOptions {
  TrackerOptions tracker;
  /// Camera whose center is the origin of the distance metric.
  int reference_camera = 0;
  bool measure_latency = true;
  int histogram_bins = 20;
};

/// Recomputes every aggregate from `records`.
EvaluationReport summarize_records(std::vector<FrameRecord> records, int reference_camera,
                                   int histogram_bins);

/// Throws Error(kStreamMismatch) when truth is empty or unordered, or a
/// detection's frame_id has no ground-truth frame.
EvaluationReport evaluate(std::span<const GroundTruthFrame> truth,
                          std::span<const TagDetection> detections, const SceneLayout& layout,
                          const EvaluationOptions& options = {});

enum class Preset { kZeroNoise, kFivePosition, kTargetGrid };

std::string_view to_string(Preset preset);
std::optional<Preset> parse_preset(std::string_view name);

/// Coil distances from camera 0 of the five static precision positions.
inline constexpr std::array<double, 5> kPrecisionDistancesMm = {540.0, 650.0, 750.0, 805.0, 990.0};

/// Simulator runs of a preset, one per segment:
///  - zero-noise: 100 static frames without corner noise.
///  - five-position: 100 static frames at tuned noise per distance in
///    kPrecisionDistancesMm, the head moved along the line from camera 0
///    to the coil.
///  - target-grid: 40 frames per planned target with the coil 10 mm above
///    it, default motion and tuned noise.
std::vector<SimConfig> preset_runs(Preset preset, const SceneLayout& layout, std::uint64_t seed);

/// Runs every config and concatenates the outputs; frame ids and
/// timestamps continue across runs.
SimOutput simulate_runs(std::span<const SimConfig> runs);

/// Per-camera single-tag solves at random poses with depths uniform in
/// [min_depth_mm, max_depth_mm], random in-frame positions and tilts up to
/// 40 degrees. Only visible tags are kept.
std::vector<EstimateSample> reprojection_sweep(const SceneLayout& layout, double sigma_px,
                                               int per_camera, double min_depth_mm,
                                               double max_depth_mm, std::uint64_t seed);

std::vector<CameraReprojection> camera_reprojection(std::span<const EstimateSample> samples);

}  // namespace navtrace
