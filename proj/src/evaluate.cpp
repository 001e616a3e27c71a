#include "navtrace/evaluate.hpp"

#include "navtrace/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace navtrace {

namespace {

double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

template <typename Get>
std::vector<double> collect(const std::vector<FrameRecord>& records, Get get,
                            const std::string* segment = nullptr) {
  std::vector<double> out;
  for (const auto& r : records) {
    if (segment != nullptr && r.segment != *segment) continue;
    const std::optional<double> v = get(r);
    if (v) out.push_back(*v);
  }
  return out;
}

Vec3 camera_center(const SceneLayout& layout, int camera_id) {
  return layout.camera(camera_id).extrinsic.translation;
}

}  // namespace

SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  s.sd = values.size() > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
  m2 /= n;
  m3 /= n;
  s.skew = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = quantile(sorted, 0.5);
  s.p95 = quantile(sorted, 0.95);
  return s;
}

Histogram histogram(std::span<const double> values, int bins) {
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(std::max(bins, 1)), 0);
  if (values.empty()) return h;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  h.lo = *lo;
  h.hi = *hi;
  const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
  for (double v : values) {
    std::size_t k = 0;
    if (width > 0.0) {
      k = std::min(static_cast<std::size_t>((v - h.lo) / width), h.counts.size() - 1);
    }
    ++h.counts[k];
  }
  return h;
}

std::vector<CameraReprojection> camera_reprojection(std::span<const EstimateSample> samples) {
  std::map<int, std::vector<double>> by_camera;
  for (const auto& s : samples) by_camera[s.camera_id].push_back(s.e_proj_px);
  std::vector<CameraReprojection> out;
  for (const auto& [id, values] : by_camera) out.push_back({id, summarize(values)});
  return out;
}

EvaluationReport summarize_records(std::vector<FrameRecord> records, int reference_camera,
                                   int histogram_bins) {
  EvaluationReport report;
  report.reference_camera = reference_camera;
  report.records = std::move(records);
  const auto& recs = report.records;

  std::vector<EstimateSample> samples;
  for (const auto& r : recs) samples.insert(samples.end(), r.estimates.begin(), r.estimates.end());
  report.cameras = camera_reprojection(samples);

  std::vector<std::string> segments;
  for (const auto& r : recs) {
    if (std::find(segments.begin(), segments.end(), r.segment) == segments.end()) {
      segments.push_back(r.segment);
    }
  }
  for (const auto& seg : segments) {
    PositionPrecision p;
    p.segment = seg;
    const auto d = collect(recs, [](const FrameRecord& r) { return r.coil_distance_mm; }, &seg);
    const auto a = collect(recs, [](const FrameRecord& r) { return r.coil_rotation_deg; }, &seg);
    const auto td = collect(
        recs, [](const FrameRecord& r) { return std::optional(r.true_coil_distance_mm); }, &seg);
    const auto ta = collect(
        recs, [](const FrameRecord& r) { return std::optional(r.true_coil_rotation_deg); }, &seg);
    p.distance_mm = summarize(d);
    p.rotation_deg = summarize(a);
    p.distance_histogram = histogram(d, histogram_bins);
    p.rotation_histogram = histogram(a, histogram_bins);
    p.true_distance_mm = summarize(td).mean;
    p.true_rotation_deg = summarize(ta).mean;
    report.positions.push_back(std::move(p));

    const auto e = collect(recs, [](const FrameRecord& r) { return r.target_error_mm; }, &seg);
    report.targets.push_back({seg, summarize(e)});
  }

  report.target_error_mm =
      summarize(collect(recs, [](const FrameRecord& r) { return r.target_error_mm; }));
  report.head_translation_error_mm =
      summarize(collect(recs, [](const FrameRecord& r) { return r.head_translation_error_mm; }));
  report.head_rotation_error_deg =
      summarize(collect(recs, [](const FrameRecord& r) { return r.head_rotation_error_deg; }));
  report.coil_translation_error_mm =
      summarize(collect(recs, [](const FrameRecord& r) { return r.coil_translation_error_mm; }));
  report.coil_rotation_error_deg =
      summarize(collect(recs, [](const FrameRecord& r) { return r.coil_rotation_error_deg; }));
  report.latency_ms = summarize(
      collect(recs, [](const FrameRecord& r) { return std::optional(r.latency_ms); }));
  for (const auto& r : recs) {
    if (!r.target_error_mm) ++report.frames_without_target;
  }
  return report;
}

EvaluationReport evaluate(std::span<const GroundTruthFrame> truth,
                          std::span<const TagDetection> detections, const SceneLayout& layout,
                          const EvaluationOptions& options) {
  if (truth.empty()) throw Error(ErrorCode::kStreamMismatch, "ground truth is empty");
  for (std::size_t i = 1; i < truth.size(); ++i) {
    if (truth[i].frame_id <= truth[i - 1].frame_id) {
      throw Error(ErrorCode::kStreamMismatch,
                  "ground truth frame_ids not increasing at " + std::to_string(truth[i].frame_id));
    }
  }
  std::map<std::int64_t, std::vector<TagDetection>> frames;
  for (const auto& f : truth) frames[f.frame_id];
  for (const auto& d : detections) {
    auto it = frames.find(d.frame_id);
    if (it == frames.end()) {
      throw Error(ErrorCode::kStreamMismatch,
                  "detection frame_id " + std::to_string(d.frame_id) + " has no ground truth");
    }
    it->second.push_back(d);
  }

  const Vec3 ref = camera_center(layout, options.reference_camera);
  Tracker tracker(layout, options.tracker);
  std::vector<FrameRecord> records;
  records.reserve(truth.size());
  for (const auto& gt : truth) {
    const auto start = std::chrono::steady_clock::now();
    const FrameResult r =
        tracker.process(gt.frame_id, gt.timestamp_ms, std::move(frames[gt.frame_id]));
    const auto stop = std::chrono::steady_clock::now();

    FrameRecord rec;
    rec.frame_id = gt.frame_id;
    rec.timestamp_ms = gt.timestamp_ms;
    rec.segment = gt.segment;
    if (options.measure_latency) {
      rec.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    }
    rec.true_coil_distance_mm = (gt.coil_to_world.translation - ref).norm();
    rec.true_coil_rotation_deg = rad_to_deg(gt.coil_to_world.rotation.angle());
    if (r.head) {
      rec.head_translation_error_mm =
          (r.head->pose.translation - gt.head_to_world.translation).norm();
      rec.head_rotation_error_deg =
          rad_to_deg(r.head->pose.rotation.angle_to(gt.head_to_world.rotation));
    }
    if (r.coil) {
      rec.coil_translation_error_mm =
          (r.coil->pose.translation - gt.coil_to_world.translation).norm();
      rec.coil_rotation_error_deg =
          rad_to_deg(r.coil->pose.rotation.angle_to(gt.coil_to_world.rotation));
      rec.coil_distance_mm = (r.coil->pose.translation - ref).norm();
      rec.coil_rotation_deg = rad_to_deg(r.coil->pose.rotation.angle());
      rec.sigma_fused_mm = r.coil->sigma_fused;
    }
    if (r.target) {
      rec.sigma_fused_mm = r.target->sigma_fused;
      if (gt.target) rec.target_error_mm = (r.target->point - *gt.target).norm();
    }
    for (const auto& c : r.cameras) {
      if (c.status == CameraStatus::kTracked) ++rec.cameras_tracked;
    }
    for (const auto& e : r.estimates) {
      // Stale estimates were already counted in the frame that observed them.
      if (e.frame_id != gt.frame_id) continue;
      rec.estimates.push_back({e.camera_id, e.tag_id, e.distance, e.e_proj});
    }
    rec.errors = r.errors;
    records.push_back(std::move(rec));
  }
  return summarize_records(std::move(records), options.reference_camera, options.histogram_bins);
}

std::string_view to_string(Preset preset) {
  switch (preset) {
    case Preset::kZeroNoise: return "zero-noise";
    case Preset::kFivePosition: return "five-position";
    case Preset::kTargetGrid: return "target-grid";
  }
  return "unknown";
}

std::optional<Preset> parse_preset(std::string_view name) {
  for (Preset p : {Preset::kZeroNoise, Preset::kFivePosition, Preset::kTargetGrid}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

std::vector<SimConfig> preset_runs(Preset preset, const SceneLayout& layout, std::uint64_t seed) {
  std::vector<SimConfig> runs;
  SimConfig base;
  base.layout = layout;
  base.seed = seed;
  switch (preset) {
    case Preset::kZeroNoise: {
      base.sigma_px = 0.0;
      base.motion = MotionConfig::none();
      base.frames = 100;
      base.segment = "static";
      runs.push_back(base);
      break;
    }
    case Preset::kFivePosition: {
      base.motion = MotionConfig::none();
      base.frames = 100;
      if (layout.targets.empty()) throw Error(ErrorCode::kInvalidArgument, "layout has no targets");
      const RigidTransform coil_rest = coil_over(layout, layout.targets.front().point, 10.0);
      base.coil_rest = coil_rest;
      const Vec3 cam = camera_center(layout, layout.cameras.front().camera_id);
      const Vec3 coil = coil_rest.translation;
      const Vec3 toward = (cam - coil).normalized();
      const double rest = (cam - coil).norm();
      for (std::size_t k = 0; k < kPrecisionDistancesMm.size(); ++k) {
        SimConfig c = base;
        c.seed = seed + k;
        c.head_rest.translation = toward * (rest - kPrecisionDistancesMm[k]);
        c.segment = "P" + std::to_string(k + 1) + "_" +
                    std::to_string(static_cast<int>(kPrecisionDistancesMm[k])) + "mm";
        runs.push_back(std::move(c));
      }
      break;
    }
    case Preset::kTargetGrid: {
      base.frames = 40;
      for (std::size_t k = 0; k < layout.targets.size(); ++k) {
        SimConfig c = base;
        c.seed = seed + k;
        c.coil_rest = coil_over(layout, layout.targets[k].point, 10.0);
        c.segment = layout.targets[k].name;
        runs.push_back(std::move(c));
      }
      break;
    }
  }
  return runs;
}

SimOutput simulate_runs(std::span<const SimConfig> runs) {
  SimOutput out;
  std::int64_t frame_offset = 0;
  double time_offset = 0.0;
  for (const auto& cfg : runs) {
    SimOutput part = simulate(cfg);
    for (auto& d : part.detections) {
      d.frame_id += frame_offset;
      d.timestamp_ms += time_offset;
      out.detections.push_back(d);
    }
    for (auto& t : part.truth) {
      t.frame_id += frame_offset;
      t.timestamp_ms += time_offset;
      out.truth.push_back(std::move(t));
    }
    for (auto& w : part.warnings) {
      out.warnings.push_back(cfg.segment.empty() ? w : cfg.segment + ": " + w);
    }
    frame_offset += cfg.frames;
    time_offset += 1000.0 * static_cast<double>(cfg.frames) / cfg.frame_rate_hz;
  }
  return out;
}

std::vector<EstimateSample> reprojection_sweep(const SceneLayout& layout, double sigma_px,
                                               int per_camera, double min_depth_mm,
                                               double max_depth_mm, std::uint64_t seed) {
  if (per_camera <= 0 || !(min_depth_mm > 0.0) || !(max_depth_mm >= min_depth_mm) ||
      !(sigma_px >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid reprojection sweep parameters");
  }
  const TagSpec spec = layout.head_tags.empty() ? layout.coil_tag.spec()
                                                : layout.head_tags.front().spec();
  std::vector<EstimateSample> out;
  for (const auto& cam : layout.cameras) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(cam.camera_id));
    std::uniform_real_distribution<double> depth(min_depth_mm, max_depth_mm);
    std::uniform_real_distribution<double> u(0.1 * cam.image_width, 0.9 * cam.image_width);
    std::uniform_real_distribution<double> v(0.1 * cam.image_height, 0.9 * cam.image_height);
    std::uniform_real_distribution<double> tilt(0.0, deg_to_rad(40.0));
    std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, sigma_px > 0.0 ? sigma_px : 1.0);
    const Rotation facing = Rotation::about_axis(Vec3::UnitX(), std::numbers::pi);
    int kept = 0;
    int attempts = 0;
    while (kept < per_camera) {
      if (++attempts > 100 * per_camera) {
        throw Error(ErrorCode::kInvalidArgument, "reprojection sweep found no visible poses");
      }
      const Vec2 xy = undistort(cam, {u(rng), v(rng)});
      const double z = depth(rng);
      const double phi = heading(rng);
      const Rotation r =
          Rotation::about_axis(Vec3(std::cos(phi), std::sin(phi), 0.0), tilt(rng)) * facing;
      const RigidTransform pose{r, Vec3(xy.x() * z, xy.y() * z, z)};
      if (!tag_visible(cam, spec, pose, 75.0)) continue;
      TagDetection det;
      det.camera_id = cam.camera_id;
      det.tag_id = spec.tag_id;
      det.corners = project_tag(cam, spec, pose);
      if (sigma_px > 0.0) {
        for (auto& c : det.corners) {
          c.u += noise(rng);
          c.v += noise(rng);
        }
      }
      const PoseEstimate e = solve_tag_pose(cam, spec, det);
      out.push_back({cam.camera_id, spec.tag_id, e.distance, e.e_proj});
      ++kept;
    }
  }
  return out;
}

}  // namespace navtrace
