#include "navtrace/pipeline.hpp"

#include "navtrace/error.hpp"

#include <algorithm>
#include <chrono>
#include <tuple>

namespace navtrace {

namespace {

std::string describe(const Error& e, const TagDetection& det) {
  return std::string(to_string(e.code())) + " cam " + std::to_string(det.camera_id) + " tag " +
         std::to_string(det.tag_id);
}

std::optional<TagSpec> spec_for(const SceneLayout& layout, int tag_id) {
  if (const TagMount* m = layout.find_head_tag(tag_id)) return m->spec();
  if (layout.coil_tag.tag_id == tag_id) return layout.coil_tag.spec();
  return std::nullopt;
}

}  // namespace

std::string_view to_string(CameraStatus status) {
  switch (status) {
    case CameraStatus::kTracked: return "tracked";
    case CameraStatus::kStale: return "stale";
    case CameraStatus::kOccluded: return "occluded";
  }
  return "occluded";
}

FrameResult process_frame(const FrameInput& input, const SceneLayout& layout,
                          const TrackerOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  FrameResult out;
  out.frame_id = input.frame_id;
  out.timestamp_ms = input.timestamp_ms;
  out.cameras = input.cameras;

  std::vector<TagDetection> solved;
  for (const auto& det : input.detections) {
    const auto spec = spec_for(layout, det.tag_id);
    if (!spec) {
      out.errors.push_back("UnknownTag cam " + std::to_string(det.camera_id) + " tag " +
                           std::to_string(det.tag_id));
      continue;
    }
    try {
      out.estimates.push_back(solve_tag_pose(layout.camera(det.camera_id), *spec, det,
                                             options.solver));
      solved.push_back(det);
    } catch (const Error& e) {
      out.errors.push_back(describe(e, det));
    }
  }

  const std::span<const TagDetection> refine =
      options.joint_refinement ? std::span<const TagDetection>(solved)
                               : std::span<const TagDetection>();
  try {
    out.head = solve_head_pose(out.estimates, layout, refine);
  } catch (const Error& e) {
    out.errors.emplace_back(to_string(e.code()));
  }
  try {
    out.coil = solve_coil_pose(out.estimates, layout, refine);
  } catch (const Error& e) {
    out.errors.emplace_back(to_string(e.code()));
  }
  if (out.head && out.coil) {
    try {
      out.target = estimate_target(out.head, out.coil, layout, options.active_target);
    } catch (const Error& e) {
      out.errors.emplace_back(to_string(e.code()));
    }
  }
  out.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

StaleCache::StaleCache(std::vector<int> camera_ids, TrackerOptions options)
    : camera_ids_(std::move(camera_ids)), options_(std::move(options)) {}

FrameInput StaleCache::prepare(std::int64_t frame_id, double timestamp_ms,
                               std::vector<TagDetection> detections) {
  FrameInput in;
  in.frame_id = frame_id;
  in.timestamp_ms = timestamp_ms;
  const double window_ms = options_.stale_frames * options_.frame_period_ms;
  for (const int cam : camera_ids_) {
    std::vector<TagDetection> fresh;
    for (const auto& d : detections) {
      if (d.camera_id == cam) fresh.push_back(d);
    }
    CameraState state{cam, CameraStatus::kOccluded};
    if (!fresh.empty()) {
      state.status = CameraStatus::kTracked;
      last_[cam] = fresh;
      in.detections.insert(in.detections.end(), fresh.begin(), fresh.end());
    } else if (const auto it = last_.find(cam); it != last_.end()) {
      // Small slack so an exact multiple of the period still counts.
      if (timestamp_ms - it->second.front().timestamp_ms <= window_ms * (1.0 + 1e-9)) {
        state.status = CameraStatus::kStale;
        in.detections.insert(in.detections.end(), it->second.begin(), it->second.end());
      } else {
        last_.erase(it);
      }
    }
    in.cameras.push_back(state);
  }
  // Detections from cameras missing in the layout are passed through so the
  // pipeline reports them.
  for (const auto& d : detections) {
    if (std::find(camera_ids_.begin(), camera_ids_.end(), d.camera_id) == camera_ids_.end()) {
      in.detections.push_back(d);
    }
  }
  return in;
}

namespace {

std::vector<int> ids_of(const SceneLayout& layout) {
  std::vector<int> ids;
  for (const auto& c : layout.cameras) ids.push_back(c.camera_id);
  return ids;
}

}  // namespace

Tracker::Tracker(SceneLayout layout, TrackerOptions options)
    : layout_(std::move(layout)), options_(options), cache_(ids_of(layout_), options) {}

FrameResult Tracker::process(std::int64_t frame_id, double timestamp_ms,
                             std::vector<TagDetection> detections) {
  return process_frame(cache_.prepare(frame_id, timestamp_ms, std::move(detections)), layout_,
                       options_);
}

void Tracker::set_options(const TrackerOptions& options) {
  options_ = options;
  cache_.set_options(options);
}

std::vector<DetectionGroup> FrameAssembler::push(const TagDetection& det) {
  if ((newest_ && det.frame_id <= *newest_ - window_ - 1) ||
      (last_emitted_ && det.frame_id <= *last_emitted_)) {
    ++dropped_;
    return {};
  }
  newest_ = std::max(newest_.value_or(det.frame_id), det.frame_id);
  open_[det.frame_id].push_back(det);
  return close_through(*newest_ - window_ - 1);
}

std::vector<DetectionGroup> FrameAssembler::flush() {
  if (open_.empty()) return {};
  return close_through(open_.rbegin()->first);
}

std::vector<DetectionGroup> FrameAssembler::close_through(std::int64_t frame_id) {
  std::vector<DetectionGroup> out;
  while (!open_.empty() && open_.begin()->first <= frame_id) {
    auto node = open_.extract(open_.begin());
    DetectionGroup g;
    g.frame_id = node.key();
    g.detections = std::move(node.mapped());
    std::stable_sort(g.detections.begin(), g.detections.end(),
                     [](const TagDetection& a, const TagDetection& b) {
                       return std::tie(a.camera_id, a.tag_id) < std::tie(b.camera_id, b.tag_id);
                     });
    g.timestamp_ms = g.detections.front().timestamp_ms;
    for (const auto& d : g.detections) g.timestamp_ms = std::min(g.timestamp_ms, d.timestamp_ms);
    last_emitted_ = g.frame_id;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace navtrace
