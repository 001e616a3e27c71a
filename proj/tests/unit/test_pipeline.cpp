#include "doctest.h"

#include "navtrace/pipeline.hpp"
#include "navtrace/sim.hpp"

#include <algorithm>
#include <random>

using namespace navtrace;

namespace {

std::vector<TagDetection> stream(std::int64_t frames) {
  SimConfig sc;
  sc.frames = frames;
  return simulate(sc).detections;
}

std::vector<DetectionGroup> assemble(FrameAssembler& a, const std::vector<TagDetection>& dets) {
  std::vector<DetectionGroup> out;
  for (const auto& d : dets) {
    for (auto& g : a.push(d)) out.push_back(std::move(g));
  }
  for (auto& g : a.flush()) out.push_back(std::move(g));
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST_CASE("in-order replay yields one group per frame") {
  const auto dets = stream(50);
  FrameAssembler a;
  const auto groups = assemble(a, dets);
  REQUIRE(groups.size() == 50);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    CHECK(groups[i].frame_id == static_cast<std::int64_t>(i));
    for (std::size_t k = 1; k < groups[i].detections.size(); ++k) {
      const auto& p = groups[i].detections[k - 1];
      const auto& q = groups[i].detections[k];
      CHECK(std::tie(p.camera_id, p.tag_id) < std::tie(q.camera_id, q.tag_id));
    }
  }
  CHECK(a.dropped() == 0);
}

TEST_CASE("records half a window late are still grouped with their frame") {
  const auto dets = stream(40);
  // Camera 2's records of frame k are moved behind the first half of
  // frame k + 1's records.
  std::vector<TagDetection> delayed;
  std::vector<TagDetection> held;
  std::int64_t current = -1;
  std::size_t seen_in_frame = 0;
  for (const auto& d : dets) {
    if (d.frame_id != current) {
      current = d.frame_id;
      seen_in_frame = 0;
    }
    if (d.camera_id == 2) {
      held.push_back(d);
      continue;
    }
    delayed.push_back(d);
    if (++seen_in_frame == 2) {
      for (const auto& h : held) {
        if (h.frame_id < d.frame_id) delayed.push_back(h);
      }
      std::erase_if(held, [&](const TagDetection& h) { return h.frame_id < d.frame_id; });
    }
  }
  delayed.insert(delayed.end(), held.begin(), held.end());
  REQUIRE(delayed.size() == dets.size());

  FrameAssembler reordered;
  const auto late_groups = assemble(reordered, delayed);
  FrameAssembler ordered;
  const auto groups = assemble(ordered, dets);
  CHECK(reordered.dropped() == 0);
  REQUIRE(late_groups.size() == groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    REQUIRE(late_groups[i].detections.size() == groups[i].detections.size());
    for (std::size_t k = 0; k < groups[i].detections.size(); ++k) {
      CHECK(late_groups[i].detections[k].camera_id == groups[i].detections[k].camera_id);
      CHECK(late_groups[i].detections[k].tag_id == groups[i].detections[k].tag_id);
    }
  }
}

TEST_CASE("records three windows late are dropped and counted") {
  const auto dets = stream(200);
  std::mt19937_64 rng(17);
  std::bernoulli_distribution pick(0.1);
  // Delayed records are re-inserted three frames later.
  std::vector<std::pair<std::int64_t, TagDetection>> keyed;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const bool late = pick(rng);
    const std::int64_t slot = dets[i].frame_id + (late ? 3 : 0);
    keyed.push_back({slot, dets[i]});
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  // Offline oracle: a record is lost once anything more than one frame
  // newer has been seen.
  std::int64_t expected = 0;
  std::int64_t newest = -1;
  std::vector<TagDetection> arrival;
  for (const auto& [slot, d] : keyed) {
    if (newest >= 0 && d.frame_id <= newest - 2) ++expected;
    newest = std::max(newest, d.frame_id);
    arrival.push_back(d);
  }
  FrameAssembler a(1);
  const auto groups = assemble(a, arrival);
  CHECK(expected > 0);
  CHECK(a.dropped() == expected);
  for (std::size_t i = 1; i < groups.size(); ++i) {
    CHECK(groups[i].frame_id > groups[i - 1].frame_id);
  }
}

TEST_CASE("cameras without fresh data go stale then occluded") {
  SimConfig sc;
  sc.frames = 10;
  sc.occlusions.push_back({1, -1, 3, 9});
  Simulator sim(sc);
  Tracker tracker(sc.layout);
  std::vector<CameraStatus> cam1;
  std::vector<double> sigma;
  for (int i = 0; i < 10; ++i) {
    const SimFrame f = sim.next();
    const FrameResult r = tracker.process(f.truth.frame_id, f.truth.timestamp_ms, f.detections);
    cam1.push_back(r.cameras.at(1).status);
    CHECK(r.cameras.at(0).status == CameraStatus::kTracked);
    REQUIRE(r.target);
    sigma.push_back(r.head->sigma_fused);
  }
  CHECK(cam1[2] == CameraStatus::kTracked);
  CHECK(cam1[3] == CameraStatus::kStale);
  CHECK(cam1[4] == CameraStatus::kStale);
  CHECK(cam1[5] == CameraStatus::kOccluded);
  CHECK(cam1[9] == CameraStatus::kOccluded);
  CHECK(sigma[6] > sigma[1]);
}

TEST_CASE("pipeline errors are reported per frame, never thrown") {
  const SceneLayout layout = default_layout();
  TrackerOptions opts;

  FrameInput empty;
  const FrameResult r0 = process_frame(empty, layout, opts);
  CHECK(contains(r0.errors, "NoHeadTags"));
  CHECK(contains(r0.errors, "NoCoilTag"));
  CHECK_FALSE(r0.target);

  SimConfig sc;
  Simulator sim(sc);
  const SimFrame f = sim.next();
  FrameInput in;
  in.detections = f.detections;
  TagDetection bad = f.detections.front();
  std::swap(bad.corners[0], bad.corners[1]);
  in.detections.front() = bad;
  TagDetection stranger = f.detections.front();
  stranger.tag_id = 42;
  in.detections.push_back(stranger);
  TagDetection nowhere = f.detections.back();
  nowhere.camera_id = 7;
  in.detections.push_back(nowhere);
  const FrameResult r = process_frame(in, layout, opts);
  CHECK(contains(r.errors, "BadCorners cam " + std::to_string(bad.camera_id) + " tag " +
                               std::to_string(bad.tag_id)));
  CHECK(contains(r.errors, "UnknownTag cam " + std::to_string(stranger.camera_id) + " tag 42"));
  CHECK(contains(r.errors, "FrameMismatch cam 7 tag " + std::to_string(nowhere.tag_id)));
  CHECK(r.head);
  CHECK(r.target);

  TrackerOptions other = opts;
  other.active_target = "T09";
  FrameInput good;
  good.detections = f.detections;
  const FrameResult t9 = process_frame(good, layout, other);
  REQUIRE(t9.target);
  CHECK(t9.target->target_name == "T09");
  other.active_target = "nope";
  CHECK(contains(process_frame(good, layout, other).errors, "InvalidArgument"));
}
