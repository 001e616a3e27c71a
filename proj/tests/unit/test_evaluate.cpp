#include "doctest.h"

#include "navtrace/error.hpp"
#include "navtrace/evaluate.hpp"
#include "navtrace/report.hpp"

#include <cmath>

using namespace navtrace;

TEST_CASE("summary statistics fixture") {
  const std::vector<double> xs{10.0, 1.0, 3.0, 2.0};
  const SummaryStats s = summarize(xs);
  // mean 4, deviations -3 -2 -1 6: m2 = 12.5, m3 = 45.
  CHECK(s.count == 4);
  CHECK(s.mean == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(s.sd == doctest::Approx(std::sqrt(50.0 / 3.0)).epsilon(1e-15));
  CHECK(s.skew == doctest::Approx(45.0 / std::pow(12.5, 1.5)).epsilon(1e-14));
  CHECK(s.min == 1.0);
  CHECK(s.max == 10.0);
  CHECK(s.median == 2.5);
  CHECK(s.p95 == doctest::Approx(3.0 + 0.85 * 7.0).epsilon(1e-15));

  const SummaryStats flat = summarize(std::vector<double>{2.0, 2.0, 2.0});
  CHECK(flat.sd == 0.0);
  CHECK(flat.skew == 0.0);
  CHECK(summarize(std::vector<double>{}).count == 0);
}

TEST_CASE("histogram bins cover the range") {
  const std::vector<double> xs{0.0, 0.1, 0.5, 0.99, 1.0};
  const Histogram h = histogram(xs, 4);
  CHECK(h.lo == 0.0);
  CHECK(h.hi == 1.0);
  REQUIRE(h.counts.size() == 4);
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[2] == 1);
  CHECK(h.counts[3] == 2);
  const Histogram one = histogram(std::vector<double>{3.0, 3.0}, 5);
  CHECK(one.counts[0] == 2);
}

TEST_CASE("presets place the coil and label segments") {
  const SceneLayout layout = default_layout();
  const auto five = preset_runs(Preset::kFivePosition, layout, 1);
  REQUIRE(five.size() == 5);
  const Vec3 cam = layout.cameras.front().extrinsic.translation;
  for (std::size_t k = 0; k < five.size(); ++k) {
    const Vec3 coil = (five[k].head_rest * *five[k].coil_rest).translation;
    CHECK((coil - cam).norm() == doctest::Approx(kPrecisionDistancesMm[k]).epsilon(1e-12));
    CHECK(five[k].sigma_px == kTunedSigmaPx);
  }
  const auto grid = preset_runs(Preset::kTargetGrid, layout, 1);
  REQUIRE(grid.size() == layout.targets.size());
  CHECK(grid[4].segment == layout.targets[4].name);
  CHECK(preset_runs(Preset::kZeroNoise, layout, 1).at(0).sigma_px == 0.0);
  CHECK(parse_preset("five-position") == Preset::kFivePosition);
  CHECK_FALSE(parse_preset("six-position"));
}

TEST_CASE("concatenated runs keep frame ids and time increasing") {
  SimConfig a;
  a.frames = 5;
  a.segment = "a";
  SimConfig b = a;
  b.segment = "b";
  b.seed = 9;
  const std::vector<SimConfig> runs{a, b};
  const SimOutput out = simulate_runs(runs);
  REQUIRE(out.truth.size() == 10);
  for (std::size_t i = 0; i < out.truth.size(); ++i) {
    CHECK(out.truth[i].frame_id == static_cast<std::int64_t>(i));
    if (i > 0) CHECK(out.truth[i].timestamp_ms > out.truth[i - 1].timestamp_ms);
  }
  CHECK(out.truth[4].segment == "a");
  CHECK(out.truth[5].segment == "b");
  for (const auto& d : out.detections) {
    CHECK(d.timestamp_ms == out.truth[static_cast<std::size_t>(d.frame_id)].timestamp_ms);
  }
}

TEST_CASE("evaluation joins truth and aggregates are recomputable") {
  const SceneLayout layout = default_layout();
  const SimOutput sim = simulate_runs(preset_runs(Preset::kTargetGrid, layout, 3));
  EvaluationOptions opts;
  opts.measure_latency = false;
  const EvaluationReport r = evaluate(sim.truth, sim.detections, layout, opts);
  CHECK(r.records.size() == sim.truth.size());
  CHECK(r.targets.size() == layout.targets.size());
  CHECK(r.cameras.size() == 3);
  CHECK(r.frames_without_target == 0);
  CHECK(r.target_error_mm.median < 1.0);

  const EvaluationReport again = summarize_records(r.records, r.reference_camera, 20);
  CHECK(encode(again).dump() == encode(r).dump());
  CHECK(encode(evaluate(sim.truth, sim.detections, layout, opts)).dump() == encode(r).dump());
}

TEST_CASE("mismatched streams are rejected") {
  SimConfig sc;
  sc.frames = 10;
  const SimOutput sim = simulate(sc);
  const SceneLayout& layout = sc.layout;
  const std::vector<GroundTruthFrame> head(sim.truth.begin(), sim.truth.begin() + 5);
  try {
    evaluate(head, sim.detections, layout);
    FAIL("expected StreamMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStreamMismatch);
  }
  CHECK_THROWS_AS(evaluate({}, sim.detections, layout), Error);
  std::vector<GroundTruthFrame> swapped = sim.truth;
  std::swap(swapped[2], swapped[3]);
  CHECK_THROWS_AS(evaluate(swapped, sim.detections, layout), Error);
  // Frames without detections are kept and reported without a target.
  const EvaluationReport r = evaluate(sim.truth, {}, layout);
  CHECK(r.frames_without_target == 10);
}

TEST_CASE("zero-noise preset reports zero error") {
  const SceneLayout layout = default_layout();
  const SimOutput sim = simulate_runs(preset_runs(Preset::kZeroNoise, layout, 5));
  const EvaluationReport r = evaluate(sim.truth, sim.detections, layout);
  CHECK(r.target_error_mm.max < 1e-6);
  CHECK(r.coil_translation_error_mm.max < 1e-6);
  CHECK(r.head_rotation_error_deg.max < 1e-6);
  for (const auto& c : r.cameras) CHECK(c.e_proj_px.max < 1e-6);
}
