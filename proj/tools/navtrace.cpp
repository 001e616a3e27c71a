// navtrace command-line entry point.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure. Failures
// print one JSON line to stderr: {"error": "<Code>", "message": "..."}.

#include "navtrace/calibration.hpp"
#include "navtrace/error.hpp"
#include "navtrace/evaluate.hpp"
#include "navtrace/io.hpp"
#include "navtrace/pipeline.hpp"
#include "navtrace/report.hpp"
#include "navtrace/server.hpp"
#include "navtrace/service.hpp"
#include "navtrace/wire.hpp"

#include <CLI11.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace navtrace;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int fail(std::string_view code, const std::string& message, int status) {
  std::cerr << io::Json{{"error", code}, {"message", message}}.dump() << std::endl;
  return status;
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoConvergence:
    case ErrorCode::kDiverged:
    case ErrorCode::kDivergedRefinement:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

// Layout from a file or the built-in default, with intrinsics replaced by
// calibration files given in camera order.
SceneLayout load_layout(const std::string& layout_path, const std::vector<std::string>& cameras) {
  SceneLayout layout = layout_path.empty() ? default_layout() : io::read_layout(layout_path);
  if (!cameras.empty() && cameras.size() != layout.cameras.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected " + std::to_string(layout.cameras.size()) + " camera files, got " +
                    std::to_string(cameras.size()));
  }
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const CameraModel calib = io::read_camera(cameras[i]);
    CameraModel& cam = layout.cameras[i];
    cam.fx = calib.fx;
    cam.fy = calib.fy;
    cam.cx = calib.cx;
    cam.cy = calib.cy;
    cam.distortion = calib.distortion;
    cam.image_width = calib.image_width;
    cam.image_height = calib.image_height;
  }
  layout.validate();
  return layout;
}

struct TrackerFlags {
  std::string target;
  bool fy_correction = false;
  bool no_joint = false;
  int stale_frames = 2;

  void add(CLI::App* app) {
    app->add_option("--target", target, "Planned target for alignment (default: first)");
    app->add_flag("--fy-correction", fy_correction, "Use f_y for the y and z sigma terms");
    app->add_flag("--no-joint", no_joint, "Disable multi-camera body refinement");
    app->add_option("--stale-frames", stale_frames, "Frames a camera's last detections stay usable")
        ->check(CLI::NonNegativeNumber);
  }
  TrackerOptions options(double frame_rate_hz) const {
    TrackerOptions o;
    o.active_target = target;
    o.solver.uncertainty.use_fy_correction = fy_correction;
    o.joint_refinement = !no_joint;
    o.stale_frames = stale_frames;
    o.frame_period_ms = 1000.0 / frame_rate_hz;
    return o;
  }
};

struct CalibrateArgs {
  std::string input;
  std::string output;
  int width = 1920;
  int height = 1280;
  int camera_id = 0;
  bool no_k3 = false;
  bool no_tangential = false;
};

int run_calibrate(const CalibrateArgs& a) {
  CalibrationOptions opts;
  opts.estimate_k3 = !a.no_k3;
  opts.estimate_tangential = !a.no_tangential;
  const auto observations = io::read_observations(a.input);
  CalibrationReport report = calibrate(observations, a.width, a.height, opts);
  report.camera.camera_id = a.camera_id;
  io::write_json(a.output, io::encode(report));
  std::cout << "views " << observations.size() << ", mean error " << report.mean_error_px
            << " px, iterations " << report.iterations << "\n";
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::string preset;
  std::string layout;
  std::string out_detections;
  std::string out_truth;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> frames;
  std::optional<double> sigma;
  int checkerboard_views = 0;
  int camera = 0;
  std::string out_observations;
};

int run_checkerboard(const SimulateArgs& a) {
  if (a.out_observations.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--checkerboard-views needs --out-observations");
  }
  const SceneLayout layout = load_layout(a.layout, {});
  if (a.camera < 0 || a.camera >= static_cast<int>(layout.cameras.size())) {
    throw Error(ErrorCode::kInvalidArgument, "no camera index " + std::to_string(a.camera));
  }
  const auto views = generate_checkerboard_views(layout.cameras[static_cast<std::size_t>(a.camera)],
                                                 BoardSpec{}, a.checkerboard_views,
                                                 a.sigma.value_or(0.1), a.seed.value_or(42));
  io::write_observations(a.out_observations, views.observations);
  std::cout << "views " << views.observations.size() << "\n";
  return 0;
}

int run_simulate(const SimulateArgs& a) {
  if (a.checkerboard_views > 0) return run_checkerboard(a);
  if (a.out_detections.empty() || a.out_truth.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--out-detections and --out-truth are required");
  }
  std::vector<SimConfig> runs;
  if (!a.preset.empty()) {
    const auto preset = parse_preset(a.preset);
    if (!preset) throw Error(ErrorCode::kInvalidArgument, "unknown preset '" + a.preset + "'");
    runs = preset_runs(*preset, load_layout(a.layout, {}), a.seed.value_or(42));
  } else {
    SimConfig cfg;
    if (!a.config.empty()) {
      cfg = io::decode_sim_config(io::read_json(a.config), fs::path(a.config).parent_path());
    }
    if (!a.layout.empty()) cfg.layout = load_layout(a.layout, {});
    if (a.seed) cfg.seed = *a.seed;
    if (a.frames) cfg.frames = *a.frames;
    if (a.sigma) cfg.sigma_px = *a.sigma;
    cfg.validate();
    runs.push_back(std::move(cfg));
  }
  const SimOutput out = simulate_runs(runs);
  io::write_detections(a.out_detections, out.detections);
  io::write_truth(a.out_truth, out.truth);
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "frames " << out.truth.size() << ", detections " << out.detections.size() << "\n";
  return 0;
}

struct TrackArgs {
  std::string detections;
  std::string layout;
  std::vector<std::string> cameras;
  std::string output;
  int window = 1;
  double frame_rate_hz = 30.0;
  TrackerFlags tracker;
};

int run_track(const TrackArgs& a) {
  const SceneLayout layout = load_layout(a.layout, a.cameras);
  const io::DetectionFile file = io::read_detections(a.detections);
  Tracker tracker(layout, a.tracker.options(a.frame_rate_hz));
  FrameAssembler assembler(a.window);
  std::ofstream out(a.output);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + a.output);
  std::int64_t frames = 0, with_target = 0;
  const auto emit = [&](std::vector<DetectionGroup> groups) {
    for (auto& g : groups) {
      const FrameResult r = tracker.process(g.frame_id, g.timestamp_ms, std::move(g.detections));
      out << encode_frame(to_message(r)) << '\n';
      ++frames;
      if (r.target) ++with_target;
    }
  };
  for (const auto& d : file.detections) emit(assembler.push(d));
  emit(assembler.flush());
  std::cout << "frames " << frames << ", with target " << with_target << ", malformed lines "
            << file.malformed << ", late records " << assembler.dropped() << "\n";
  return 0;
}

struct ServeArgs {
  std::string layout;
  std::vector<std::string> cameras;
  std::string source = "sim";
  std::string sim_config;
  std::string detections;
  std::string bind = "127.0.0.1";
  std::uint16_t port = 7000;
  std::uint16_t ws_port = 7001;
  std::uint16_t ingest_port = 7002;
  int workers = 2;
  std::int64_t frames = 0;
  bool no_realtime = false;
  int window = 1;
  TrackerFlags tracker;
};

int run_serve(const ServeArgs& a) {
  init_logging();
  ServiceConfig cfg;
  cfg.layout = load_layout(a.layout, a.cameras);
  if (a.source == "sim") {
    cfg.source = SourceKind::kSim;
    if (!a.sim_config.empty()) {
      cfg.sim = io::decode_sim_config(io::read_json(a.sim_config),
                                      fs::path(a.sim_config).parent_path());
    }
  } else if (a.source == "file") {
    cfg.source = SourceKind::kFile;
    if (a.detections.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "--source file needs --detections");
    }
    cfg.detections_path = a.detections;
  } else {
    cfg.source = SourceKind::kSocket;
  }
  cfg.tracker = a.tracker.options(cfg.sim.frame_rate_hz);
  cfg.ingest_port = a.ingest_port;
  cfg.ingest_address = a.bind;
  cfg.assembler_window = a.window;
  cfg.realtime = !a.no_realtime;
  cfg.max_frames = a.frames;
  cfg.workers = a.workers;

  ServerConfig server_cfg;
  server_cfg.bind_address = a.bind;
  server_cfg.tcp_port = a.port;
  server_cfg.ws_port = a.ws_port;
  Server server(server_cfg);
  server.start();
  Service service(cfg, &server);

  boost::asio::io_context signals_ctx;
  boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
  signals.async_wait([&](const boost::system::error_code& ec, int) {
    if (!ec) service.stop();
  });
  std::thread signal_thread([&] { signals_ctx.run(); });

  std::cout << "tcp " << server.tcp_port() << " ws " << server.ws_port() << std::endl;
  service.run();
  signals_ctx.stop();
  signal_thread.join();
  server.stop();
  const ServiceStats stats = service.stats();
  std::cout << "frames " << stats.frames_published << ", malformed lines "
            << stats.malformed_lines << ", late records " << stats.late_records
            << ", rejected controls " << stats.rejected_controls << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string preset;
  std::string truth;
  std::string detections;
  std::string layout;
  std::vector<std::string> cameras;
  std::string output;
  std::string plots;
  std::uint64_t seed = 42;
  int reference_camera = 0;
  bool no_timing = false;
  double frame_rate_hz = 30.0;
  TrackerFlags tracker;
};

int run_evaluate(const EvaluateArgs& a) {
  SceneLayout layout = load_layout(a.layout, a.cameras);
  std::vector<GroundTruthFrame> truth;
  std::vector<TagDetection> detections;
  if (!a.preset.empty()) {
    const auto preset = parse_preset(a.preset);
    if (!preset) throw Error(ErrorCode::kInvalidArgument, "unknown preset '" + a.preset + "'");
    SimOutput sim = simulate_runs(preset_runs(*preset, layout, a.seed));
    truth = std::move(sim.truth);
    detections = std::move(sim.detections);
  } else {
    if (a.truth.empty() || a.detections.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "need --preset or both --truth and --detections");
    }
    truth = io::read_truth(a.truth);
    detections = io::read_detections(a.detections).detections;
  }
  EvaluationOptions opts;
  opts.tracker = a.tracker.options(a.frame_rate_hz);
  opts.reference_camera = a.reference_camera;
  opts.measure_latency = !a.no_timing;
  const EvaluationReport report = evaluate(truth, detections, layout, opts);
  if (!a.output.empty()) io::write_json(a.output, encode(report));
  if (!a.plots.empty()) {
    for (const auto& p : write_plots(report, a.plots)) std::cerr << "wrote " << p.string() << "\n";
  }
  std::cout << format_tables(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"navtrace: multi-camera optical tag tracking and fusion"};
  app.require_subcommand(1);

  CalibrateArgs cal;
  CLI::App* c = app.add_subcommand("calibrate", "Estimate intrinsics from checkerboard corners");
  c->add_option("--input", cal.input, "Observations, one JSON object per line")
      ->required()->check(CLI::ExistingFile);
  c->add_option("--output", cal.output, "Calibration report JSON")->required();
  c->add_option("--width", cal.width, "Image width (px)");
  c->add_option("--height", cal.height, "Image height (px)");
  c->add_option("--camera-id", cal.camera_id, "camera_id written to the report");
  c->add_flag("--no-k3", cal.no_k3, "Keep k3 at zero");
  c->add_flag("--no-tangential", cal.no_tangential, "Keep p1, p2 at zero");

  SimulateArgs sim;
  CLI::App* s = app.add_subcommand("simulate", "Generate synthetic detections and ground truth");
  s->add_option("--config", sim.config, "Simulator config JSON")->check(CLI::ExistingFile);
  s->add_option("--preset", sim.preset, "zero-noise, five-position or target-grid");
  s->add_option("--layout", sim.layout, "Scene layout JSON")->check(CLI::ExistingFile);
  s->add_option("--seed", sim.seed, "RNG seed");
  s->add_option("--frames", sim.frames, "Frame count")->check(CLI::PositiveNumber);
  s->add_option("--sigma", sim.sigma, "Corner noise (px)")->check(CLI::NonNegativeNumber);
  s->add_option("--out-detections", sim.out_detections, "Detections JSON-lines output");
  s->add_option("--out-truth", sim.out_truth, "Ground truth JSON-lines output");
  s->add_option("--checkerboard-views", sim.checkerboard_views,
                "Generate this many checkerboard views instead of a tracking stream")
      ->check(CLI::PositiveNumber);
  s->add_option("--camera", sim.camera, "Layout camera index for checkerboard views");
  s->add_option("--out-observations", sim.out_observations, "Checkerboard JSON-lines output");
  s->get_option("--preset")->excludes("--config");

  TrackArgs track;
  CLI::App* t = app.add_subcommand("track", "Replay a detection file through the tracker");
  t->add_option("--detections", track.detections, "Detections JSON-lines input")
      ->required()->check(CLI::ExistingFile);
  t->add_option("--layout", track.layout, "Scene layout JSON")->check(CLI::ExistingFile);
  t->add_option("--cameras", track.cameras, "Calibration files in camera order")
      ->check(CLI::ExistingFile);
  t->add_option("--output", track.output, "Frame messages, one per line")->required();
  t->add_option("--window", track.window, "Frames a record may arrive late")
      ->check(CLI::NonNegativeNumber);
  t->add_option("--frame-rate", track.frame_rate_hz, "Stream frame rate (Hz)")
      ->check(CLI::PositiveNumber);
  track.tracker.add(t);

  ServeArgs serve;
  CLI::App* v = app.add_subcommand("serve", "Track live and stream frames over TCP and WebSocket");
  v->add_option("--layout", serve.layout, "Scene layout JSON")->check(CLI::ExistingFile);
  v->add_option("--cameras", serve.cameras, "Calibration files in camera order")
      ->check(CLI::ExistingFile);
  v->add_option("--source", serve.source, "Detection source")
      ->check(CLI::IsMember({"sim", "file", "socket"}));
  v->add_option("--sim-config", serve.sim_config, "Simulator config JSON (sim source)")
      ->check(CLI::ExistingFile);
  v->add_option("--detections", serve.detections, "Detections file (file source)")
      ->check(CLI::ExistingFile);
  v->add_option("--bind", serve.bind, "Listen address");
  v->add_option("--port", serve.port, "TCP port (0 = ephemeral)");
  v->add_option("--ws-port", serve.ws_port, "WebSocket port (0 = ephemeral)");
  v->add_option("--ingest-port", serve.ingest_port, "Detection ingest port (socket source)");
  v->add_option("--workers", serve.workers, "Solver threads")->check(CLI::PositiveNumber);
  v->add_option("--frames", serve.frames, "Stop after this many frames (0 = unbounded)")
      ->check(CLI::NonNegativeNumber);
  v->add_option("--window", serve.window, "Frames a record may arrive late")
      ->check(CLI::NonNegativeNumber);
  v->add_flag("--no-realtime", serve.no_realtime, "Do not pace sim and file sources");
  serve.tracker.add(v);

  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand("evaluate", "Score tracking against ground truth");
  e->add_option("--preset", ev.preset, "zero-noise, five-position or target-grid");
  e->add_option("--truth", ev.truth, "Ground truth JSON-lines")->check(CLI::ExistingFile);
  e->add_option("--detections", ev.detections, "Detections JSON-lines")
      ->check(CLI::ExistingFile);
  e->add_option("--layout", ev.layout, "Scene layout JSON")->check(CLI::ExistingFile);
  e->add_option("--cameras", ev.cameras, "Calibration files in camera order")
      ->check(CLI::ExistingFile);
  e->add_option("--output", ev.output, "Report JSON");
  e->add_option("--plots", ev.plots, "Directory for SVG plots");
  e->add_option("--seed", ev.seed, "Preset seed");
  e->add_option("--reference-camera", ev.reference_camera, "Camera the distance is measured from");
  e->add_option("--frame-rate", ev.frame_rate_hz, "Stream frame rate (Hz)")
      ->check(CLI::PositiveNumber);
  e->add_flag("--no-timing", ev.no_timing, "Record zero latency for reproducible reports");
  e->get_option("--preset")->excludes("--truth")->excludes("--detections");
  ev.tracker.add(e);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& p) {
    return fail("Usage", p.what(), kExitUsage);
  }

  try {
    if (*c) return run_calibrate(cal);
    if (*s) return run_simulate(sim);
    if (*t) return run_track(track);
    if (*v) return run_serve(serve);
    if (*e) return run_evaluate(ev);
  } catch (const Error& err) {
    return fail(to_string(err.code()), err.what(), exit_status(err.code()));
  } catch (const std::exception& err) {
    return fail("DataError", err.what(), kExitData);
  }
  return kExitUsage;
}
