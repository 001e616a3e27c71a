#include "navtrace/service.hpp"

#include "navtrace/error.hpp"
#include "navtrace/io.hpp"

#include <boost/asio.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

namespace navtrace {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

struct Service::Impl {
  Impl(ServiceConfig cfg, Server* srv)
      : config(std::move(cfg)),
        server(srv),
        options(config.tracker),
        cache(camera_ids(config.layout), config.tracker),
        pool(static_cast<std::size_t>(std::max(1, config.workers))) {}

  static std::vector<int> camera_ids(const SceneLayout& layout) {
    std::vector<int> ids;
    for (const auto& c : layout.cameras) ids.push_back(c.camera_id);
    return ids;
  }

  void run_sim();
  void run_file();
  void run_socket();

  void apply_controls();
  void apply(const Command& cmd);
  void submit(std::int64_t frame_id, double timestamp_ms, std::vector<TagDetection> detections);
  void finish(std::int64_t seq, FrameResult result, Clock::time_point t0);
  void drain();
  bool limit_reached() const {
    return config.max_frames > 0 && submitted >= config.max_frames;
  }

  ServiceConfig config;
  Server* server;
  std::function<void(const FrameResult&, const std::string&)> callback;

  TrackerOptions options;
  StaleCache cache;
  std::optional<Simulator> sim;
  bool paused = false;
  std::int64_t submitted = 0;

  asio::thread_pool pool;
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::int64_t, std::pair<FrameResult, Clock::time_point>> ready;
  std::int64_t next_publish = 0;
  std::int64_t in_flight = 0;

  std::atomic<bool> stopping{false};
  std::atomic<std::uint16_t> bound_port{0};
  std::atomic<std::int64_t> published{0};
  std::atomic<std::int64_t> malformed{0};
  std::atomic<std::int64_t> late{0};
  std::atomic<std::int64_t> rejected{0};
};

void Service::Impl::apply_controls() {
  if (!server) return;
  for (const Command& cmd : server->take_commands()) apply(cmd);
}

void Service::Impl::apply(const Command& cmd) {
  auto respond = [&](const std::string& text) {
    if (auto origin = cmd.origin.lock()) origin->reply(text);
  };
  auto reject = [&](const std::string& reason) {
    rejected.fetch_add(1);
    spdlog::info("control rejected: {}", reason);
    respond(encode_error(reason));
  };
  ControlMessage msg;
  try {
    msg = decode_control(cmd.text);
  } catch (const Error& e) {
    reject(e.what());
    return;
  }
  switch (msg.kind) {
    case ControlMessage::Kind::kSelectTarget:
      if (!config.layout.find_target(msg.target)) {
        reject("unknown target '" + msg.target + "'");
        return;
      }
      options.active_target = msg.target;
      break;
    case ControlMessage::Kind::kCoilDelta:
      if (!sim) {
        reject("coil_delta requires the sim source");
        return;
      }
      sim->nudge_coil(RigidTransform{
          Rotation::from_rotation_vector(msg.rotation_deg * deg_to_rad(1.0)), msg.translation_mm});
      break;
    case ControlMessage::Kind::kPause:
      paused = true;
      break;
    case ControlMessage::Kind::kResume:
      paused = false;
      break;
    case ControlMessage::Kind::kSetFusion:
      if (msg.use_fy_correction) options.solver.uncertainty.use_fy_correction = *msg.use_fy_correction;
      if (msg.stale_frames) options.stale_frames = *msg.stale_frames;
      cache.set_options(options);
      break;
  }
  respond(encode_ack(msg.kind));
}

void Service::Impl::submit(std::int64_t frame_id, double timestamp_ms,
                           std::vector<TagDetection> detections) {
  {
    std::unique_lock lock(mu);
    const std::int64_t cap = 4 * std::max(1, config.workers);
    cv.wait(lock, [&] { return in_flight < cap; });
    ++in_flight;
  }
  const auto t0 = Clock::now();
  FrameInput input = cache.prepare(frame_id, timestamp_ms, std::move(detections));
  const std::int64_t seq = submitted++;
  asio::post(pool, [this, seq, t0, input = std::move(input), opts = options]() {
    finish(seq, process_frame(input, config.layout, opts), t0);
  });
}

void Service::Impl::finish(std::int64_t seq, FrameResult result, Clock::time_point t0) {
  std::lock_guard lock(mu);
  ready.emplace(seq, std::make_pair(std::move(result), t0));
  for (auto it = ready.find(next_publish); it != ready.end(); it = ready.find(next_publish)) {
    FrameResult& r = it->second.first;
    r.latency_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - it->second.second).count();
    const std::string payload = encode_frame(to_message(r));
    if (server) server->publish(payload);
    if (callback) callback(r, payload);
    published.fetch_add(1);
    ready.erase(it);
    ++next_publish;
    --in_flight;
  }
  cv.notify_all();
}

void Service::Impl::drain() {
  std::unique_lock lock(mu);
  cv.wait(lock, [&] { return in_flight == 0; });
}

void Service::Impl::run_sim() {
  SimConfig sc = config.sim;
  sc.layout = config.layout;
  sim.emplace(sc);
  const auto period = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(1.0 / sc.frame_rate_hz));
  auto base = Clock::now();
  std::int64_t since_base = 0;
  while (!stopping && !limit_reached()) {
    apply_controls();
    if (paused) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      base = Clock::now();
      since_base = 0;
      continue;
    }
    if (config.realtime) std::this_thread::sleep_until(base + since_base * period);
    ++since_base;
    SimFrame f = sim->next();
    submit(f.truth.frame_id, f.truth.timestamp_ms, std::move(f.detections));
  }
}

void Service::Impl::run_file() {
  const io::DetectionFile file = io::read_detections(config.detections_path);
  malformed += static_cast<std::int64_t>(file.malformed);
  if (file.malformed > 0) {
    spdlog::warn("{}: skipped {} malformed lines", config.detections_path.string(), file.malformed);
  }
  FrameAssembler assembler(config.assembler_window);
  std::vector<DetectionGroup> groups;
  for (const auto& d : file.detections) {
    for (auto& g : assembler.push(d)) groups.push_back(std::move(g));
  }
  for (auto& g : assembler.flush()) groups.push_back(std::move(g));
  late += assembler.dropped();

  const auto start = Clock::now();
  double paused_ms = 0.0;
  const double t_first = groups.empty() ? 0.0 : groups.front().timestamp_ms;
  for (auto& g : groups) {
    if (stopping || limit_reached()) break;
    apply_controls();
    while (paused && !stopping) {
      const auto p0 = Clock::now();
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      paused_ms += std::chrono::duration<double, std::milli>(Clock::now() - p0).count();
      apply_controls();
    }
    if (config.realtime) {
      std::this_thread::sleep_until(
          start + std::chrono::duration_cast<Clock::duration>(
                      std::chrono::duration<double, std::milli>(g.timestamp_ms - t_first + paused_ms)));
    }
    submit(g.frame_id, g.timestamp_ms, std::move(g.detections));
  }
}

void Service::Impl::run_socket() {
  asio::io_context ioc;
  tcp::acceptor acceptor(ioc);
  const tcp::endpoint ep(asio::ip::make_address(config.ingest_address), config.ingest_port);
  acceptor.open(ep.protocol());
  acceptor.set_option(asio::socket_base::reuse_address(true));
  acceptor.bind(ep);
  acceptor.listen();
  bound_port = acceptor.local_endpoint().port();
  spdlog::info("ingesting detections on :{}", bound_port.load());

  FrameAssembler assembler(config.assembler_window);
  auto last_record = Clock::now();
  auto emit = [&](std::vector<DetectionGroup> groups) {
    for (auto& g : groups) {
      if (paused || limit_reached()) continue;
      submit(g.frame_id, g.timestamp_ms, std::move(g.detections));
    }
  };

  struct Conn {
    tcp::socket socket;
    std::string buffer;
  };
  std::function<void(std::shared_ptr<Conn>)> read_line = [&](std::shared_ptr<Conn> c) {
    asio::async_read_until(
        c->socket, asio::dynamic_buffer(c->buffer, 1 << 20), '\n',
        [&, c](const boost::system::error_code& ec, std::size_t n) {
          if (ec) return;
          std::string line = c->buffer.substr(0, n - 1);
          c->buffer.erase(0, n);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (!line.empty()) {
            try {
              const TagDetection det = io::parse_detection(line);
              last_record = Clock::now();
              apply_controls();
              const std::int64_t before = assembler.dropped();
              emit(assembler.push(det));
              if (assembler.dropped() > before) {
                late.fetch_add(1);
                spdlog::debug("late record for frame {} dropped", det.frame_id);
              }
            } catch (const Error& e) {
              malformed.fetch_add(1);
              spdlog::warn("malformed detection line: {}", e.what());
            }
          }
          read_line(c);
        });
  };
  std::function<void()> accept = [&] {
    acceptor.async_accept([&](const boost::system::error_code& ec, tcp::socket s) {
      if (ec) return;
      read_line(std::make_shared<Conn>(Conn{std::move(s), {}}));
      accept();
    });
  };
  accept();

  const auto idle = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double, std::milli>(3.0 * config.tracker.frame_period_ms));
  while (!stopping && !limit_reached()) {
    ioc.run_for(std::chrono::milliseconds(5));
    if (ioc.stopped()) ioc.restart();
    apply_controls();
    if (Clock::now() - last_record > idle) emit(assembler.flush());
  }
  emit(assembler.flush());
}

Service::Service(ServiceConfig config, Server* server)
    : impl_(std::make_unique<Impl>(std::move(config), server)) {}

Service::~Service() {
  stop();
  impl_->pool.join();
}

void Service::on_frame(std::function<void(const FrameResult&, const std::string&)> callback) {
  impl_->callback = std::move(callback);
}

void Service::run() {
  switch (impl_->config.source) {
    case SourceKind::kSim: impl_->run_sim(); break;
    case SourceKind::kFile: impl_->run_file(); break;
    case SourceKind::kSocket: impl_->run_socket(); break;
  }
  impl_->drain();
}

void Service::stop() { impl_->stopping = true; }

std::uint16_t Service::ingest_port() const { return impl_->bound_port.load(); }

ServiceStats Service::stats() const {
  return {impl_->published.load(), impl_->malformed.load(), impl_->late.load(),
          impl_->rejected.load()};
}

}  // namespace navtrace
