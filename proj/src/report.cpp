#include "navtrace/report.hpp"

#include "navtrace/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace navtrace {

namespace {

using io::Json;

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json encode(const SummaryStats& s) {
  return Json{{"count", s.count}, {"mean", s.mean},     {"sd", s.sd},   {"min", s.min},
              {"max", s.max},     {"median", s.median}, {"p95", s.p95}, {"skew", s.skew}};
}

Json encode(const Histogram& h) { return Json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

Json encode(const FrameRecord& r) {
  Json est = Json::array();
  for (const auto& e : r.estimates) {
    est.push_back(Json{{"camera_id", e.camera_id},
                       {"tag_id", e.tag_id},
                       {"distance_mm", e.distance_mm},
                       {"e_proj_px", e.e_proj_px}});
  }
  return Json{{"frame_id", r.frame_id},
              {"timestamp_ms", r.timestamp_ms},
              {"segment", r.segment},
              {"head_translation_error_mm", opt(r.head_translation_error_mm)},
              {"head_rotation_error_deg", opt(r.head_rotation_error_deg)},
              {"coil_translation_error_mm", opt(r.coil_translation_error_mm)},
              {"coil_rotation_error_deg", opt(r.coil_rotation_error_deg)},
              {"target_error_mm", opt(r.target_error_mm)},
              {"coil_distance_mm", opt(r.coil_distance_mm)},
              {"coil_rotation_deg", opt(r.coil_rotation_deg)},
              {"true_coil_distance_mm", r.true_coil_distance_mm},
              {"true_coil_rotation_deg", r.true_coil_rotation_deg},
              {"sigma_fused_mm", opt(r.sigma_fused_mm)},
              {"cameras_tracked", r.cameras_tracked},
              {"estimates", est},
              {"errors", r.errors},
              {"latency_ms", r.latency_ms}};
}

// Minimal SVG canvas with a data-to-pixel mapping for one panel.
class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "start") {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
          << "\" text-anchor=\"" << anchor << "\">";
    for (char ch : s) {
      switch (ch) {
        case '<': body_ << "&lt;"; break;
        case '>': body_ << "&gt;"; break;
        case '&': body_ << "&amp;"; break;
        default: body_ << ch;
      }
    }
    body_ << "</text>\n";
  }
  void line(double x0, double y0, double x1, double y1, const char* color = "#444") {
    body_ << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y1
          << "\" stroke=\"" << color << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const char* color) {
    body_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
          << "\" fill=\"" << color << "\"/>\n";
  }
  void circle(double x, double y, double r, const char* color) {
    body_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\""
          << color << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& [x, y] : pts) body_ << x << ',' << y << ' ';
    body_ << "\"/>\n";
  }
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
        << height_ << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
  }

 private:
  double width_;
  double height_;
  std::ostringstream body_;
};

struct Axes {
  double x, y, w, h;
  double x0, x1, y0, y1;
  double px(double v) const { return x + (x1 > x0 ? (v - x0) / (x1 - x0) : 0.5) * w; }
  double py(double v) const { return y + h - (y1 > y0 ? (v - y0) / (y1 - y0) : 0.5) * h; }
  void draw(Svg& svg, const std::string& xlabel, const std::string& ylabel) const {
    svg.line(x, y + h, x + w, y + h);
    svg.line(x, y, x, y + h);
    svg.text(x + w / 2, y + h + 30, xlabel, 11, "middle");
    svg.text(x - 8, y - 6, ylabel, 11, "start");
    svg.text(x, y + h + 14, fmt(x0), 10, "middle");
    svg.text(x + w, y + h + 14, fmt(x1), 10, "middle");
    svg.text(x - 4, y + h, fmt(y0), 10, "end");
    svg.text(x - 4, y + 10, fmt(y1), 10, "end");
  }
  static std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
  }
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

void reprojection_plot(const EvaluationReport& report, const std::filesystem::path& path) {
  Svg svg(720, 420);
  svg.text(360, 24, "Reprojection error vs. distance", 15, "middle");
  Axes ax{70, 50, 600, 300, 1e300, -1e300, 0.0, 0.0};
  for (const auto& r : report.records) {
    for (const auto& e : r.estimates) {
      ax.x0 = std::min(ax.x0, e.distance_mm);
      ax.x1 = std::max(ax.x1, e.distance_mm);
      ax.y1 = std::max(ax.y1, e.e_proj_px);
    }
  }
  if (ax.x0 > ax.x1) ax.x0 = ax.x1 = 0.0;
  ax.draw(svg, "distance (mm)", "e_proj (px)");
  for (const auto& r : report.records) {
    for (const auto& e : r.estimates) {
      svg.circle(ax.px(e.distance_mm), ax.py(e.e_proj_px), 1.5,
                 color(static_cast<std::size_t>(e.camera_id)));
    }
  }
  for (std::size_t i = 0; i < report.cameras.size(); ++i) {
    const auto& c = report.cameras[i];
    svg.text(560, 70 + 16.0 * i,
             "cam " + std::to_string(c.camera_id) + " mean " + Axes::fmt(c.e_proj_px.mean), 11);
    svg.rect(548, 62 + 16.0 * i, 8, 8, color(static_cast<std::size_t>(c.camera_id)));
  }
  svg.save(path);
}

void precision_plot(const EvaluationReport& report, const std::filesystem::path& path) {
  const std::size_t n = std::max<std::size_t>(report.positions.size(), 1);
  const double panel = 260;
  Svg svg(panel * static_cast<double>(n) + 40, 560);
  svg.text(20, 24, "Per-position distance and rotation histograms (mean +/- sd)", 15);
  for (std::size_t i = 0; i < report.positions.size(); ++i) {
    const auto& p = report.positions[i];
    const double x = 60 + panel * static_cast<double>(i);
    const auto draw = [&](const Histogram& h, const SummaryStats& s, double y,
                          const std::string& label) {
      const int peak = h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
      Axes ax{x, y, panel - 80, 170, h.lo, h.hi, 0.0, static_cast<double>(std::max(peak, 1))};
      ax.draw(svg, label, "count");
      const double bw = ax.w / static_cast<double>(std::max<std::size_t>(h.counts.size(), 1));
      for (std::size_t k = 0; k < h.counts.size(); ++k) {
        const double top = ax.py(h.counts[k]);
        svg.rect(ax.x + bw * static_cast<double>(k), top, bw * 0.9, ax.y + ax.h - top, color(i));
      }
      svg.text(ax.x, y - 20,
               p.segment + ": " + Axes::fmt(s.mean) + " +/- " + Axes::fmt(s.sd), 11);
    };
    draw(p.distance_histogram, p.distance_mm, 70, "distance (mm)");
    draw(p.rotation_histogram, p.rotation_deg, 330, "rotation (deg)");
  }
  svg.save(path);
}

void latency_plot(const EvaluationReport& report, const std::filesystem::path& path) {
  Svg svg(720, 420);
  svg.text(360, 24,
           "Per-frame latency, mean " + Axes::fmt(report.latency_ms.mean) + " ms, p95 " +
               Axes::fmt(report.latency_ms.p95) + " ms",
           15, "middle");
  Axes ax{70, 50, 600, 300, 0.0, static_cast<double>(report.records.size()), 0.0,
          report.latency_ms.max};
  ax.draw(svg, "frame", "latency (ms)");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    pts.push_back({ax.px(static_cast<double>(i)), ax.py(report.records[i].latency_ms)});
  }
  svg.polyline(pts, color(0));
  svg.line(ax.x, ax.py(report.latency_ms.mean), ax.x + ax.w, ax.py(report.latency_ms.mean),
           color(1));
  svg.save(path);
}

void targets_plot(const EvaluationReport& report, const std::filesystem::path& path) {
  Svg svg(720, 420);
  svg.text(360, 24, "Stimulation point error per segment (mean +/- sd)", 15, "middle");
  double top = 0.0;
  for (const auto& t : report.targets) top = std::max(top, t.error_mm.mean + t.error_mm.sd);
  const std::size_t n = std::max<std::size_t>(report.targets.size(), 1);
  Axes ax{70, 50, 600, 300, 0.0, static_cast<double>(n), 0.0, top};
  ax.draw(svg, "segment", "error (mm)");
  const double bw = ax.w / static_cast<double>(n);
  for (std::size_t i = 0; i < report.targets.size(); ++i) {
    const auto& t = report.targets[i];
    const double x = ax.x + bw * static_cast<double>(i);
    const double y = ax.py(t.error_mm.mean);
    svg.rect(x + bw * 0.15, y, bw * 0.7, ax.y + ax.h - y, color(0));
    const double cx = x + bw * 0.5;
    svg.line(cx, ax.py(t.error_mm.mean - t.error_mm.sd), cx,
             ax.py(t.error_mm.mean + t.error_mm.sd), "#000");
    svg.text(cx, ax.y + ax.h + 44, t.segment, 9, "middle");
  }
  svg.save(path);
}

}  // namespace

io::Json encode(const EvaluationReport& report) {
  Json cams = Json::array();
  for (const auto& c : report.cameras) {
    cams.push_back(Json{{"camera_id", c.camera_id}, {"e_proj_px", encode(c.e_proj_px)}});
  }
  Json positions = Json::array();
  for (const auto& p : report.positions) {
    positions.push_back(Json{{"segment", p.segment},
                             {"true_distance_mm", p.true_distance_mm},
                             {"true_rotation_deg", p.true_rotation_deg},
                             {"distance_mm", encode(p.distance_mm)},
                             {"rotation_deg", encode(p.rotation_deg)},
                             {"distance_histogram", encode(p.distance_histogram)},
                             {"rotation_histogram", encode(p.rotation_histogram)}});
  }
  Json targets = Json::array();
  for (const auto& t : report.targets) {
    targets.push_back(Json{{"segment", t.segment}, {"error_mm", encode(t.error_mm)}});
  }
  Json records = Json::array();
  for (const auto& r : report.records) records.push_back(encode(r));
  return Json{{"reference_camera", report.reference_camera},
              {"frames", report.records.size()},
              {"frames_without_target", report.frames_without_target},
              {"reprojection", cams},
              {"precision", positions},
              {"latency_ms", encode(report.latency_ms)},
              {"targets", targets},
              {"target_error_mm", encode(report.target_error_mm)},
              {"head_translation_error_mm", encode(report.head_translation_error_mm)},
              {"head_rotation_error_deg", encode(report.head_rotation_error_deg)},
              {"coil_translation_error_mm", encode(report.coil_translation_error_mm)},
              {"coil_rotation_error_deg", encode(report.coil_rotation_error_deg)},
              {"records", records}};
}

std::string format_tables(const EvaluationReport& report) {
  std::ostringstream out;
  out << std::fixed;
  out << "frames " << report.records.size() << ", without target "
      << report.frames_without_target << "\n\n";
  out << "reprojection\n  camera  count  mean_px  max_px\n";
  for (const auto& c : report.cameras) {
    out << "  " << std::setw(6) << c.camera_id << std::setw(7) << c.e_proj_px.count
        << std::setprecision(4) << std::setw(9) << c.e_proj_px.mean << std::setw(8)
        << c.e_proj_px.max << "\n";
  }
  out << "\nprecision (distance from camera " << report.reference_camera << ")\n"
      << "  segment            true_mm   mean_mm    sd_mm   skew  rot_deg  sd_deg   skew\n";
  for (const auto& p : report.positions) {
    out << "  " << std::left << std::setw(16) << p.segment << std::right << std::setprecision(2)
        << std::setw(9) << p.true_distance_mm << std::setw(10) << p.distance_mm.mean
        << std::setprecision(4) << std::setw(9) << p.distance_mm.sd << std::setprecision(2)
        << std::setw(7) << p.distance_mm.skew << std::setw(9) << p.rotation_deg.mean
        << std::setprecision(4) << std::setw(8) << p.rotation_deg.sd << std::setprecision(2)
        << std::setw(7) << p.rotation_deg.skew << "\n";
  }
  out << "\nlatency_ms mean " << std::setprecision(3) << report.latency_ms.mean << " p95 "
      << report.latency_ms.p95 << " max " << report.latency_ms.max << "\n";
  out << "\ntarget error\n  segment          count  mean_mm    sd_mm   max_mm\n";
  for (const auto& t : report.targets) {
    out << "  " << std::left << std::setw(16) << t.segment << std::right << std::setw(6)
        << t.error_mm.count << std::setprecision(4) << std::setw(9) << t.error_mm.mean
        << std::setw(9) << t.error_mm.sd << std::setw(9) << t.error_mm.max << "\n";
  }
  out << "  all: median " << report.target_error_mm.median << " mm, max "
      << report.target_error_mm.max << " mm\n";
  return out.str();
}

std::vector<std::filesystem::path> write_plots(const EvaluationReport& report,
                                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out = {dir / "reprojection.svg", dir / "precision.svg",
                                            dir / "latency.svg", dir / "targets.svg"};
  reprojection_plot(report, out[0]);
  precision_plot(report, out[1]);
  latency_plot(report, out[2]);
  targets_plot(report, out[3]);
  return out;
}

}  // namespace navtrace
