#include "fdctrack/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "fdctrack/config.hpp"

namespace fdc {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 55;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<double> ticks(double lo, double hi, bool log) {
  std::vector<double> t;
  if (log) {
    for (double v = std::pow(10.0, std::floor(std::log10(lo))); v <= hi * 1.0001; v *= 10.0) {
      if (v >= lo * 0.9999) t.push_back(v);
    }
    if (t.size() < 2) t = {lo, hi};
    return t;
  }
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

}  // namespace

std::string line_plot_svg(const PlotSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_x && s.x[i] <= 0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const auto tx = [&](double x) {
    const double f = spec.log_x ? (std::log10(x) - std::log10(x0)) / (std::log10(x1) - std::log10(x0))
                                : (x - x0) / (x1 - x0);
    return kLeft + f * (kWidth - kLeft - kRight);
  };
  const auto ty = [&](double y) { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                    num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kWidth / 2 - kRight / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(spec.title) + "</text>\n";
  const double bx = kLeft, by = kTop, bw = kWidth - kLeft - kRight, bh = kHeight - kTop - kBottom;
  out += "<rect x=\"" + num(bx) + "\" y=\"" + num(by) + "\" width=\"" + num(bw) + "\" height=\"" + num(bh) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks(x0, x1, spec.log_x)) {
    out += "<line x1=\"" + num(tx(t)) + "\" y1=\"" + num(by + bh) + "\" x2=\"" + num(tx(t)) + "\" y2=\"" +
           num(by + bh + 5) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + num(tx(t)) + "\" y=\"" + num(by + bh + 18) + "\" text-anchor=\"middle\">" + num(t) +
           "</text>\n";
  }
  for (double t : ticks(y0, y1, false)) {
    out += "<line x1=\"" + num(bx - 5) + "\" y1=\"" + num(ty(t)) + "\" x2=\"" + num(bx) + "\" y2=\"" + num(ty(t)) +
           "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + num(bx - 8) + "\" y=\"" + num(ty(t) + 4) + "\" text-anchor=\"end\">" + num(t) + "</text>\n";
  }
  out += "<text x=\"" + num(bx + bw / 2) + "\" y=\"" + num(kHeight - 12) + "\" text-anchor=\"middle\">" +
         escape(spec.x_label) + "</text>\n";
  out += "<text transform=\"translate(18," + num(by + bh / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(spec.y_label) + "</text>\n";
  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const auto& s = spec.series[k];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_x && s.x[i] <= 0)) continue;
      pts += num(tx(s.x[i])) + "," + num(ty(s.y[i])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    const double ly = by + 10 + 20.0 * static_cast<double>(k);
    out += "<line x1=\"" + num(bx + bw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(bx + bw + 32) + "\" y2=\"" +
           num(ly) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(bx + bw + 38) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string sweep_svg(const SweepCurve& curve, const std::string& title) {
  PlotSpec spec{title, "threshold", "value", false, {}};
  Series eff{"efficiency", "#1f77b4", curve.thresholds, {}};
  Series pur{"purity", "#d62728", curve.thresholds, {}};
  for (const auto& m : curve.metrics) {
    eff.y.push_back(m.efficiency());
    pur.y.push_back(m.purity());
  }
  spec.series = {eff, pur};
  return line_plot_svg(spec);
}

std::string timing_svg(const BenchReport& report) {
  PlotSpec spec{"Time per event vs batch size", "batch size", "microseconds per event", true, {}};
  Series build{"graph build", "#2ca02c", {}, {}};
  Series infer{"inference", "#ff7f0e", {}, {}};
  Series total{"total", "#1f77b4", {}, {}};
  for (const auto& r : report.rows) {
    const auto b = static_cast<double>(r.batch_size);
    build.x.push_back(b);
    infer.x.push_back(b);
    total.x.push_back(b);
    build.y.push_back(r.build_us_mean);
    infer.y.push_back(r.infer_us_mean);
    total.y.push_back(r.total_us_mean);
  }
  spec.series = {build, infer, total};
  return line_plot_svg(spec);
}

std::string event_svg(const Event& ev, std::span<const PredictedEdge> edges, double threshold) {
  constexpr double size = 520, half = size / 2, scale = (half - 20) / 50.0;
  const auto px = [&](double x) { return half + scale * x; };
  const auto py = [&](double y) { return half - scale * y; };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
  std::map<int, const Hit*> by_id;
  for (const auto& h : ev.hits) by_id[h.hit_id] = &h;

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(size) + "\" height=\"" + num(size) +
                    "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"10\" y=\"18\">event " + std::to_string(ev.event_id) + " (x-y view, threshold " + num(threshold) +
         ")</text>\n";
  out += "<circle cx=\"" + num(half) + "\" cy=\"" + num(half) + "\" r=\"" + num(scale * 48) +
         "\" fill=\"none\" stroke=\"#ccc\"/>\n";
  out += "<circle cx=\"" + num(half) + "\" cy=\"" + num(half) + "\" r=\"" + num(scale * 3) +
         "\" fill=\"none\" stroke=\"#ccc\"/>\n";
  for (const auto& e : edges) {
    if (e.event_id != ev.event_id || !(e.score >= threshold)) continue;
    const auto a = by_id.find(e.source_hit);
    const auto b = by_id.find(e.target_hit);
    if (a == by_id.end() || b == by_id.end()) continue;
    out += "<line x1=\"" + num(px(a->second->x)) + "\" y1=\"" + num(py(a->second->y)) + "\" x2=\"" +
           num(px(b->second->x)) + "\" y2=\"" + num(py(b->second->y)) + "\" stroke=\"black\" stroke-opacity=\"0.5\"/>\n";
  }
  for (const auto& h : ev.hits) {
    const std::string color = h.truth_id < 0 ? "#aaaaaa" : palette[static_cast<std::size_t>(h.truth_id) % 10];
    out += "<circle cx=\"" + num(px(h.x)) + "\" cy=\"" + num(py(h.y)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace fdc
