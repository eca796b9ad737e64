#pragma once

#include <span>
#include <string>
#include <vector>

#include "fdctrack/bench.hpp"
#include "fdctrack/metrics.hpp"
#include "fdctrack/simgen.hpp"

namespace fdc {

struct Series {
  std::string name;
  std::string color;  // any SVG color
  std::vector<double> x, y;
};

struct PlotSpec {
  std::string title, x_label, y_label;
  bool log_x = false;
  std::vector<Series> series;
};

/// Standalone SVG line plot with axes, ticks and a legend.
std::string line_plot_svg(const PlotSpec& spec);

/// Efficiency and purity against threshold.
std::string sweep_svg(const SweepCurve& curve, const std::string& title = "Efficiency and purity vs threshold");

/// Per-event build, inference and total time against batch size.
std::string timing_svg(const BenchReport& report);

/// Transverse view of one event: hits colored by particle (noise grey) and
/// the predicted edges with score >= threshold.
std::string event_svg(const Event& ev, std::span<const PredictedEdge> edges, double threshold);

}  // namespace fdc
