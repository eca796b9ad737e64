#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdctrack/graphbuild.hpp"
#include "fdctrack/simgen.hpp"
#include "fdctrack/tradfind.hpp"

namespace fdc {

/// Segment-level counts.
///
/// Efficiency is true_kept / true_total, where the truth set is the truth
/// segments of the events. Purity is predicted_correct / predicted_total,
/// where an edge is correct when both hits belong to one particle; for
/// adjacent-hit predictions this equals true_kept / predicted_total.
struct SegmentMetrics {
  std::size_t true_kept = 0;
  std::size_t true_total = 0;
  std::size_t predicted_correct = 0;
  std::size_t predicted_total = 0;

  double efficiency() const;
  double purity() const;  // 1.0 when nothing is predicted
  SegmentMetrics& operator+=(const SegmentMetrics& o);
  bool operator==(const SegmentMetrics&) const = default;
};

/// Per-edge truth flags for a list of scored candidate edges, plus the size
/// of the truth segment set they are scored against.
struct ScoredEdges {
  std::vector<double> score;
  std::vector<std::uint8_t> is_segment;  // edge is a truth segment
  std::vector<std::uint8_t> correct;     // both hits from one particle
  std::size_t true_total = 0;

  void append(const ScoredEdges& o);
};

/// Scores edges predicted for `events`. Edges are matched to events by
/// event id; every event contributes its truth segments to the total.
/// Unknown event ids or hit ids raise ValidationError.
ScoredEdges score_edges(std::span<const Event> events, std::span<const PredictedEdge> edges,
                        int truth_skip_max = kTruthSkipMax);

/// Label-level view: is_segment = correct = labels, true_total = number of
/// positive labels.
ScoredEdges score_labels(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Counts with an edge predicted when score >= threshold.
SegmentMetrics segment_metrics(const ScoredEdges& edges, double threshold);

/// Counts from a keep mask over labeled edges.
SegmentMetrics segment_metrics(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> kept);

struct SweepCurve {
  std::vector<double> thresholds;  // strictly increasing
  std::vector<SegmentMetrics> metrics;
};

/// Thresholds k / (points - 1), k = 0..points-1 (101 points: 0.00 .. 1.00).
SweepCurve threshold_sweep(const ScoredEdges& edges, std::size_t points = 101);
SweepCurve threshold_sweep(std::span<const double> scores, std::span<const std::uint8_t> labels,
                           std::size_t points = 101);

struct MatchedPoint {
  bool attained = false;
  double threshold = 0.0;
  double efficiency = 0.0;
  double purity = 0.0;
  double max_purity = 0.0;  // best purity on the curve
};

/// Among thresholds with purity >= target, the one with the highest
/// efficiency; ties go to the lowest threshold.
MatchedPoint efficiency_at_purity(const SweepCurve& curve, double target_purity);

/// (x, y) / (x^2 + y^2). The origin is rejected.
std::pair<double, double> conformal_transform(double x, double y);

/// Predicted edges of a classified graph, one per graph edge, with hit and
/// event ids.
std::vector<PredictedEdge> graph_edges(const EventGraph& g, std::span<const double> scores);

// Edge CSV: header "event_id,source_hit,target_hit,score".
std::string edges_to_csv(std::span<const PredictedEdge> edges);
std::vector<PredictedEdge> edges_from_csv(const std::string& text);
void write_edge_csv(const std::string& path, std::span<const PredictedEdge> edges);
std::vector<PredictedEdge> read_edge_csv(const std::string& path);

// CSV: threshold,efficiency,purity,true_kept,true_total,predicted_correct,predicted_total
std::string sweep_csv(const SweepCurve& curve);

}  // namespace fdc
