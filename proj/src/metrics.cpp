#include "fdctrack/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "fdctrack/config.hpp"

namespace fdc {

double SegmentMetrics::efficiency() const {
  return true_total == 0 ? 1.0 : static_cast<double>(true_kept) / static_cast<double>(true_total);
}

double SegmentMetrics::purity() const {
  return predicted_total == 0 ? 1.0 : static_cast<double>(predicted_correct) / static_cast<double>(predicted_total);
}

SegmentMetrics& SegmentMetrics::operator+=(const SegmentMetrics& o) {
  true_kept += o.true_kept;
  true_total += o.true_total;
  predicted_correct += o.predicted_correct;
  predicted_total += o.predicted_total;
  return *this;
}

void ScoredEdges::append(const ScoredEdges& o) {
  score.insert(score.end(), o.score.begin(), o.score.end());
  is_segment.insert(is_segment.end(), o.is_segment.begin(), o.is_segment.end());
  correct.insert(correct.end(), o.correct.begin(), o.correct.end());
  true_total += o.true_total;
}

ScoredEdges score_edges(std::span<const Event> events, std::span<const PredictedEdge> edges, int truth_skip_max) {
  std::map<std::int64_t, std::size_t> slot;
  std::vector<TruthIndex> truth;
  ScoredEdges out;
  for (const auto& ev : events) {
    if (!slot.emplace(ev.event_id, truth.size()).second) {
      throw ValidationError("score_edges: duplicate event id " + std::to_string(ev.event_id));
    }
    truth.emplace_back(ev, truth_skip_max);
    out.true_total += truth.back().num_segments();
  }
  out.score.reserve(edges.size());
  for (const auto& e : edges) {
    const auto it = slot.find(e.event_id);
    if (it == slot.end()) throw ValidationError("score_edges: unknown event id " + std::to_string(e.event_id));
    const auto& ti = truth[it->second];
    out.score.push_back(e.score);
    out.is_segment.push_back(ti.is_segment(e.source_hit, e.target_hit));
    out.correct.push_back(ti.same_particle(e.source_hit, e.target_hit));
  }
  return out;
}

ScoredEdges score_labels(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ValidationError("score_labels: size mismatch");
  ScoredEdges out;
  out.score.assign(scores.begin(), scores.end());
  for (auto l : labels) {
    if (l > 1) throw ValidationError("score_labels: labels must be 0 or 1");
    out.is_segment.push_back(l);
    out.correct.push_back(l);
    out.true_total += l;
  }
  return out;
}

SegmentMetrics segment_metrics(const ScoredEdges& edges, double threshold) {
  SegmentMetrics m;
  m.true_total = edges.true_total;
  for (std::size_t k = 0; k < edges.score.size(); ++k) {
    if (!(edges.score[k] >= threshold)) continue;
    ++m.predicted_total;
    m.predicted_correct += edges.correct[k];
    m.true_kept += edges.is_segment[k];
  }
  return m;
}

SegmentMetrics segment_metrics(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> kept) {
  if (labels.size() != kept.size()) throw ValidationError("segment_metrics: size mismatch");
  SegmentMetrics m;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    m.true_total += labels[k] != 0;
    if (!kept[k]) continue;
    ++m.predicted_total;
    m.predicted_correct += labels[k] != 0;
    m.true_kept += labels[k] != 0;
  }
  return m;
}

SweepCurve threshold_sweep(const ScoredEdges& edges, std::size_t points) {
  if (points < 2) throw ValidationError("threshold_sweep: need at least 2 points");
  SweepCurve c;
  for (std::size_t k = 0; k < points; ++k) c.thresholds.push_back(static_cast<double>(k) / static_cast<double>(points - 1));
  // Each edge counts towards every threshold <= its score, i.e. a prefix of
  // the grid; accumulate prefix lengths as differences.
  std::vector<SegmentMetrics> diff(points + 1);
  for (std::size_t k = 0; k < edges.score.size(); ++k) {
    const auto n = static_cast<std::size_t>(
        std::upper_bound(c.thresholds.begin(), c.thresholds.end(), edges.score[k]) - c.thresholds.begin());
    if (n == 0) continue;
    ++diff[0].predicted_total;
    diff[0].predicted_correct += edges.correct[k];
    diff[0].true_kept += edges.is_segment[k];
    --diff[n].predicted_total;
    diff[n].predicted_correct -= edges.correct[k];
    diff[n].true_kept -= edges.is_segment[k];
  }
  SegmentMetrics run;
  for (std::size_t k = 0; k < points; ++k) {
    run.predicted_total += diff[k].predicted_total;
    run.predicted_correct += diff[k].predicted_correct;
    run.true_kept += diff[k].true_kept;
    SegmentMetrics m = run;
    m.true_total = edges.true_total;
    c.metrics.push_back(m);
  }
  return c;
}

SweepCurve threshold_sweep(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t points) {
  return threshold_sweep(score_labels(scores, labels), points);
}

MatchedPoint efficiency_at_purity(const SweepCurve& curve, double target_purity) {
  MatchedPoint r;
  bool found = false;
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    const auto& m = curve.metrics[k];
    r.max_purity = std::max(r.max_purity, m.purity());
    if (m.purity() < target_purity) continue;
    if (!found || m.efficiency() > r.efficiency) {
      found = true;
      r.threshold = curve.thresholds[k];
      r.efficiency = m.efficiency();
      r.purity = m.purity();
    }
  }
  r.attained = found;
  return r;
}

std::pair<double, double> conformal_transform(double x, double y) {
  const double r2 = x * x + y * y;
  if (r2 == 0.0) throw ValidationError("conformal_transform: origin has no image");
  return {x / r2, y / r2};
}

std::vector<PredictedEdge> graph_edges(const EventGraph& g, std::span<const double> scores) {
  if (scores.size() != g.num_edges()) throw ValidationError("graph_edges: scores misaligned with edges");
  std::vector<PredictedEdge> out;
  out.reserve(g.num_edges());
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const auto s = static_cast<std::size_t>(g.E[k][0]);
    const auto t = static_cast<std::size_t>(g.E[k][1]);
    out.push_back({g.node_event[s], g.node_hit_id[s], g.node_hit_id[t], scores[k]});
  }
  return out;
}

std::string edges_to_csv(std::span<const PredictedEdge> edges) {
  std::string out = "event_id,source_hit,target_hit,score\n";
  for (const auto& e : edges) {
    out += std::to_string(e.event_id) + ',' + std::to_string(e.source_hit) + ',' + std::to_string(e.target_hit) +
           ',' + format_double(e.score) + '\n';
  }
  return out;
}

namespace {

template <typename T>
T parse_field(std::string_view s, std::size_t line) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("edge csv line " + std::to_string(line) + ": bad field '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::vector<PredictedEdge> edges_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "event_id,source_hit,target_hit,score") {
    throw ValidationError("edge csv: missing header");
  }
  std::vector<PredictedEdge> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 4) throw ValidationError("edge csv line " + std::to_string(n) + ": expected 4 fields");
    PredictedEdge e;
    e.event_id = parse_field<std::int64_t>(f[0], n);
    e.source_hit = parse_field<int>(f[1], n);
    e.target_hit = parse_field<int>(f[2], n);
    e.score = parse_field<double>(f[3], n);
    if (!(e.score >= 0.0 && e.score <= 1.0)) throw ValidationError("edge csv line " + std::to_string(n) + ": score outside [0, 1]");
    out.push_back(e);
  }
  return out;
}

void write_edge_csv(const std::string& path, std::span<const PredictedEdge> edges) {
  write_text_file(path, edges_to_csv(edges));
}

std::vector<PredictedEdge> read_edge_csv(const std::string& path) { return edges_from_csv(read_text_file(path)); }

std::string sweep_csv(const SweepCurve& curve) {
  std::string out = "threshold,efficiency,purity,true_kept,true_total,predicted_correct,predicted_total\n";
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    const auto& m = curve.metrics[k];
    out += format_double(curve.thresholds[k]) + ',' + format_double(m.efficiency()) + ',' +
           format_double(m.purity()) + ',' + std::to_string(m.true_kept) + ',' + std::to_string(m.true_total) + ',' +
           std::to_string(m.predicted_correct) + ',' + std::to_string(m.predicted_total) + '\n';
  }
  return out;
}

}  // namespace fdc
