#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdctrack/detector.hpp"
#include "fdctrack/simgen.hpp"

namespace fdc {

/// Geometric edge cuts plus the number of planes an edge may skip.
struct CutConfig {
  double max_dxy = 34.4;          // cm
  double max_dxy_over_dz = 5.4;   // cm / cm
  double max_abs_dphi = 2.3;      // rad
  int skip_max = 3;

  void validate() const;
  bool operator==(const CutConfig&) const = default;
};

CutConfig parse_cut_config(const std::string& text);
std::string format_cut_config(const CutConfig& cuts);

/// Candidate-edge graph for one event or a batch of events.
///
/// Nodes are ordered by (event, plane, hit_id); edges by (source, target)
/// and always point from a lower to a strictly higher plane.
struct EventGraph {
  std::vector<std::array<double, 3>> X;       // (r, phi, z) per node
  std::vector<std::array<int, 2>> E;          // (source, target) node indices
  std::optional<std::vector<std::uint8_t>> labels;
  std::vector<int> node_plane;
  std::vector<std::int64_t> node_event;
  std::vector<int> node_hit_id;

  std::size_t num_nodes() const { return X.size(); }
  std::size_t num_edges() const { return E.size(); }

  /// Throws ValidationError on any structural invariant violation.
  void validate(int skip_max = kNumPlanes) const;
  bool operator==(const EventGraph&) const = default;
};

/// Tests the three geometric cuts. Requires b.plane > a.plane.
bool edge_passes_cuts(const Hit& a, const Hit& b, const CutConfig& cuts, const DetectorGeometry& geom);

EventGraph build_event_graph(const Event& ev, const CutConfig& cuts, const DetectorGeometry& geom);

/// Per-edge "same particle" labels; noise hits never match anything.
std::vector<std::uint8_t> label_edges(const EventGraph& g, const Event& ev);

/// Concatenation of per-event graphs with no cross-event edges. Scratch
/// buffers are shared across the batch.
EventGraph build_batched_graph(std::span<const Event> events, const CutConfig& cuts, const DetectorGeometry& geom);

/// Builds and labels in one go.
EventGraph build_labeled_graph(const Event& ev, const CutConfig& cuts, const DetectorGeometry& geom);

/// Concatenates already-built graphs; labels are kept only if all carry them.
EventGraph concat_graphs(std::span<const EventGraph* const> graphs);

/// Splits a batched graph back into per-event graphs (in node order).
std::vector<EventGraph> split_by_event(const EventGraph& g);

/// Applies a node permutation: node i of the result is node perm[i] of g.
/// Edges keep their order (each endpoint is renamed).
EventGraph permute_nodes(const EventGraph& g, std::span<const int> perm);

// ---------------------------------------------------------------------------
// Truth segments

/// Reference skip used to define the truth segment set when scoring.
inline constexpr int kTruthSkipMax = 3;

/// Pairs of hit ids (source, target) that form true segments: consecutive
/// recorded hits of one truth track whose plane gap is at most
/// 1 + truth_skip_max.
std::vector<std::pair<int, int>> truth_segments(const Event& ev, int truth_skip_max = kTruthSkipMax);

/// Lookup of truth information for scoring predicted edges of one event.
class TruthIndex {
 public:
  explicit TruthIndex(const Event& ev, int truth_skip_max = kTruthSkipMax);

  std::size_t num_segments() const { return segments_.size(); }
  bool is_segment(int source_hit, int target_hit) const;
  /// Both hits belong to the same particle.
  bool same_particle(int source_hit, int target_hit) const;

 private:
  std::vector<std::pair<int, int>> segments_;  // sorted
  std::vector<int> truth_of_hit_;              // indexed by hit id
};

/// Builder-level counts for one graph.
struct BuilderCounts {
  std::size_t segments_found = 0;  // edges that are truth segments
  std::size_t segments_total = 0;  // truth segments
  std::size_t edges_correct = 0;   // edges joining hits of one particle
  std::size_t edges_total = 0;
  BuilderCounts& operator+=(const BuilderCounts& o);
};

BuilderCounts count_builder(const EventGraph& g, const Event& ev, int truth_skip_max = kTruthSkipMax);

// JSON-lines persistence: event fields followed by X, E, labels.
std::string graph_to_json(const EventGraph& g, const Event& ev);
std::pair<EventGraph, Event> graph_from_json(const std::string& line, const DetectorGeometry& geom);
void write_graphs(const std::string& path, std::span<const EventGraph> graphs, std::span<const Event> events);
std::vector<std::pair<EventGraph, Event>> read_graphs(const std::string& path, const DetectorGeometry& geom);

}  // namespace fdc
