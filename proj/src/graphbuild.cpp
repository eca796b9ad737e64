#include "fdctrack/graphbuild.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fdctrack/config.hpp"

namespace fdc {

void CutConfig::validate() const {
  if (!(max_dxy > 0.0) || !(max_dxy_over_dz > 0.0) || !(max_abs_dphi > 0.0)) {
    throw ValidationError("cuts: thresholds must be positive");
  }
  if (skip_max < 0 || skip_max > kNumPlanes - 1) throw ValidationError("cuts: skip_max must be in [0, 23]");
}

CutConfig parse_cut_config(const std::string& text) {
  const auto kv = KeyValueConfig::parse(text);
  kv.check_known({"max_dxy", "max_dxy_over_dz", "max_abs_dphi", "skip_max"});
  CutConfig c;
  c.max_dxy = kv.get_double("max_dxy", c.max_dxy);
  c.max_dxy_over_dz = kv.get_double("max_dxy_over_dz", c.max_dxy_over_dz);
  c.max_abs_dphi = kv.get_double("max_abs_dphi", c.max_abs_dphi);
  c.skip_max = static_cast<int>(kv.get_int("skip_max", c.skip_max));
  c.validate();
  return c;
}

std::string format_cut_config(const CutConfig& c) {
  std::ostringstream out;
  out << "max_dxy = " << format_double(c.max_dxy) << "\n"
      << "max_dxy_over_dz = " << format_double(c.max_dxy_over_dz) << "\n"
      << "max_abs_dphi = " << format_double(c.max_abs_dphi) << "\n"
      << "skip_max = " << c.skip_max << "\n";
  return out.str();
}

void EventGraph::validate(int skip_max) const {
  const std::size_t n = X.size();
  if (node_plane.size() != n || node_event.size() != n || node_hit_id.size() != n) {
    throw ValidationError("graph: node arrays disagree in length");
  }
  if (labels && labels->size() != E.size()) throw ValidationError("graph: labels misaligned with edges");
  for (std::size_t k = 0; k < E.size(); ++k) {
    const auto [s, t] = E[k];
    if (s < 0 || t < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(t) >= n) {
      throw ValidationError("graph: edge index out of range");
    }
    const int gap = node_plane[static_cast<std::size_t>(t)] - node_plane[static_cast<std::size_t>(s)];
    if (gap <= 0 || gap > 1 + skip_max) throw ValidationError("graph: edge violates plane ordering");
    if (node_event[static_cast<std::size_t>(s)] != node_event[static_cast<std::size_t>(t)]) {
      throw ValidationError("graph: edge crosses events");
    }
    if (k > 0 && !(E[k - 1] < E[k])) throw ValidationError("graph: edges not sorted or duplicated");
  }
}

bool edge_passes_cuts(const Hit& a, const Hit& b, const CutConfig& cuts, const DetectorGeometry& geom) {
  if (b.plane <= a.plane) throw ValidationError("edge_passes_cuts: target plane must be downstream of source");
  const double dz = geom.plane_z[static_cast<std::size_t>(b.plane)] - geom.plane_z[static_cast<std::size_t>(a.plane)];
  const double dxy = std::hypot(b.x - a.x, b.y - a.y);
  return dxy < cuts.max_dxy && dxy / dz < cuts.max_dxy_over_dz &&
         std::abs(wrap_angle(b.phi - a.phi)) < cuts.max_abs_dphi;
}

namespace {

struct BuildScratch {
  std::vector<int> order;        // hit indices sorted by (plane, hit_id)
  std::vector<int> plane_begin;  // offsets into `order`, size planes + 1
  std::vector<int> fill;
};

void append_event(const Event& ev, const CutConfig& cuts, const DetectorGeometry& geom, BuildScratch& scratch,
                  EventGraph& g) {
  const int n_planes = geom.num_planes();
  auto& order = scratch.order;
  auto& begin = scratch.plane_begin;
  order.resize(ev.hits.size());
  begin.assign(static_cast<std::size_t>(n_planes) + 1, 0);
  for (const auto& h : ev.hits) {
    if (h.plane < 0 || h.plane >= n_planes) throw ValidationError("graph build: hit plane out of range");
    ++begin[static_cast<std::size_t>(h.plane) + 1];
  }
  std::partial_sum(begin.begin(), begin.end(), begin.begin());
  auto& fill = scratch.fill;  // counting sort by plane
  fill.assign(begin.begin(), begin.end() - 1);
  for (std::size_t i = 0; i < ev.hits.size(); ++i) {
    order[static_cast<std::size_t>(fill[static_cast<std::size_t>(ev.hits[i].plane)]++)] = static_cast<int>(i);
  }
  for (int p = 0; p < n_planes; ++p) {
    std::sort(order.begin() + begin[static_cast<std::size_t>(p)], order.begin() + begin[static_cast<std::size_t>(p) + 1],
              [&](int a, int b) { return ev.hits[static_cast<std::size_t>(a)].hit_id < ev.hits[static_cast<std::size_t>(b)].hit_id; });
  }

  const int offset = static_cast<int>(g.X.size());
  for (int idx : order) {
    const Hit& h = ev.hits[static_cast<std::size_t>(idx)];
    g.X.push_back({h.r, h.phi, h.z});
    g.node_plane.push_back(h.plane);
    g.node_event.push_back(ev.event_id);
    g.node_hit_id.push_back(h.hit_id);
  }

  const int n = static_cast<int>(order.size());
  for (int i = 0; i < n; ++i) {
    const Hit& a = ev.hits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    const int last_plane = std::min(n_planes - 1, a.plane + 1 + cuts.skip_max);
    const int j_end = begin[static_cast<std::size_t>(last_plane) + 1];
    for (int j = begin[static_cast<std::size_t>(a.plane) + 1]; j < j_end; ++j) {
      const Hit& b = ev.hits[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
      if (edge_passes_cuts(a, b, cuts, geom)) g.E.push_back({offset + i, offset + j});
    }
  }
}

}  // namespace

EventGraph build_event_graph(const Event& ev, const CutConfig& cuts, const DetectorGeometry& geom) {
  return build_batched_graph(std::span<const Event>(&ev, 1), cuts, geom);
}

EventGraph build_batched_graph(std::span<const Event> events, const CutConfig& cuts, const DetectorGeometry& geom) {
  cuts.validate();
  {
    std::set<std::int64_t> ids;
    for (const auto& ev : events) {
      if (!ids.insert(ev.event_id).second) throw ValidationError("batched build: duplicate event_id");
    }
  }
  EventGraph g;
  BuildScratch scratch;
  std::size_t total_hits = 0;
  for (const auto& ev : events) total_hits += ev.hits.size();
  g.X.reserve(total_hits);
  g.node_plane.reserve(total_hits);
  g.node_event.reserve(total_hits);
  g.node_hit_id.reserve(total_hits);
  g.E.reserve(total_hits * 6);
  for (const auto& ev : events) append_event(ev, cuts, geom, scratch, g);
  return g;
}

std::vector<std::uint8_t> label_edges(const EventGraph& g, const Event& ev) {
  std::vector<int> truth(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (g.node_event[i] != ev.event_id) throw ValidationError("label_edges: graph node from another event");
    const int idx = ev.find_hit(g.node_hit_id[i]);
    if (idx < 0) throw ValidationError("label_edges: node hit id not found in event");
    truth[i] = ev.hits[static_cast<std::size_t>(idx)].truth_id;
  }
  std::vector<std::uint8_t> labels(g.num_edges());
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const int ts = truth[static_cast<std::size_t>(g.E[k][0])];
    const int tt = truth[static_cast<std::size_t>(g.E[k][1])];
    labels[k] = (ts >= 0 && ts == tt) ? 1 : 0;
  }
  return labels;
}

EventGraph build_labeled_graph(const Event& ev, const CutConfig& cuts, const DetectorGeometry& geom) {
  EventGraph g = build_event_graph(ev, cuts, geom);
  g.labels = label_edges(g, ev);
  return g;
}

EventGraph concat_graphs(std::span<const EventGraph* const> graphs) {
  EventGraph out;
  bool all_labeled = !graphs.empty();
  for (const EventGraph* g : graphs) all_labeled = all_labeled && g->labels.has_value();
  if (all_labeled) out.labels.emplace();
  for (const EventGraph* g : graphs) {
    const int offset = static_cast<int>(out.X.size());
    out.X.insert(out.X.end(), g->X.begin(), g->X.end());
    out.node_plane.insert(out.node_plane.end(), g->node_plane.begin(), g->node_plane.end());
    out.node_event.insert(out.node_event.end(), g->node_event.begin(), g->node_event.end());
    out.node_hit_id.insert(out.node_hit_id.end(), g->node_hit_id.begin(), g->node_hit_id.end());
    for (const auto& e : g->E) out.E.push_back({e[0] + offset, e[1] + offset});
    if (all_labeled) out.labels->insert(out.labels->end(), g->labels->begin(), g->labels->end());
  }
  return out;
}

std::vector<EventGraph> split_by_event(const EventGraph& g) {
  std::vector<EventGraph> out;
  std::vector<int> local(g.num_nodes());
  std::vector<std::size_t> owner(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (i == 0 || g.node_event[i] != g.node_event[i - 1]) {
      out.emplace_back();
      if (g.labels) out.back().labels.emplace();
    }
    EventGraph& cur = out.back();
    local[i] = static_cast<int>(cur.X.size());
    owner[i] = out.size() - 1;
    cur.X.push_back(g.X[i]);
    cur.node_plane.push_back(g.node_plane[i]);
    cur.node_event.push_back(g.node_event[i]);
    cur.node_hit_id.push_back(g.node_hit_id[i]);
  }
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const auto s = static_cast<std::size_t>(g.E[k][0]);
    const auto t = static_cast<std::size_t>(g.E[k][1]);
    if (owner[s] != owner[t]) throw ValidationError("split_by_event: edge crosses events");
    EventGraph& cur = out[owner[s]];
    cur.E.push_back({local[s], local[t]});
    if (g.labels) cur.labels->push_back((*g.labels)[k]);
  }
  return out;
}

EventGraph permute_nodes(const EventGraph& g, std::span<const int> perm) {
  if (perm.size() != g.num_nodes()) throw ValidationError("permute_nodes: permutation size mismatch");
  EventGraph out;
  std::vector<int> inverse(perm.size(), -1);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto src = static_cast<std::size_t>(perm[i]);
    if (src >= perm.size() || inverse[src] != -1) throw ValidationError("permute_nodes: not a permutation");
    inverse[src] = static_cast<int>(i);
    out.X.push_back(g.X[src]);
    out.node_plane.push_back(g.node_plane[src]);
    out.node_event.push_back(g.node_event[src]);
    out.node_hit_id.push_back(g.node_hit_id[src]);
  }
  for (const auto& e : g.E) {
    out.E.push_back({inverse[static_cast<std::size_t>(e[0])], inverse[static_cast<std::size_t>(e[1])]});
  }
  out.labels = g.labels;
  return out;
}

std::vector<std::pair<int, int>> truth_segments(const Event& ev, int truth_skip_max) {
  std::vector<std::pair<int, int>> out;
  for (const auto& track : ev.truth_tracks) {
    for (std::size_t k = 1; k < track.hit_ids.size(); ++k) {
      const int a = ev.find_hit(track.hit_ids[k - 1]);
      const int b = ev.find_hit(track.hit_ids[k]);
      if (a < 0 || b < 0) throw ValidationError("truth_segments: track references unknown hit");
      const int gap = ev.hits[static_cast<std::size_t>(b)].plane - ev.hits[static_cast<std::size_t>(a)].plane;
      if (gap > 0 && gap <= 1 + truth_skip_max) out.emplace_back(track.hit_ids[k - 1], track.hit_ids[k]);
    }
  }
  return out;
}

TruthIndex::TruthIndex(const Event& ev, int truth_skip_max) : segments_(truth_segments(ev, truth_skip_max)) {
  std::sort(segments_.begin(), segments_.end());
  int max_id = -1;
  for (const auto& h : ev.hits) max_id = std::max(max_id, h.hit_id);
  truth_of_hit_.assign(static_cast<std::size_t>(max_id + 1), -1);
  for (const auto& h : ev.hits) {
    if (h.hit_id >= 0) truth_of_hit_[static_cast<std::size_t>(h.hit_id)] = h.truth_id;
  }
}

bool TruthIndex::is_segment(int source_hit, int target_hit) const {
  return std::binary_search(segments_.begin(), segments_.end(), std::make_pair(source_hit, target_hit));
}

bool TruthIndex::same_particle(int source_hit, int target_hit) const {
  const auto lookup = [&](int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= truth_of_hit_.size()) {
      throw ValidationError("truth lookup: unknown hit id " + std::to_string(id));
    }
    return truth_of_hit_[static_cast<std::size_t>(id)];
  };
  const int a = lookup(source_hit);
  return a >= 0 && a == lookup(target_hit);
}

BuilderCounts& BuilderCounts::operator+=(const BuilderCounts& o) {
  segments_found += o.segments_found;
  segments_total += o.segments_total;
  edges_correct += o.edges_correct;
  edges_total += o.edges_total;
  return *this;
}

BuilderCounts count_builder(const EventGraph& g, const Event& ev, int truth_skip_max) {
  const TruthIndex truth(ev, truth_skip_max);
  BuilderCounts c;
  c.segments_total = truth.num_segments();
  c.edges_total = g.num_edges();
  for (const auto& e : g.E) {
    const int s = g.node_hit_id[static_cast<std::size_t>(e[0])];
    const int t = g.node_hit_id[static_cast<std::size_t>(e[1])];
    if (truth.is_segment(s, t)) ++c.segments_found;
    if (truth.same_particle(s, t)) ++c.edges_correct;
  }
  return c;
}

std::string graph_to_json(const EventGraph& g, const Event& ev) {
  auto j = nlohmann::ordered_json::parse(event_to_json(ev));
  j["node_hit_id"] = g.node_hit_id;
  auto X = nlohmann::ordered_json::array();
  for (const auto& row : g.X) X.push_back({row[0], row[1], row[2]});
  j["X"] = std::move(X);
  auto E = nlohmann::ordered_json::array();
  for (const auto& e : g.E) E.push_back({e[0], e[1]});
  j["E"] = std::move(E);
  if (g.labels) {
    std::vector<int> labels(g.labels->begin(), g.labels->end());
    j["labels"] = labels;
  }
  return j.dump();
}

std::pair<EventGraph, Event> graph_from_json(const std::string& line, const DetectorGeometry& geom) {
  Event ev = event_from_json(line, geom);
  EventGraph g;
  try {
    const auto j = nlohmann::json::parse(line);
    g.node_hit_id = j.at("node_hit_id").get<std::vector<int>>();
    for (const auto& row : j.at("X")) g.X.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>()});
    for (const auto& e : j.at("E")) g.E.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    if (j.contains("labels")) {
      const auto labels = j.at("labels").get<std::vector<int>>();
      g.labels.emplace(labels.begin(), labels.end());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("graph json: ") + e.what());
  }
  if (g.node_hit_id.size() != g.X.size()) throw ValidationError("graph json: node_hit_id and X differ in length");
  for (int id : g.node_hit_id) {
    const int idx = ev.find_hit(id);
    if (idx < 0) throw ValidationError("graph json: node references unknown hit");
    g.node_plane.push_back(ev.hits[static_cast<std::size_t>(idx)].plane);
    g.node_event.push_back(ev.event_id);
  }
  g.validate();
  return {std::move(g), std::move(ev)};
}

void write_graphs(const std::string& path, std::span<const EventGraph> graphs, std::span<const Event> events) {
  if (graphs.size() != events.size()) throw ValidationError("write_graphs: graph/event count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < graphs.size(); ++i) out << graph_to_json(graphs[i], events[i]) << '\n';
}

std::vector<std::pair<EventGraph, Event>> read_graphs(const std::string& path, const DetectorGeometry& geom) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::pair<EventGraph, Event>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(graph_from_json(line, geom));
  }
  return out;
}

}  // namespace fdc
