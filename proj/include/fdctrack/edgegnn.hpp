#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fdctrack/detector.hpp"
#include "fdctrack/graphbuild.hpp"
#include "fdctrack/tinynn.hpp"

namespace fdc {

/// Affine map of (r, phi, z) onto [-1, 1] per column. Azimuths are first
/// measured from a per-event reference (see azimuth_reference) so the +-pi
/// seam falls where the event has no hits instead of through a track.
struct FeatureScaler {
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> half_range{1, 1, 1};

  static FeatureScaler from_geometry(const DetectorGeometry& geom);
  nn::Matrix apply(const EventGraph& g) const;
  bool operator==(const FeatureScaler&) const = default;
};

/// Reference angle for one event's azimuths: wrap(phi - ref) sends the middle
/// of the widest empty arc between neighbouring hits to +-pi. Depends only on
/// the set of values; ties go to the arc starting at the smallest angle.
/// Zero for no hits.
double azimuth_reference(std::vector<double> phis);

/// Weights of the edge classifier: input network (3 -> W), edge network
/// (2(W+3) -> 1, sigmoid head) and node network (3(W+3) -> W).
struct EdgeClassifierParams {
  nn::MlpParams input_mlp;
  nn::MlpParams edge_mlp;
  nn::MlpParams node_mlp;
  int iterations = 1;
  std::size_t width = 0;
  std::size_t depth = 0;
  FeatureScaler scaler;

  static EdgeClassifierParams make(std::size_t width, std::size_t depth, int iterations,
                                   const DetectorGeometry& geom, CounterRng& rng);
  void validate() const;
  std::size_t augmented_dim() const { return width + 3; }

  std::vector<std::span<double>> parameter_spans();
  std::vector<std::span<const double>> parameter_spans() const;
  EdgeClassifierParams zeros_like() const;

  bool operator==(const EdgeClassifierParams&) const = default;
};

/// Per-node neighbor lists in compressed form. Each list is ordered by a
/// key of the neighbor, so sums over neighbors are evaluated in an order
/// that does not depend on node numbering.
struct GraphTopology {
  std::vector<int> in_begin, in_edge;    // edges (a -> n), for every n
  std::vector<int> out_begin, out_edge;  // edges (n -> b), for every n

  /// Neighbors ordered by (event, plane, hit id); for canonical graphs this
  /// is ascending node index.
  static GraphTopology from_graph(const EventGraph& g);
  /// Neighbors ordered by node index.
  static GraphTopology from_edges(std::size_t num_nodes, std::span<const std::array<int, 2>> edges);
};

/// [H | X]: the embedding with the scaled input features appended.
nn::Matrix augment(const nn::Matrix& h, const nn::Matrix& xs);

nn::Matrix input_expand(const EdgeClassifierParams& p, const nn::Matrix& xs);

/// alpha[k] = edge_mlp([H_aug[src]; H_aug[tgt]]).
std::vector<double> edge_network(const nn::MlpParams& edge_mlp, const nn::Matrix& h_aug,
                                 std::span<const std::array<int, 2>> edges);

/// Builds the node network input [left messages; own embedding; right
/// messages] where messages are alpha-weighted sums of neighbor embeddings.
nn::Matrix node_network_input(const nn::Matrix& h_aug, std::span<const double> alpha,
                              std::span<const std::array<int, 2>> edges, const GraphTopology& topo);

nn::Matrix node_network(const nn::MlpParams& node_mlp, const nn::Matrix& h_aug, std::span<const double> alpha,
                        std::span<const std::array<int, 2>> edges, const GraphTopology& topo);

/// Per-edge probability of being a true segment. Train mode applies
/// dropout and needs `rng`.
std::vector<double> classify_edges(const EdgeClassifierParams& p, const EventGraph& g,
                                   nn::Mode mode = nn::Mode::kInfer, double dropout_prob = 0.0,
                                   CounterRng* rng = nullptr);

struct LossAndGradients {
  double loss = 0.0;
  std::vector<double> scores;
  EdgeClassifierParams grads;
};

/// Mean BCE of the final scores against `g.labels` and its exact gradient.
LossAndGradients loss_and_gradients(const EdgeClassifierParams& p, const EventGraph& g, nn::Mode mode,
                                    double dropout_prob, CounterRng* rng);

struct TrainConfig {
  double learning_rate = 1e-3;
  double dropout_prob = 0.05;
  std::size_t batch_size = 32;
  int epochs = 50;
  int patience = 10;
  std::uint64_t seed = 1;
  /// Optional cap on wall-clock seconds; 0 disables.
  double max_seconds = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_efficiency = 0.0;  // label-level, threshold 0.5
  double val_purity = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  EdgeClassifierParams params;  // best validation loss
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const EdgeClassifierParams& init, std::span<const EventGraph> train_graphs,
                  std::span<const EventGraph> val_graphs, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean BCE over all edges of `graphs` in inference mode.
double evaluate_loss(const EdgeClassifierParams& p, std::span<const EventGraph> graphs, std::size_t batch_size = 32);

// Checkpoint directory: input.tnn, edge.tnn, node.tnn (tinynn binary) and
// model.json {width, depth, iterations, scaler}.
void save_checkpoint(const std::string& dir, const EdgeClassifierParams& p);
EdgeClassifierParams load_checkpoint(const std::string& dir);

}  // namespace fdc
