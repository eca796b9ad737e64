#include "fdctrack/edgegnn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>
#include <utility>

#include <json.hpp>

namespace fdc {

using nn::Matrix;
using nn::MlpParams;

FeatureScaler FeatureScaler::from_geometry(const DetectorGeometry& geom) {
  FeatureScaler s;
  s.center = {0.5 * (geom.active_radius_min + geom.active_radius_max), 0.0,
              0.5 * (geom.plane_z.front() + geom.plane_z.back())};
  s.half_range = {0.5 * (geom.active_radius_max - geom.active_radius_min), kPi,
                  0.5 * (geom.plane_z.back() - geom.plane_z.front())};
  return s;
}

double azimuth_reference(std::vector<double> phis) {
  if (phis.empty()) return 0.0;
  std::sort(phis.begin(), phis.end());
  // strict comparisons keep the arc with the lowest start on ties; the
  // wrap-around arc starts at the largest angle so it is scanned last
  double best_gap = -1.0, best_start = 0.0;
  for (std::size_t k = 0; k + 1 < phis.size(); ++k) {
    const double gap = phis[k + 1] - phis[k];
    if (gap > best_gap) {
      best_gap = gap;
      best_start = phis[k];
    }
  }
  const double wrap_gap = phis.front() + 2.0 * kPi - phis.back();
  if (wrap_gap > best_gap) {
    best_gap = wrap_gap;
    best_start = phis.back();
  }
  return wrap_angle(best_start + 0.5 * best_gap + kPi);
}

Matrix FeatureScaler::apply(const EventGraph& g) const {
  const std::size_t n = g.num_nodes();
  std::map<std::int64_t, std::vector<double>> by_event;
  for (std::size_t i = 0; i < n; ++i) by_event[g.node_event[i]].push_back(g.X[i][1]);
  std::map<std::int64_t, double> ref;
  for (auto& [ev, phis] : by_event) ref[ev] = azimuth_reference(std::move(phis));
  Matrix xs(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = wrap_angle(g.X[i][1] - ref[g.node_event[i]]);
    xs(i, 0) = (g.X[i][0] - center[0]) / half_range[0];
    xs(i, 1) = (phi - center[1]) / half_range[1];
    xs(i, 2) = (g.X[i][2] - center[2]) / half_range[2];
  }
  return xs;
}

EdgeClassifierParams EdgeClassifierParams::make(std::size_t width, std::size_t depth, int iterations,
                                                const DetectorGeometry& geom, CounterRng& rng) {
  if (width == 0 || depth == 0) throw ValidationError("edge classifier: width and depth must be positive");
  if (iterations < 1) throw ValidationError("edge classifier: need at least one message-passing iteration");
  using nn::Activation;
  EdgeClassifierParams p;
  const std::size_t aug = width + 3;
  p.input_mlp = nn::make_mlp(3, width, width, depth, Activation::kRelu, Activation::kRelu, rng);
  p.edge_mlp = nn::make_mlp(2 * aug, width, 1, depth, Activation::kRelu, Activation::kSigmoid, rng);
  p.node_mlp = nn::make_mlp(3 * aug, width, width, depth, Activation::kRelu, Activation::kRelu, rng);
  p.iterations = iterations;
  p.width = width;
  p.depth = depth;
  p.scaler = FeatureScaler::from_geometry(geom);
  return p;
}

void EdgeClassifierParams::validate() const {
  input_mlp.validate();
  edge_mlp.validate();
  node_mlp.validate();
  const std::size_t aug = augmented_dim();
  if (input_mlp.in_dim() != 3 || input_mlp.out_dim() != width) throw ValidationError("edge classifier: input network must map 3 -> W");
  if (edge_mlp.in_dim() != 2 * aug || edge_mlp.out_dim() != 1) throw ValidationError("edge classifier: edge network must map 2(W+3) -> 1");
  if (node_mlp.in_dim() != 3 * aug || node_mlp.out_dim() != width) throw ValidationError("edge classifier: node network must map 3(W+3) -> W");
  if (edge_mlp.layers.back().activation != nn::Activation::kSigmoid) throw ValidationError("edge classifier: edge head must be sigmoid");
  if (iterations < 1) throw ValidationError("edge classifier: iterations must be >= 1");
}

std::vector<std::span<double>> EdgeClassifierParams::parameter_spans() {
  auto out = nn::parameter_spans(input_mlp);
  for (auto s : nn::parameter_spans(edge_mlp)) out.push_back(s);
  for (auto s : nn::parameter_spans(node_mlp)) out.push_back(s);
  return out;
}

std::vector<std::span<const double>> EdgeClassifierParams::parameter_spans() const {
  auto out = nn::parameter_spans(input_mlp);
  for (auto s : nn::parameter_spans(edge_mlp)) out.push_back(s);
  for (auto s : nn::parameter_spans(node_mlp)) out.push_back(s);
  return out;
}

EdgeClassifierParams EdgeClassifierParams::zeros_like() const {
  EdgeClassifierParams z = *this;
  z.input_mlp = input_mlp.zeros_like();
  z.edge_mlp = edge_mlp.zeros_like();
  z.node_mlp = node_mlp.zeros_like();
  return z;
}

namespace {

using NodeKey = std::tuple<std::int64_t, int, int>;

GraphTopology make_topology(std::size_t n, std::span<const std::array<int, 2>> edges,
                            const std::function<bool(int, int)>& less) {
  GraphTopology t;
  t.in_begin.assign(n + 1, 0);
  t.out_begin.assign(n + 1, 0);
  for (const auto& e : edges) {
    if (e[0] < 0 || e[1] < 0 || static_cast<std::size_t>(e[0]) >= n || static_cast<std::size_t>(e[1]) >= n) {
      throw ValidationError("topology: edge index out of range");
    }
    ++t.out_begin[static_cast<std::size_t>(e[0]) + 1];
    ++t.in_begin[static_cast<std::size_t>(e[1]) + 1];
  }
  std::partial_sum(t.in_begin.begin(), t.in_begin.end(), t.in_begin.begin());
  std::partial_sum(t.out_begin.begin(), t.out_begin.end(), t.out_begin.begin());
  t.in_edge.resize(edges.size());
  t.out_edge.resize(edges.size());
  std::vector<int> in_fill(t.in_begin.begin(), t.in_begin.end() - 1);
  std::vector<int> out_fill(t.out_begin.begin(), t.out_begin.end() - 1);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    t.out_edge[static_cast<std::size_t>(out_fill[static_cast<std::size_t>(edges[k][0])]++)] = static_cast<int>(k);
    t.in_edge[static_cast<std::size_t>(in_fill[static_cast<std::size_t>(edges[k][1])]++)] = static_cast<int>(k);
  }
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(t.in_edge.begin() + t.in_begin[v], t.in_edge.begin() + t.in_begin[v + 1], [&](int a, int b) {
      return less(edges[static_cast<std::size_t>(a)][0], edges[static_cast<std::size_t>(b)][0]);
    });
    std::sort(t.out_edge.begin() + t.out_begin[v], t.out_edge.begin() + t.out_begin[v + 1], [&](int a, int b) {
      return less(edges[static_cast<std::size_t>(a)][1], edges[static_cast<std::size_t>(b)][1]);
    });
  }
  return t;
}

}  // namespace

GraphTopology GraphTopology::from_graph(const EventGraph& g) {
  const auto key = [&](int v) {
    const auto i = static_cast<std::size_t>(v);
    return NodeKey{g.node_event[i], g.node_plane[i], g.node_hit_id[i]};
  };
  return make_topology(g.num_nodes(), g.E, [&](int a, int b) { return key(a) < key(b); });
}

GraphTopology GraphTopology::from_edges(std::size_t num_nodes, std::span<const std::array<int, 2>> edges) {
  return make_topology(num_nodes, edges, [](int a, int b) { return a < b; });
}

Matrix augment(const Matrix& h, const Matrix& xs) {
  if (h.rows() != xs.rows()) throw ValidationError("augment: row count mismatch");
  const std::size_t w = h.cols();
  Matrix out(h.rows(), w + xs.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(h.row(i).begin(), h.row(i).end(), dst.begin());
    std::copy(xs.row(i).begin(), xs.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(w));
  }
  return out;
}

Matrix input_expand(const EdgeClassifierParams& p, const Matrix& xs) {
  if (xs.cols() != 3) throw ValidationError("input_expand: expected 3 feature columns");
  if (xs.rows() == 0) return Matrix(0, p.width);
  return nn::mlp_infer(p.input_mlp, xs);
}

namespace {

std::vector<double> column0(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, 0);
  return out;
}

struct EdgeNetCache {
  Matrix act0;   // first-layer output before dropout
  Matrix mask0;  // empty unless dropout was applied
  nn::MlpCache tail;
};

MlpParams tail_of(const MlpParams& m) {
  MlpParams t;
  t.layers.assign(m.layers.begin() + 1, m.layers.end());
  return t;
}

// Rows [first, first + count) of a weight matrix.
Matrix weight_rows(const Matrix& w, std::size_t first, std::size_t count) {
  Matrix out(count, w.cols());
  for (std::size_t i = 0; i < count; ++i) std::copy_n(w.row(first + i).begin(), w.cols(), out.row(i).begin());
  return out;
}

// The first edge layer acts on [h_src; h_tgt], so it splits into a source
// and a target projection computed once per node and summed per edge.
Matrix edge_first_layer(const nn::DenseLayer& l0, const Matrix& h_aug, std::span<const std::array<int, 2>> edges) {
  const std::size_t a = h_aug.cols();
  if (l0.weight.rows() != 2 * a) throw ValidationError("edge_network: input width does not match embeddings");
  const std::size_t w = l0.weight.cols();
  Matrix ps, pt;
  nn::matmul(h_aug, weight_rows(l0.weight, 0, a), ps);
  nn::matmul(h_aug, weight_rows(l0.weight, a, a), pt);
  Matrix z(edges.size(), w);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto s = static_cast<std::size_t>(edges[k][0]);
    const auto t = static_cast<std::size_t>(edges[k][1]);
    if (s >= h_aug.rows() || t >= h_aug.rows()) throw ValidationError("edge_network: edge index out of range");
    const double* rs = ps.row(s).data();
    const double* rt = pt.row(t).data();
    double* dst = z.row(k).data();
    for (std::size_t j = 0; j < w; ++j) dst[j] = rs[j] + rt[j] + l0.bias[j];
    nn::apply_activation(l0.activation, {dst, w});
  }
  return z;
}

std::vector<double> edge_forward(const MlpParams& edge_mlp, const Matrix& h_aug,
                                 std::span<const std::array<int, 2>> edges, nn::Mode mode, double dropout_prob,
                                 CounterRng* rng, EdgeNetCache* cache) {
  if (edge_mlp.layers.empty()) throw ValidationError("edge_network: no layers");
  Matrix z = edge_first_layer(edge_mlp.layers.front(), h_aug, edges);
  const bool hidden = edge_mlp.layers.size() > 1;
  if (cache) cache->act0 = z;
  if (mode == nn::Mode::kTrain && dropout_prob > 0.0 && hidden) {
    if (!rng) throw ValidationError("edge_network: train-mode dropout needs an rng");
    Matrix mask(z.rows(), z.cols());
    const double scale = 1.0 / (1.0 - dropout_prob);
    for (double& m : mask.data()) m = rng->bernoulli(dropout_prob) ? 0.0 : scale;
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] *= mask.data()[i];
    if (cache) cache->mask0 = std::move(mask);
  }
  if (!hidden) return column0(z);
  const MlpParams tail = tail_of(edge_mlp);
  if (!cache && mode == nn::Mode::kInfer) return column0(nn::mlp_infer(tail, z));
  auto [out, c] = nn::mlp_forward(tail, z, mode, dropout_prob, rng);
  if (cache) cache->tail = std::move(c);
  return column0(out);
}

// Backward through one edge-network call; parameter gradients are added to
// `grads` and embedding gradients to `d_h_aug`.
void edge_backward(const MlpParams& edge_mlp, const Matrix& h_aug, std::span<const std::array<int, 2>> edges,
                   const EdgeNetCache& cache, const Matrix& d_alpha, MlpParams& grads, Matrix& d_h_aug) {
  Matrix grad = d_alpha;
  if (edge_mlp.layers.size() > 1) {
    auto tg = nn::mlp_backward(tail_of(edge_mlp), cache.tail, grad);
    for (std::size_t l = 0; l < tg.params.layers.size(); ++l) {
      auto& dst = grads.layers[l + 1];
      const auto& src = tg.params.layers[l];
      for (std::size_t i = 0; i < dst.weight.size(); ++i) dst.weight.data()[i] += src.weight.data()[i];
      for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += src.bias[i];
    }
    grad = std::move(tg.input);
  }
  if (!cache.mask0.data().empty()) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] *= cache.mask0.data()[i];
  }
  const auto& l0 = edge_mlp.layers.front();
  nn::activation_backward(l0.activation, cache.act0.data(), grad.data());

  const std::size_t n = h_aug.rows();
  const std::size_t a = h_aug.cols();
  const std::size_t w = grad.cols();
  Matrix gs(n, w), gt(n, w);
  auto& g0 = grads.layers.front();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const double* src = grad.row(k).data();
    double* ds = gs.row(static_cast<std::size_t>(edges[k][0])).data();
    double* dt = gt.row(static_cast<std::size_t>(edges[k][1])).data();
    for (std::size_t j = 0; j < w; ++j) {
      ds[j] += src[j];
      dt[j] += src[j];
      g0.bias[j] += src[j];
    }
  }
  Matrix dws, dwt;
  nn::matmul_at_b(h_aug, gs, dws);
  nn::matmul_at_b(h_aug, gt, dwt);
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      g0.weight(i, j) += dws(i, j);
      g0.weight(a + i, j) += dwt(i, j);
    }
  }
  Matrix dhs, dht;
  nn::matmul(gs, nn::transpose(weight_rows(l0.weight, 0, a)), dhs);
  nn::matmul(gt, nn::transpose(weight_rows(l0.weight, a, a)), dht);
  for (std::size_t i = 0; i < d_h_aug.size(); ++i) d_h_aug.data()[i] += dhs.data()[i] + dht.data()[i];
}

}  // namespace

std::vector<double> edge_network(const MlpParams& edge_mlp, const Matrix& h_aug,
                                 std::span<const std::array<int, 2>> edges) {
  if (edges.empty()) return {};
  return edge_forward(edge_mlp, h_aug, edges, nn::Mode::kInfer, 0.0, nullptr, nullptr);
}

Matrix node_network_input(const Matrix& h_aug, std::span<const double> alpha, std::span<const std::array<int, 2>> edges,
                          const GraphTopology& topo) {
  if (alpha.size() != edges.size()) throw ValidationError("node_network: alpha misaligned with edges");
  const std::size_t n = h_aug.rows();
  const std::size_t a = h_aug.cols();
  if (topo.in_begin.size() != n + 1) throw ValidationError("node_network: topology does not match node count");
  Matrix in(n, 3 * a);
  for (std::size_t v = 0; v < n; ++v) {
    double* dst = in.row(v).data();
    for (int k = topo.in_begin[v]; k < topo.in_begin[v + 1]; ++k) {
      const auto e = static_cast<std::size_t>(topo.in_edge[static_cast<std::size_t>(k)]);
      const double w = alpha[e];
      const double* src = h_aug.row(static_cast<std::size_t>(edges[e][0])).data();
      for (std::size_t j = 0; j < a; ++j) dst[j] += w * src[j];
    }
    std::copy(h_aug.row(v).begin(), h_aug.row(v).end(), dst + a);
    double* right = dst + 2 * a;
    for (int k = topo.out_begin[v]; k < topo.out_begin[v + 1]; ++k) {
      const auto e = static_cast<std::size_t>(topo.out_edge[static_cast<std::size_t>(k)]);
      const double w = alpha[e];
      const double* src = h_aug.row(static_cast<std::size_t>(edges[e][1])).data();
      for (std::size_t j = 0; j < a; ++j) right[j] += w * src[j];
    }
  }
  return in;
}

Matrix node_network(const MlpParams& node_mlp, const Matrix& h_aug, std::span<const double> alpha,
                    std::span<const std::array<int, 2>> edges, const GraphTopology& topo) {
  Matrix in = node_network_input(h_aug, alpha, edges, topo);
  if (in.rows() == 0) return Matrix(0, node_mlp.out_dim());
  return nn::mlp_infer(node_mlp, in);
}

namespace {

struct ForwardTrace {
  Matrix xs;
  nn::MlpCache input_cache;
  std::vector<Matrix> h_aug;               // one per edge-network call
  std::vector<EdgeNetCache> edge_cache;    // iterations + 1
  std::vector<std::vector<double>> alpha;  // iterations + 1
  std::vector<nn::MlpCache> node_cache;    // iterations
};

// Forward pass; caches are recorded only when `trace` is non-null.
std::vector<double> run_forward(const EdgeClassifierParams& p, const EventGraph& g, const GraphTopology& topo,
                                nn::Mode mode, double dropout_prob, CounterRng* rng, ForwardTrace* trace) {
  Matrix xs = p.scaler.apply(g);
  if (g.num_nodes() == 0 || g.num_edges() == 0) return std::vector<double>(g.num_edges());
  const bool infer = trace == nullptr && mode == nn::Mode::kInfer;

  const auto mlp = [&](const MlpParams& net, const Matrix& in, nn::MlpCache* cache) {
    if (infer) return nn::mlp_infer(net, in);
    auto [out, c] = nn::mlp_forward(net, in, mode, dropout_prob, rng);
    if (cache) *cache = std::move(c);
    return out;
  };

  if (trace) trace->edge_cache.resize(static_cast<std::size_t>(p.iterations) + 1);
  if (trace) trace->node_cache.resize(static_cast<std::size_t>(p.iterations));

  Matrix h = mlp(p.input_mlp, xs, trace ? &trace->input_cache : nullptr);
  std::vector<double> alpha;
  for (int it = 0; it <= p.iterations; ++it) {
    Matrix h_aug = augment(h, xs);
    const auto ui = static_cast<std::size_t>(it);
    alpha = edge_forward(p.edge_mlp, h_aug, g.E, infer ? nn::Mode::kInfer : mode, dropout_prob, rng,
                         trace ? &trace->edge_cache[ui] : nullptr);
    if (it < p.iterations) {
      const Matrix node_in = node_network_input(h_aug, alpha, g.E, topo);
      h = mlp(p.node_mlp, node_in, trace ? &trace->node_cache[ui] : nullptr);
    }
    if (trace) {
      trace->h_aug.push_back(std::move(h_aug));
      trace->alpha.push_back(alpha);
    }
  }
  if (trace) trace->xs = std::move(xs);
  return alpha;
}

void accumulate(MlpParams& into, const MlpParams& g) {
  for (std::size_t l = 0; l < into.layers.size(); ++l) {
    auto dst = into.layers[l].weight.data();
    const auto src = g.layers[l].weight.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    for (std::size_t i = 0; i < into.layers[l].bias.size(); ++i) into.layers[l].bias[i] += g.layers[l].bias[i];
  }
}

Matrix leading_columns(const Matrix& m, std::size_t cols) {
  Matrix out(m.rows(), cols);
  for (std::size_t i = 0; i < m.rows(); ++i) std::copy_n(m.row(i).begin(), cols, out.row(i).begin());
  return out;
}

}  // namespace

std::vector<double> classify_edges(const EdgeClassifierParams& p, const EventGraph& g, nn::Mode mode,
                                   double dropout_prob, CounterRng* rng) {
  p.validate();
  const GraphTopology topo = GraphTopology::from_graph(g);
  return run_forward(p, g, topo, mode, dropout_prob, rng, nullptr);
}

LossAndGradients loss_and_gradients(const EdgeClassifierParams& p, const EventGraph& g, nn::Mode mode,
                                    double dropout_prob, CounterRng* rng) {
  if (!g.labels) throw ValidationError("training graph has no labels");
  LossAndGradients out;
  out.grads = p.zeros_like();
  if (g.num_edges() == 0) return out;

  const GraphTopology topo = GraphTopology::from_graph(g);
  ForwardTrace tr;
  out.scores = run_forward(p, g, topo, mode, dropout_prob, rng, &tr);
  const auto bce = nn::bce_loss(out.scores, *g.labels);
  out.loss = bce.loss;

  const std::size_t n = g.num_nodes();
  const std::size_t a = p.augmented_dim();
  const std::size_t w = p.width;
  const auto& edges = g.E;

  // Final edge-network call.
  Matrix d_alpha(edges.size(), 1);
  for (std::size_t k = 0; k < edges.size(); ++k) d_alpha(k, 0) = bce.grad[k];
  Matrix d_h_aug(n, a);
  {
    const auto last = static_cast<std::size_t>(p.iterations);
    edge_backward(p.edge_mlp, tr.h_aug[last], edges, tr.edge_cache[last], d_alpha, out.grads.edge_mlp, d_h_aug);
  }
  Matrix d_h = leading_columns(d_h_aug, w);

  for (int it = p.iterations - 1; it >= 0; --it) {
    const auto ui = static_cast<std::size_t>(it);
    const Matrix& h_aug = tr.h_aug[ui];
    const auto& alpha = tr.alpha[ui];

    auto gn = nn::mlp_backward(p.node_mlp, tr.node_cache[ui], d_h);
    accumulate(out.grads.node_mlp, gn.params);
    const Matrix& d_in = gn.input;  // n x 3a

    d_h_aug = Matrix(n, a);
    Matrix d_alpha_it(edges.size(), 1);
    for (std::size_t v = 0; v < n; ++v) {
      const double* self = d_in.row(v).data() + a;
      double* dst = d_h_aug.row(v).data();
      for (std::size_t j = 0; j < a; ++j) dst[j] += self[j];
    }
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto s = static_cast<std::size_t>(edges[k][0]);
      const auto t = static_cast<std::size_t>(edges[k][1]);
      // Target t received alpha * h_aug[s] in its left slot; source s
      // received alpha * h_aug[t] in its right slot.
      const double* d_left_t = d_in.row(t).data();
      const double* d_right_s = d_in.row(s).data() + 2 * a;
      const double* hs = h_aug.row(s).data();
      const double* ht = h_aug.row(t).data();
      double* dhs = d_h_aug.row(s).data();
      double* dht = d_h_aug.row(t).data();
      double da = 0.0;
      for (std::size_t j = 0; j < a; ++j) {
        da += d_left_t[j] * hs[j] + d_right_s[j] * ht[j];
        dhs[j] += alpha[k] * d_left_t[j];
        dht[j] += alpha[k] * d_right_s[j];
      }
      d_alpha_it(k, 0) = da;
    }
    edge_backward(p.edge_mlp, h_aug, edges, tr.edge_cache[ui], d_alpha_it, out.grads.edge_mlp, d_h_aug);
    d_h = leading_columns(d_h_aug, w);
  }

  auto gi = nn::mlp_backward(p.input_mlp, tr.input_cache, d_h);
  accumulate(out.grads.input_mlp, gi.params);
  return out;
}

namespace {

struct LabelCounts {
  double loss_sum = 0.0;
  std::size_t edges = 0, true_kept = 0, true_total = 0, predicted = 0;
};

void score_batch(const EdgeClassifierParams& p, const EventGraph& g, LabelCounts& c) {
  if (!g.labels) throw ValidationError("validation graph has no labels");
  const auto scores = classify_edges(p, g);
  if (scores.empty()) return;
  const auto bce = nn::bce_loss(scores, *g.labels);
  c.loss_sum += bce.loss * static_cast<double>(scores.size());
  c.edges += scores.size();
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool truth = (*g.labels)[k] != 0;
    const bool pred = scores[k] >= 0.5;
    c.true_total += truth;
    c.predicted += pred;
    c.true_kept += truth && pred;
  }
}

LabelCounts score_all(const EdgeClassifierParams& p, std::span<const EventGraph> graphs, std::size_t batch_size) {
  LabelCounts c;
  std::vector<const EventGraph*> batch;
  for (std::size_t i = 0; i < graphs.size(); i += batch_size) {
    batch.clear();
    for (std::size_t j = i; j < std::min(graphs.size(), i + batch_size); ++j) batch.push_back(&graphs[j]);
    score_batch(p, concat_graphs(batch), c);
  }
  return c;
}

}  // namespace

double evaluate_loss(const EdgeClassifierParams& p, std::span<const EventGraph> graphs, std::size_t batch_size) {
  const auto c = score_all(p, graphs, batch_size);
  return c.edges ? c.loss_sum / static_cast<double>(c.edges) : 0.0;
}

TrainResult train(const EdgeClassifierParams& init, std::span<const EventGraph> train_graphs,
                  std::span<const EventGraph> val_graphs, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  init.validate();
  if (cfg.batch_size == 0) throw ValidationError("train: batch_size must be positive");
  if (cfg.learning_rate < 0.0) throw ValidationError("train: negative learning rate");
  for (const auto& g : train_graphs) {
    if (!g.labels) throw ValidationError("train: training graph without labels");
  }
  for (const auto& g : val_graphs) {
    if (!g.labels) throw ValidationError("train: validation graph without labels");
  }

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.params = init;
  EdgeClassifierParams params = init;
  nn::AdamState adam(params.parameter_spans());
  CounterRng dropout_rng(cfg.seed, 0xD50F);
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> order(train_graphs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const EventGraph*> batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    CounterRng shuffle_rng(cfg.seed, 0x5E0000 + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + cfg.batch_size); ++j) batch.push_back(&train_graphs[order[j]]);
      const EventGraph g = concat_graphs(batch);
      if (g.num_edges() == 0) continue;
      auto lg = loss_and_gradients(params, g, nn::Mode::kTrain, cfg.dropout_prob, &dropout_rng);
      nn::adam_step(adam, params.parameter_spans(), std::as_const(lg.grads).parameter_spans(), cfg.learning_rate);
      loss_sum += lg.loss;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    const auto vc = score_all(params, val_graphs, cfg.batch_size);
    rec.val_loss = vc.edges ? vc.loss_sum / static_cast<double>(vc.edges) : 0.0;
    rec.val_efficiency = vc.true_total ? static_cast<double>(vc.true_kept) / static_cast<double>(vc.true_total) : 1.0;
    rec.val_purity = vc.predicted ? static_cast<double>(vc.true_kept) / static_cast<double>(vc.predicted) : 1.0;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best_val || result.best_epoch == 0) {
      best_val = rec.val_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
    if (cfg.max_seconds > 0.0) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (elapsed > cfg.max_seconds) break;
    }
  }
  return result;
}

void save_checkpoint(const std::string& dir, const EdgeClassifierParams& p) {
  p.validate();
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, const MlpParams& net) {
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint file " + name);
    nn::write_mlp(out, net);
  };
  write("input.tnn", p.input_mlp);
  write("edge.tnn", p.edge_mlp);
  write("node.tnn", p.node_mlp);
  nlohmann::ordered_json j;
  j["width"] = p.width;
  j["depth"] = p.depth;
  j["iterations"] = p.iterations;
  j["scaler"] = {{"center", p.scaler.center}, {"half_range", p.scaler.half_range}};
  std::ofstream meta(std::filesystem::path(dir) / "model.json");
  meta << j.dump(2) << '\n';
}

EdgeClassifierParams load_checkpoint(const std::string& dir) {
  const auto read = [&](const std::string& name) {
    std::ifstream in(std::filesystem::path(dir) / name, std::ios::binary);
    if (!in) throw ValidationError("missing checkpoint file " + (std::filesystem::path(dir) / name).string());
    return nn::read_mlp(in);
  };
  EdgeClassifierParams p;
  p.input_mlp = read("input.tnn");
  p.edge_mlp = read("edge.tnn");
  p.node_mlp = read("node.tnn");
  std::ifstream meta(std::filesystem::path(dir) / "model.json");
  if (!meta) throw ValidationError("missing checkpoint sidecar model.json in " + dir);
  try {
    const auto j = nlohmann::json::parse(meta);
    p.width = j.at("width").get<std::size_t>();
    p.depth = j.at("depth").get<std::size_t>();
    p.iterations = j.at("iterations").get<int>();
    p.scaler.center = j.at("scaler").at("center").get<std::array<double, 3>>();
    p.scaler.half_range = j.at("scaler").at("half_range").get<std::array<double, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint sidecar: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace fdc
