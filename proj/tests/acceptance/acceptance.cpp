// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Criteria 1, 4 and 9 share two trained models and take most of the time.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>

#include "fdctrack/config.hpp"
#include "fdctrack/cutopt.hpp"
#include "fdctrack/edgegnn.hpp"
#include "fdctrack/metrics.hpp"
#include "fdctrack/tradfind.hpp"
#include "gradcheck.hpp"

using namespace fdc;

namespace {

const DetectorGeometry geom = default_geometry();

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Fixed event-id blocks of the default population; rng seed 1.
constexpr std::int64_t kCalibrationFirst = 0;
constexpr std::int64_t kTrainFirst = 10000;
constexpr std::int64_t kValFirst = 20000;
constexpr std::int64_t kTestFirst = 30000;
constexpr std::size_t kBlock = 2000;
constexpr std::size_t kValEvents = 200;

SimConfig clean_config() {
  SimConfig c;
  c.n_tracks_min = c.n_tracks_max = 1;
  c.hit_efficiency = 1.0;
  c.noise_hits_mean = 0.0;
  c.smear_sigma_xy = 0.0;
  // steep enough that every track crosses all 24 planes
  c.tan_lambda_min = 8.0;
  c.tan_lambda_max = 12.0;
  return c;
}

std::vector<EventGraph> labeled(std::span<const Event> events) {
  std::vector<EventGraph> out;
  out.reserve(events.size());
  for (const auto& ev : events) out.push_back(build_labeled_graph(ev, CutConfig{}, geom));
  return out;
}

ScoredEdges gnn_scores(const EdgeClassifierParams& p, std::span<const Event> events,
                       std::span<const EventGraph> graphs) {
  std::vector<PredictedEdge> edges;
  for (const auto& g : graphs) {
    const auto e = graph_edges(g, classify_edges(p, g));
    edges.insert(edges.end(), e.begin(), e.end());
  }
  return score_edges(events, edges);
}

// --- shared state for the training criteria ---------------------------------

struct TrainedModel {
  EdgeClassifierParams params;
  double train_seconds = 0.0;
  int best_epoch = 0;
};

struct Study {
  std::vector<Event> test;
  std::vector<EventGraph> test_graphs;
  SegmentMetrics trad;
  std::optional<TrainedModel> i3, i1;
  int epochs = 40;
  std::size_t width = 32;
};

TrainedModel train_model(int iterations, const Study& s) {
  std::printf("  training W=%zu I=%d for %d epochs\n", s.width, iterations, s.epochs);
  std::fflush(stdout);
  SimConfig cfg;
  const auto train_graphs = labeled(generate_events(cfg, geom, kTrainFirst, kBlock));
  const auto val_graphs = labeled(generate_events(cfg, geom, kValFirst, kValEvents));
  CounterRng rng(1, 7);
  const auto init = EdgeClassifierParams::make(s.width, 3, iterations, geom, rng);
  TrainConfig tc;
  tc.epochs = s.epochs;
  const auto t0 = clock_type::now();
  auto res = train(init, train_graphs, val_graphs, tc, [&](const EpochRecord& r) {
    if (r.epoch % 5 == 0 || r.epoch == tc.epochs) {
      std::printf("    epoch %d train %.4f val %.4f (%.0f s)\n", r.epoch, r.train_loss, r.val_loss, seconds_since(t0));
      std::fflush(stdout);
    }
  });
  return {std::move(res.params), seconds_since(t0), res.best_epoch};
}

void prepare_study(Study& s) {
  if (!s.test.empty()) return;
  s.test = generate_events(SimConfig{}, geom, kTestFirst, kBlock);
  for (const auto& ev : s.test) s.test_graphs.push_back(build_event_graph(ev, CutConfig{}, geom));
  std::vector<PredictedEdge> edges;
  for (const auto& ev : s.test) {
    const auto r = run_traditional(ev, geom);
    edges.insert(edges.end(), r.edges.begin(), r.edges.end());
  }
  s.trad = segment_metrics(score_edges(s.test, edges), 0.5);
  std::printf("  traditional on test: efficiency %.4f purity %.4f\n", s.trad.efficiency(), s.trad.purity());
}

const TrainedModel& model_i3(Study& s) {
  prepare_study(s);
  if (!s.i3) s.i3 = train_model(3, s);
  return *s.i3;
}

const TrainedModel& model_i1(Study& s) {
  prepare_study(s);
  if (!s.i1) s.i1 = train_model(1, s);
  return *s.i1;
}

// --- criteria ------------------------------------------------------------------

Outcome pipeline_beats_baseline(Study& s) {
  const auto& m = model_i3(s);
  const auto curve = threshold_sweep(gnn_scores(m.params, s.test, s.test_graphs));
  const auto at = efficiency_at_purity(curve, s.trad.purity());
  const double gain = at.efficiency - s.trad.efficiency();
  const bool pass = at.attained && gain >= 0.02 && m.train_seconds <= 1800.0;
  return {pass, fmt("gnn %.4f vs traditional %.4f at purity %.4f (threshold %.2f), gain %+.4f, training %.0f s",
                    at.efficiency, s.trad.efficiency(), s.trad.purity(), at.threshold, gain, m.train_seconds)};
}

Outcome builder_regime() {
  const auto fx = KeyValueConfig::load(std::string(FDC_FIXTURE_DIR) + "/builder_seed1.cfg");
  BuilderCounts c;
  for (const auto& ev : generate_events(SimConfig{}, geom, kCalibrationFirst, kBlock)) {
    c += count_builder(build_event_graph(ev, CutConfig{}, geom), ev);
  }
  const double eff = static_cast<double>(c.segments_found) / static_cast<double>(c.segments_total);
  const double pur = static_cast<double>(c.edges_correct) / static_cast<double>(c.edges_total);
  const bool pinned = c.segments_found == static_cast<std::size_t>(fx.get_int("segments_found", -1)) &&
                      c.segments_total == static_cast<std::size_t>(fx.get_int("segments_total", -1)) &&
                      c.edges_correct == static_cast<std::size_t>(fx.get_int("edges_correct", -1)) &&
                      c.edges_total == static_cast<std::size_t>(fx.get_int("edges_total", -1));
  return {eff >= 0.98 && pur <= 0.75 && pinned,
          fmt("efficiency %.4f purity %.4f, fixture %s", eff, pur, pinned ? "matches" : "DIFFERS")};
}

Outcome moga() {
  const auto calibration = generate_events(SimConfig{}, geom, kCalibrationFirst, kBlock);
  Nsga2Config cfg;
  cfg.population = 64;
  cfg.mutation_prob = 0.01;
  cfg.crossover_prob = 0.95;
  const auto t0 = clock_type::now();
  const auto res = optimize_cuts(calibration, geom, 15, 1, cfg);
  const double secs = seconds_since(t0);
  bool monotone = res.hypervolume_history.size() == 15;
  for (std::size_t k = 1; k < res.hypervolume_history.size(); ++k) {
    monotone = monotone && res.hypervolume_history[k] >= res.hypervolume_history[k - 1] - 1e-9;
  }
  const auto& chosen = res.selection.chosen;
  const bool pass = monotone && res.selection.reached_target && chosen.obj.efficiency >= 0.99 && secs <= 600.0;
  return {pass, fmt("hypervolume %.4f -> %.4f (%s), chosen efficiency %.4f purity %.4f "
                    "[dxy %.2f ratio %.2f dphi %.3f skip %d], %.0f s",
                    res.hypervolume_history.front(), res.hypervolume_history.back(),
                    monotone ? "non-decreasing" : "DECREASES", chosen.obj.efficiency, chosen.obj.purity,
                    chosen.genome.max_dxy, chosen.genome.max_dxy_over_dz, chosen.genome.max_abs_dphi,
                    chosen.genome.skip_max, secs)};
}

double inference_seconds(const EdgeClassifierParams& p, std::span<const EventGraph> graphs) {
  double best = 1e300;
  double sink = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = clock_type::now();
    for (const auto& g : graphs) {
      const auto scores = classify_edges(p, g);
      if (!scores.empty()) sink += scores.front();
    }
    best = std::min(best, seconds_since(t0));
  }
  if (std::isnan(sink)) throw std::runtime_error("non-finite scores");
  return best;
}

Outcome iteration_ablation(Study& s) {
  const auto& m3 = model_i3(s);
  const auto& m1 = model_i1(s);
  const auto at3 = efficiency_at_purity(threshold_sweep(gnn_scores(m3.params, s.test, s.test_graphs)), s.trad.purity());
  const auto at1 = efficiency_at_purity(threshold_sweep(gnn_scores(m1.params, s.test, s.test_graphs)), s.trad.purity());
  const double t3 = inference_seconds(m3.params, s.test_graphs);
  const double t1 = inference_seconds(m1.params, s.test_graphs);
  const bool pass = at3.attained && at1.attained && at3.efficiency >= at1.efficiency && t3 / t1 >= 1.8;
  return {pass, fmt("efficiency I=3 %.4f vs I=1 %.4f at purity %.4f; inference %.3f s vs %.3f s, ratio %.2f",
                    at3.efficiency, at1.efficiency, s.trad.purity(), t3, t1, t3 / t1)};
}

Outcome gradient_suite() {
  CounterRng rng(5, 0);
  double worst = 0.0;
  std::size_t checked = 0, unresolved = 0, configs = 0;
  // Probes the difference quotients themselves cannot pin down to the target
  // precision are set aside and counted.
  const auto check = [&](const auto& loss, const auto& spans, const auto& gspans) {
    const auto st = testing::check_gradients(loss, spans, gspans, 1e-5, 1e-6, 1, 1e-5);
    worst = std::max(worst, st.max_rel_error);
    checked += st.checked;
    unresolved += st.unresolved;
    ++configs;
  };

  // Bare MLPs with random shapes, output activations and dropout masks.
  const nn::Activation acts[] = {nn::Activation::kIdentity, nn::Activation::kRelu, nn::Activation::kSigmoid};
  for (int trial = 0; trial < 60; ++trial) {
    const auto in = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto width = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto out_dim = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto depth = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 6));
    auto p = nn::make_mlp(in, width, out_dim, depth, nn::Activation::kRelu, acts[trial % 3], rng);
    for (auto& l : p.layers) {
      for (auto& b : l.bias) b = rng.uniform(-0.3, 0.3);
    }
    nn::Matrix x(n, in), w(n, out_dim);
    for (auto& v : x.data()) v = rng.uniform(-1.5, 1.5);
    for (auto& v : w.data()) v = rng.uniform(-1, 1);
    const auto mode = trial % 2 ? nn::Mode::kTrain : nn::Mode::kInfer;
    const auto seed = static_cast<std::uint64_t>(1000 + trial);
    const auto weighted = [&](const nn::Matrix& out) {
      double acc = 0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += out.data()[i] * w.data()[i];
      return acc;
    };
    const auto loss = [&] {
      CounterRng r(seed, 0);
      return weighted(nn::mlp_forward(p, x, mode, 0.3, &r).first);
    };
    CounterRng r(seed, 0);
    const auto fwd = nn::mlp_forward(p, x, mode, 0.3, &r);
    const auto g = nn::mlp_backward(p, fwd.second, w);
    auto spans = nn::parameter_spans(p);
    auto gspans = nn::parameter_spans(g.params);
    spans.push_back(x.data());
    gspans.push_back(g.input.data());
    check(loss, spans, gspans);
  }

  // Whole edge classifiers on small events, loss through every iteration.
  SimConfig small;
  small.n_tracks_max = 2;
  small.noise_hits_mean = 1.0;
  const auto events = generate_events(small, geom, 500, 60);
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = build_labeled_graph(events[static_cast<std::size_t>(trial)], CutConfig{}, geom);
    if (g.num_edges() == 0) continue;
    const auto width = static_cast<std::size_t>(rng.uniform_int(2, 5));
    const auto depth = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const int iterations = static_cast<int>(rng.uniform_int(1, 3));
    auto p = EdgeClassifierParams::make(width, depth, iterations, geom, rng);
    for (auto* m : {&p.input_mlp, &p.edge_mlp, &p.node_mlp}) {
      for (auto& l : m->layers) {
        for (auto& b : l.bias) b = rng.uniform(-0.3, 0.3);
      }
    }
    const auto mode = trial % 2 ? nn::Mode::kTrain : nn::Mode::kInfer;
    const auto seed = static_cast<std::uint64_t>(2000 + trial);
    const auto loss = [&] {
      CounterRng r(seed, 0);
      return loss_and_gradients(p, g, mode, 0.2, &r).loss;
    };
    CounterRng r(seed, 0);
    const auto lg = loss_and_gradients(p, g, mode, 0.2, &r);
    check(loss, p.parameter_spans(), std::as_const(lg.grads).parameter_spans());
  }
  return {configs >= 100 && worst < 1e-5 && unresolved * 50 <= checked,
          fmt("%zu configurations, %zu probes, worst relative error %.2e, %zu unresolved", configs, checked, worst,
              unresolved)};
}

Outcome batching_exactness() {
  const auto events = generate_events(SimConfig{}, geom, 40000, 128);
  const auto batched = split_by_event(build_batched_graph(events, CutConfig{}, geom));
  bool exact = batched.size() == events.size();
  for (std::size_t i = 0; exact && i < events.size(); ++i) {
    exact = batched[i] == build_event_graph(events[i], CutConfig{}, geom);
  }
  // Interleaved trials, best of each: the mean of a few trials wanders by
  // several percent on a shared machine, the minimum by well under one.
  const auto bench_events = generate_events(SimConfig{}, geom, 41000, 1024);
  const std::size_t sizes[] = {1, 128};
  double best[2] = {1e300, 1e300};
  std::size_t sink = 0;
  for (int trial = 0; trial < 15; ++trial) {
    for (int k = 0; k < 2; ++k) {
      const auto t0 = clock_type::now();
      for (std::size_t i = 0; i < bench_events.size(); i += sizes[k]) {
        const auto chunk = std::span<const Event>(bench_events).subspan(i, std::min(sizes[k], bench_events.size() - i));
        sink += build_batched_graph(chunk, CutConfig{}, geom).num_edges();
      }
      best[k] = std::min(best[k], seconds_since(t0) * 1e6 / static_cast<double>(bench_events.size()));
    }
  }
  // A gain smaller than 1% is inside the timing resolution and is not counted.
  const bool faster = best[1] < 0.99 * best[0];
  return {exact && faster && sink > 0,
          fmt("partition %s; build per event %.2f us at batch 1, %.2f us at batch 128 (%+.1f%%)",
              exact ? "bit-exact" : "DIFFERS", best[0], best[1], 100.0 * (best[1] / best[0] - 1.0))};
}

Outcome equivariance() {
  CounterRng rng(8, 0);
  auto p = EdgeClassifierParams::make(16, 2, 3, geom, rng);
  for (auto* m : {&p.input_mlp, &p.edge_mlp, &p.node_mlp}) {
    for (auto& l : m->layers) {
      for (auto& b : l.bias) b = rng.uniform(-0.3, 0.3);
    }
  }
  std::size_t mismatches = 0, compared = 0;
  for (const auto& ev : generate_events(SimConfig{}, geom, 42000, 20)) {
    const auto g = build_event_graph(ev, CutConfig{}, geom);
    const auto base = classify_edges(p, g);
    for (int t = 0; t < 50; ++t) {
      std::vector<int> perm(g.num_nodes());
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      // edges keep their order under permute_nodes, so scores compare index by index
      if (classify_edges(p, permute_nodes(g, perm)) != base) ++mismatches;
      ++compared;
    }
  }
  return {mismatches == 0, fmt("%zu permuted graphs, %zu mismatches", compared, mismatches)};
}

// Transverse motion integrated numerically in arc length.
std::pair<double, double> rk4_xy(const HelixParams& p, double z) {
  const double s_total = (z - p.z0) / p.tan_lambda;
  double st[4] = {p.x0, p.y0, std::cos(p.phi0), std::sin(p.phi0)};
  const auto f = [&](const double* u, double* du) {
    du[0] = u[2];
    du[1] = u[3];
    du[2] = -p.kappa * u[3];
    du[3] = p.kappa * u[2];
  };
  const auto n = static_cast<long>(std::ceil(s_total / 1e-3));
  const double h = s_total / static_cast<double>(n);
  double k1[4], k2[4], k3[4], k4[4], tmp[4];
  for (long i = 0; i < n; ++i) {
    f(st, k1);
    for (int j = 0; j < 4; ++j) tmp[j] = st[j] + 0.5 * h * k1[j];
    f(tmp, k2);
    for (int j = 0; j < 4; ++j) tmp[j] = st[j] + 0.5 * h * k2[j];
    f(tmp, k3);
    for (int j = 0; j < 4; ++j) tmp[j] = st[j] + h * k3[j];
    f(tmp, k4);
    for (int j = 0; j < 4; ++j) st[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
  }
  return {st[0], st[1]};
}

Outcome helix_and_fit_oracles() {
  CounterRng rng(9, 0);
  double worst_prop = 0.0;
  std::size_t compared = 0;
  for (int i = 0; i < 1000; ++i) {
    HelixParams p;
    p.kappa = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(1.0 / 300, 1.0 / 40);
    p.phi0 = rng.uniform(-kPi, kPi);
    p.tan_lambda = rng.uniform(3.0, 12.0);
    const double z = geom.plane_z[static_cast<std::size_t>(rng.uniform_int(0, kNumPlanes - 1))];
    const auto got = propagate_helix(p, z, geom);
    if (!got) continue;
    const auto [xr, yr] = rk4_xy(p, z);
    worst_prop = std::max(worst_prop, std::hypot(got->first - xr, got->second - yr));
    ++compared;
  }
  double worst_fit = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double r = rng.uniform(20, 150);
    const double dir = rng.uniform(-kPi, kPi);
    const double xc = r * std::cos(dir), yc = r * std::sin(dir);
    const double start = dir + kPi + rng.uniform(0.05, 0.5);
    std::vector<Hit> hits;
    for (int k = 0; k < 6; ++k) {
      const double a = start + 0.01 * k;
      hits.push_back(make_hit(xc + r * std::cos(a), yc + r * std::sin(a), k, geom, 0, 0, k));
    }
    const auto f = helical_fit(hits, true);
    worst_fit = std::max({worst_fit, std::hypot(f.x_c - xc, f.y_c - yc), std::abs(f.r_c - r)});
  }
  return {compared >= 500 && worst_prop < 1e-6 && worst_fit < 1e-9,
          fmt("propagation worst %.2e cm over %zu in-acceptance draws; circle fit worst %.2e cm", worst_prop, compared,
              worst_fit)};
}

Outcome clean_event_perfection(Study& s) {
  const auto events = generate_events(clean_config(), geom, 50000, 200);
  std::vector<PredictedEdge> trad_edges;
  for (const auto& ev : events) {
    const auto r = run_traditional(ev, geom);
    trad_edges.insert(trad_edges.end(), r.edges.begin(), r.edges.end());
  }
  const auto trad = segment_metrics(score_edges(events, trad_edges), 0.5);
  std::vector<EventGraph> graphs;
  for (const auto& ev : events) graphs.push_back(build_event_graph(ev, CutConfig{}, geom));
  const auto gnn = segment_metrics(gnn_scores(model_i3(s).params, events, graphs), 0.5);
  const bool pass = trad.efficiency() == 1.0 && trad.purity() == 1.0 && gnn.efficiency() == 1.0 && gnn.purity() == 1.0;
  return {pass, fmt("traditional %zu/%zu kept purity %.4f; gnn %zu/%zu kept purity %.4f", trad.true_kept,
                    trad.true_total, trad.purity(), gnn.true_kept, gnn.true_total, gnn.purity())};
}

Outcome skip_edge_recovery() {
  CounterRng rng(10, 0);
  std::vector<Event> events;
  for (int i = 0; i < 200; ++i) {
    const int n_tracks = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<HelixParams> tracks;
    std::vector<std::vector<int>> dropped;
    for (int t = 0; t < n_tracks; ++t) {
      HelixParams p;
      p.kappa = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(1.0 / 300, 1.0 / 40);
      p.phi0 = rng.uniform(-kPi, kPi);
      p.tan_lambda = rng.uniform(8.0, 12.0);
      tracks.push_back(p);
      dropped.push_back({static_cast<int>(rng.uniform_int(1, kNumPlanes - 2))});
    }
    events.push_back(event_from_tracks(tracks, geom, i, dropped));
  }
  const auto eff_at = [&](int skip) {
    CutConfig cuts;
    cuts.skip_max = skip;
    BuilderCounts c;
    for (const auto& ev : events) c += count_builder(build_event_graph(ev, cuts, geom), ev);
    return static_cast<double>(c.segments_found) / static_cast<double>(c.segments_total);
  };
  const double e0 = eff_at(0), e2 = eff_at(2);
  return {e0 < 1.0 && e2 == 1.0, fmt("skip 0 efficiency %.4f, skip 2 efficiency %.4f", e0, e2)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the track-finding pipeline"};
  std::vector<int> only;
  Study study;
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--epochs", study.epochs, "Training epochs for the shared models")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"pipeline beats baseline", [&] { return pipeline_beats_baseline(study); }},
      {"builder regime", builder_regime},
      {"multi-objective cut search", moga},
      {"iteration ablation", [&] { return iteration_ablation(study); }},
      {"gradient suite", gradient_suite},
      {"batching exactness", batching_exactness},
      {"equivariance", equivariance},
      {"helix and fit oracles", helix_and_fit_oracles},
      {"clean-event perfection", [&] { return clean_event_perfection(study); }},
      {"skip-edge recovery", skip_edge_recovery},
  };
  // Cheap criteria first so their verdicts show up before training starts.
  const int order[] = {2, 5, 6, 7, 8, 10, 3, 1, 9, 4};
  const std::set<int> wanted(only.begin(), only.end());
  int failures = 0;
  for (int id : order) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto& [name, run] = criteria[static_cast<std::size_t>(id - 1)];
    const auto t0 = clock_type::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d %s: %s (%s) [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
