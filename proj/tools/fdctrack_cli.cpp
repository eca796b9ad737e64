// Command-line front end for the track-finding pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fdctrack/bench.hpp"
#include "fdctrack/config.hpp"
#include "fdctrack/cutopt.hpp"
#include "fdctrack/detector.hpp"
#include "fdctrack/edgegnn.hpp"
#include "fdctrack/graphbuild.hpp"
#include "fdctrack/metrics.hpp"
#include "fdctrack/plots.hpp"
#include "fdctrack/simgen.hpp"
#include "fdctrack/tradfind.hpp"

namespace fs = std::filesystem;
using namespace fdc;

namespace {

const std::vector<std::string> kSimKeys = {"n_tracks_min",   "n_tracks_max", "hit_efficiency", "noise_hits_mean",
                                           "smear_sigma_xy", "kappa_min",    "kappa_max",      "tan_lambda_min",
                                           "tan_lambda_max", "rng_seed"};
const std::vector<std::string> kCutKeys = {"max_dxy", "max_dxy_over_dz", "max_abs_dphi", "skip_max"};
const std::vector<std::string> kTrainKeys = {"width",         "depth",   "iterations", "epochs", "batch_size",
                                             "learning_rate", "dropout", "patience",   "max_seconds"};
const std::vector<std::string> kTradKeys = {"proximity_cm", "min_hits", "d2_scale", "d2_min", "d2_max", "center_d2_max"};
const std::vector<std::string> kMogaKeys = {"generations", "population", "crossover_prob", "mutation_prob",
                                            "mutation_sigma_frac", "min_efficiency"};
const std::vector<std::string> kBenchKeys = {"trials", "batch_sizes"};

// Options shared by every subcommand.
struct Common {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string out = ".";
  KeyValueConfig config;
  std::string geometry_path;
  DetectorGeometry geom = default_geometry();

  void load() {
    if (!config_path.empty()) {
      config = KeyValueConfig::load(config_path);
      std::vector<std::string> known;
      for (const auto* keys : {&kSimKeys, &kCutKeys, &kTrainKeys, &kTradKeys, &kMogaKeys, &kBenchKeys}) {
        known.insert(known.end(), keys->begin(), keys->end());
      }
      config.check_known(known);
    }
    if (!geometry_path.empty()) geom = load_geometry(geometry_path);
    fs::create_directories(out);
  }
  std::string subset(const std::vector<std::string>& keys) const {
    std::string text;
    for (const auto& k : keys) {
      if (config.has(k)) text += k + " = " + config.get_string(k, "") + "\n";
    }
    return text;
  }
  std::string path(const std::string& name) const { return (fs::path(out) / name).string(); }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--geometry", c.geometry_path, "Detector geometry file (default: built-in)");
}

CutConfig load_cuts(const Common& c, const std::string& cuts_path) {
  if (!cuts_path.empty()) return parse_cut_config(read_text_file(cuts_path));
  return parse_cut_config(c.subset(kCutKeys));
}

TradConfig trad_config(const Common& c) {
  TradConfig t;
  const auto& kv = c.config;
  t.proximity_cm = kv.get_double("proximity_cm", t.proximity_cm);
  const long min_hits = kv.get_int("min_hits", static_cast<long>(t.min_hits));
  if (min_hits < 3) throw ValidationError("min_hits must be >= 3");
  t.min_hits = static_cast<std::size_t>(min_hits);
  t.d2_scale = kv.get_double("d2_scale", t.d2_scale);
  t.d2_min = kv.get_double("d2_min", t.d2_min);
  t.d2_max = kv.get_double("d2_max", t.d2_max);
  t.center_d2_max = kv.get_double("center_d2_max", t.center_d2_max);
  if (!(t.proximity_cm > 0) || !(t.d2_min > 0) || !(t.d2_max >= t.d2_min)) {
    throw ValidationError("invalid traditional-method thresholds");
  }
  return t;
}

std::vector<Event> events_or_throw(const std::string& path, const DetectorGeometry& geom) {
  if (path.empty()) throw ValidationError("--events is required");
  return read_events(path, geom);
}

void print_metrics(const std::string& what, const SegmentMetrics& m) {
  std::printf("%s: efficiency %.4f purity %.4f (kept %zu / %zu true, %zu / %zu predicted correct)\n", what.c_str(),
              m.efficiency(), m.purity(), m.true_kept, m.true_total, m.predicted_correct, m.predicted_total);
}

nlohmann::ordered_json metrics_json(const SegmentMetrics& m) {
  return {{"efficiency", m.efficiency()},         {"purity", m.purity()},
          {"true_kept", m.true_kept},             {"true_total", m.true_total},
          {"predicted_correct", m.predicted_correct}, {"predicted_total", m.predicted_total}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Track finding on forward drift chamber hits: simulation, graph building, edge classification, "
               "a traditional baseline, cut optimization and evaluation."};
  app.require_subcommand(1);
  Common common;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate synthetic events (JSON lines)");
  add_common(sim, common);
  std::size_t n_events = 1000;
  std::vector<double> split;
  sim->add_option("-n,--n-events", n_events, "Number of events")->capture_default_str();
  sim->add_option("--split", split, "train,val,test fractions; writes three files")->delimiter(',')->expected(3);
  sim->callback([&] {
    common.load();
    SimConfig cfg = parse_sim_config(common.subset(kSimKeys));
    if (sim->count("--seed") || !common.config.has("rng_seed")) cfg.rng_seed = common.seed;
    cfg.validate();
    write_text_file(common.path("sim.cfg"), format_sim_config(cfg));
    if (split.empty()) {
      write_events(common.path("events.jsonl"), generate_events(cfg, common.geom, 0, n_events));
      std::printf("wrote %zu events to %s\n", n_events, common.path("events.jsonl").c_str());
      return;
    }
    const auto s = generate_dataset(cfg, common.geom, n_events, {split[0], split[1], split[2]});
    write_events(common.path("train.jsonl"), s.train);
    write_events(common.path("val.jsonl"), s.val);
    write_events(common.path("test.jsonl"), s.test);
    std::printf("wrote %zu / %zu / %zu events to %s\n", s.train.size(), s.val.size(), s.test.size(),
                common.out.c_str());
  });

  // build
  auto* build = app.add_subcommand("build", "Build labeled candidate-edge graphs");
  add_common(build, common);
  std::string events_path, cuts_path;
  build->add_option("--events", events_path, "Events file")->required();
  build->add_option("--cuts", cuts_path, "Cut configuration file (overrides --config)");
  build->callback([&] {
    common.load();
    const auto events = events_or_throw(events_path, common.geom);
    const auto cuts = load_cuts(common, cuts_path);
    std::vector<EventGraph> graphs;
    BuilderCounts counts;
    for (const auto& ev : events) {
      graphs.push_back(build_labeled_graph(ev, cuts, common.geom));
      counts += count_builder(graphs.back(), ev);
    }
    write_graphs(common.path("graphs.jsonl"), graphs, events);
    SegmentMetrics m{counts.segments_found, counts.segments_total, counts.edges_correct, counts.edges_total};
    print_metrics("builder", m);
    write_text_file(common.path("builder.json"), metrics_json(m).dump(2) + "\n");
  });

  // train
  auto* tr = app.add_subcommand("train", "Train the edge classifier");
  add_common(tr, common);
  std::string train_path, val_path;
  tr->add_option("--train", train_path, "Training graphs")->required();
  tr->add_option("--val", val_path, "Validation graphs")->required();
  std::optional<std::size_t> width, depth, batch;
  std::optional<int> iterations, epochs, patience;
  std::optional<double> lr, dropout, max_seconds;
  tr->add_option("--width", width, "Hidden width W (default 32)");
  tr->add_option("--depth", depth, "Dense layers per network (default 3)");
  tr->add_option("--iterations", iterations, "Message-passing iterations I (default 1)");
  tr->add_option("--epochs", epochs, "Epochs (default 50)");
  tr->add_option("--batch-size", batch, "Graphs per batch (default 32)");
  tr->add_option("--lr", lr, "Adam learning rate (default 1e-3)");
  tr->add_option("--dropout", dropout, "Dropout probability (default 0.05)");
  tr->add_option("--patience", patience, "Early-stopping patience (default 10)");
  tr->add_option("--max-seconds", max_seconds, "Wall-clock cap, 0 = none");
  tr->callback([&] {
    common.load();
    const auto& kv = common.config;
    TrainConfig cfg;
    cfg.seed = common.seed;
    cfg.epochs = epochs.value_or(static_cast<int>(kv.get_int("epochs", cfg.epochs)));
    cfg.batch_size = batch.value_or(static_cast<std::size_t>(kv.get_int("batch_size", static_cast<long>(cfg.batch_size))));
    cfg.learning_rate = lr.value_or(kv.get_double("learning_rate", cfg.learning_rate));
    cfg.dropout_prob = dropout.value_or(kv.get_double("dropout", cfg.dropout_prob));
    cfg.patience = patience.value_or(static_cast<int>(kv.get_int("patience", cfg.patience)));
    cfg.max_seconds = max_seconds.value_or(kv.get_double("max_seconds", cfg.max_seconds));
    const auto w = width.value_or(static_cast<std::size_t>(kv.get_int("width", 32)));
    const auto d = depth.value_or(static_cast<std::size_t>(kv.get_int("depth", 3)));
    const int it = iterations.value_or(static_cast<int>(kv.get_int("iterations", 1)));

    std::vector<EventGraph> train_graphs, val_graphs;
    for (auto& [g, ev] : read_graphs(train_path, common.geom)) train_graphs.push_back(std::move(g));
    for (auto& [g, ev] : read_graphs(val_path, common.geom)) val_graphs.push_back(std::move(g));
    CounterRng init_rng(common.seed, 0x1417);
    const auto init = EdgeClassifierParams::make(w, d, it, common.geom, init_rng);
    std::string history = "epoch,train_loss,val_loss,val_efficiency,val_purity\n";
    const auto result = train(init, train_graphs, val_graphs, cfg, [&](const EpochRecord& r) {
      std::printf("epoch %3d  train %.5f  val %.5f  eff %.4f  pur %.4f\n", r.epoch, r.train_loss, r.val_loss,
                  r.val_efficiency, r.val_purity);
      std::fflush(stdout);
      history += std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' + format_double(r.val_loss) +
                 ',' + format_double(r.val_efficiency) + ',' + format_double(r.val_purity) + '\n';
    });
    save_checkpoint(common.path("model"), result.params);
    write_text_file(common.path("history.csv"), history);
    std::printf("best epoch %d; checkpoint in %s\n", result.best_epoch, common.path("model").c_str());
  });

  // infer
  auto* inf = app.add_subcommand("infer", "Score candidate edges with a trained model");
  add_common(inf, common);
  std::string model_path, graphs_path;
  inf->add_option("--model", model_path, "Checkpoint directory")->required();
  inf->add_option("--graphs", graphs_path, "Graphs file");
  inf->add_option("--events", events_path, "Events file (graphs are built with --cuts / --config)");
  inf->add_option("--cuts", cuts_path, "Cut configuration file");
  inf->callback([&] {
    common.load();
    const auto params = load_checkpoint(model_path);
    std::vector<PredictedEdge> edges;
    if (!graphs_path.empty()) {
      for (const auto& [g, ev] : read_graphs(graphs_path, common.geom)) {
        const auto e = graph_edges(g, classify_edges(params, g));
        edges.insert(edges.end(), e.begin(), e.end());
      }
    } else {
      const auto events = events_or_throw(events_path, common.geom);
      const auto cuts = load_cuts(common, cuts_path);
      for (const auto& ev : events) {
        const auto g = build_event_graph(ev, cuts, common.geom);
        const auto e = graph_edges(g, classify_edges(params, g));
        edges.insert(edges.end(), e.begin(), e.end());
      }
    }
    write_edge_csv(common.path("edges.csv"), edges);
    std::printf("wrote %zu scored edges to %s\n", edges.size(), common.path("edges.csv").c_str());
  });

  // baseline
  auto* base = app.add_subcommand("baseline", "Run the traditional segment-linking track finder");
  add_common(base, common);
  base->add_option("--events", events_path, "Events file")->required();
  base->callback([&] {
    common.load();
    const auto events = events_or_throw(events_path, common.geom);
    const auto cfg = trad_config(common);
    std::vector<PredictedEdge> edges;
    std::size_t candidates = 0;
    for (const auto& ev : events) {
      const auto r = run_traditional(ev, common.geom, cfg);
      candidates += r.candidates.size();
      edges.insert(edges.end(), r.edges.begin(), r.edges.end());
    }
    write_edge_csv(common.path("edges.csv"), edges);
    print_metrics("traditional", segment_metrics(score_edges(events, edges), 0.5));
    std::printf("%zu track candidates, %zu edges\n", candidates, edges.size());
  });

  // optimize-cuts
  auto* opt = app.add_subcommand("optimize-cuts", "Multi-objective search over graph-builder cuts");
  add_common(opt, common);
  std::optional<int> generations;
  std::optional<std::size_t> population;
  opt->add_option("--events", events_path, "Calibration events")->required();
  opt->add_option("--generations", generations, "Generations (default 15)");
  opt->add_option("--population", population, "Population size (default 64)");
  opt->callback([&] {
    common.load();
    const auto events = events_or_throw(events_path, common.geom);
    const auto& kv = common.config;
    Nsga2Config cfg;
    cfg.population = population.value_or(static_cast<std::size_t>(kv.get_int("population", 64)));
    cfg.crossover_prob = kv.get_double("crossover_prob", cfg.crossover_prob);
    cfg.mutation_prob = kv.get_double("mutation_prob", cfg.mutation_prob);
    cfg.mutation_sigma_frac = kv.get_double("mutation_sigma_frac", cfg.mutation_sigma_frac);
    const int gens = generations.value_or(static_cast<int>(kv.get_int("generations", 15)));
    const auto r = optimize_cuts(events, common.geom, gens, common.seed, cfg, [](int g, double hv) {
      std::printf("generation %2d  hypervolume %.6f\n", g, hv);
      std::fflush(stdout);
    });
    const auto sel = select_genome(r.archive.members(), kv.get_double("min_efficiency", 0.99));
    write_text_file(common.path("archive.csv"), archive_csv(r.archive.members()));
    write_text_file(common.path("hypervolume.csv"), hypervolume_csv(r.hypervolume_history));
    write_text_file(common.path("cuts.cfg"), format_cut_config(sel.chosen.genome.to_cuts()));
    if (!sel.reached_target) std::fprintf(stderr, "warning: %s\n", sel.warning.c_str());
    std::printf("chosen cuts: efficiency %.4f purity %.4f\n%s", sel.chosen.obj.efficiency, sel.chosen.obj.purity,
                format_cut_config(sel.chosen.genome.to_cuts()).c_str());
  });

  // evaluate
  auto* ev_cmd = app.add_subcommand("evaluate", "Segment-level metrics, threshold sweep and plots");
  add_common(ev_cmd, common);
  std::string edges_path, baseline_path;
  std::optional<double> target_purity;
  std::optional<std::int64_t> draw_event;
  double draw_threshold = 0.5;
  ev_cmd->add_option("--events", events_path, "Events file")->required();
  ev_cmd->add_option("--edges", edges_path, "Scored edges CSV")->required();
  ev_cmd->add_option("--baseline", baseline_path, "Baseline edges CSV; its purity becomes the target");
  ev_cmd->add_option("--target-purity", target_purity, "Purity at which to report efficiency");
  ev_cmd->add_option("--draw-event", draw_event, "Write an SVG display of this event id");
  ev_cmd->add_option("--threshold", draw_threshold, "Score threshold for the event display")->capture_default_str();
  ev_cmd->callback([&] {
    common.load();
    const auto events = events_or_throw(events_path, common.geom);
    const auto edges = read_edge_csv(edges_path);
    const auto scored = score_edges(events, edges);
    const auto curve = threshold_sweep(scored);
    write_text_file(common.path("sweep.csv"), sweep_csv(curve));
    write_text_file(common.path("sweep.svg"), sweep_svg(curve));
    nlohmann::ordered_json report;
    report["at_threshold_0.5"] = metrics_json(segment_metrics(scored, 0.5));
    print_metrics("threshold 0.5", segment_metrics(scored, 0.5));
    std::optional<double> target = target_purity;
    if (!baseline_path.empty()) {
      const auto bm = segment_metrics(score_edges(events, read_edge_csv(baseline_path)), 0.5);
      print_metrics("baseline", bm);
      report["baseline"] = metrics_json(bm);
      if (!target) target = bm.purity();
    }
    if (target) {
      const auto mp = efficiency_at_purity(curve, *target);
      report["matched"] = {{"target_purity", *target}, {"attained", mp.attained}, {"threshold", mp.threshold},
                           {"efficiency", mp.efficiency}, {"purity", mp.purity}, {"max_purity", mp.max_purity}};
      if (mp.attained) {
        std::printf("at purity >= %.4f: threshold %.2f efficiency %.4f purity %.4f\n", *target, mp.threshold,
                    mp.efficiency, mp.purity);
      } else {
        std::printf("purity %.4f not attained; best purity on the sweep is %.4f\n", *target, mp.max_purity);
      }
    }
    write_text_file(common.path("metrics.json"), report.dump(2) + "\n");
    if (draw_event) {
      const Event* found = nullptr;
      for (const auto& e : events) {
        if (e.event_id == *draw_event) found = &e;
      }
      if (!found) throw ValidationError("--draw-event: no event with id " + std::to_string(*draw_event));
      const auto name = "event_" + std::to_string(*draw_event) + ".svg";
      write_text_file(common.path(name), event_svg(*found, edges, draw_threshold));
    }
  });

  // bench
  auto* bench = app.add_subcommand("bench", "Per-event timing of graph building and inference vs batch size");
  add_common(bench, common);
  std::optional<std::size_t> trials;
  std::vector<std::size_t> batch_sizes;
  bench->add_option("--events", events_path, "Events file")->required();
  bench->add_option("--model", model_path, "Checkpoint directory")->required();
  bench->add_option("--cuts", cuts_path, "Cut configuration file");
  bench->add_option("--trials", trials, "Timed repetitions, >= 3 (default 10)");
  bench->add_option("--batch-sizes", batch_sizes, "Comma-separated batch sizes")->delimiter(',');
  bench->callback([&] {
    common.load();
    if (!fs::exists(fs::path(model_path) / "model.json")) throw ValidationError("missing checkpoint in " + model_path);
    const auto params = load_checkpoint(model_path);
    const auto events = events_or_throw(events_path, common.geom);
    const auto cuts = load_cuts(common, cuts_path);
    std::vector<std::size_t> sizes = batch_sizes;
    if (sizes.empty() && common.config.has("batch_sizes")) {
      for (double v : common.config.get_doubles("batch_sizes")) sizes.push_back(static_cast<std::size_t>(v));
    }
    if (sizes.empty()) sizes = default_batch_sizes();
    const auto n_trials = trials.value_or(static_cast<std::size_t>(common.config.get_int("trials", 10)));
    const auto report = run_benchmark(events, sizes, n_trials, params, cuts, common.geom);
    write_text_file(common.path("bench.csv"), bench_csv(report));
    write_text_file(common.path("bench.svg"), timing_svg(report));
    for (const auto& r : report.rows) {
      std::printf("batch %4zu  build %9.2f us  infer %9.2f us  total %9.2f +- %.2f us per event\n", r.batch_size,
                  r.build_us_mean, r.infer_us_mean, r.total_us_mean, r.total_us_std);
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
