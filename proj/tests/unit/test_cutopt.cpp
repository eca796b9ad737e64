#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include "fdctrack/cutopt.hpp"

using namespace fdc;

namespace {

// Cheap evaluator with a real trade-off: looser cuts raise efficiency and
// lower purity.
Objectives toy_eval(const Genome& g) {
  const double loose = g.max_dxy / 100.0 + g.max_dxy_over_dz / 50.0 + g.max_abs_dphi / kPi + g.skip_max / 6.0;
  const double eff = 1.0 - std::exp(-1.5 * loose);
  const double pur = std::exp(-0.4 * loose) * (0.6 + 0.4 * std::cos(g.max_abs_dphi));
  return {eff, std::clamp(pur, 0.0, 1.0)};
}

// Monte Carlo fraction of the unit square dominated by `pts`.
double mc_area(std::vector<Objectives> pts, std::size_t samples, CounterRng& rng) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.efficiency > b.efficiency; });
  // best[i] = highest purity among the i+1 most efficient points
  std::vector<double> best;
  double run = -1;
  for (const auto& p : pts) best.push_back(run = std::max(run, p.purity));
  std::size_t hit = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double u = rng.uniform(), v = rng.uniform();
    // points with efficiency >= u form a prefix
    const auto n = static_cast<std::size_t>(
        std::partition_point(pts.begin(), pts.end(), [&](const auto& p) { return p.efficiency >= u; }) - pts.begin());
    if (n > 0 && best[n - 1] >= v) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(samples);
}

std::vector<std::vector<std::size_t>> brute_fronts(const std::vector<Objectives>& pts) {
  std::vector<int> rank(pts.size(), -1);
  std::vector<std::vector<std::size_t>> fronts;
  for (int k = 0;; ++k) {
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (rank[i] >= 0) continue;
      bool dominated = false;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (rank[j] < 0 && j != i && dominates(pts[j], pts[i])) dominated = true;
      }
      if (!dominated) front.push_back(i);
    }
    if (front.empty()) break;
    for (auto i : front) rank[i] = k;
    fronts.push_back(front);
  }
  return fronts;
}

}  // namespace

TEST_CASE("dominance examples") {
  CHECK(dominates({1, 1}, {0.5, 0.5}));
  CHECK_FALSE(dominates({0.5, 0.5}, {1, 0.2}));
  CHECK_FALSE(dominates({1, 0.2}, {0.5, 0.5}));
  CHECK_FALSE(dominates({0.7, 0.3}, {0.7, 0.3}));
  CHECK(dominates({0.7, 0.4}, {0.7, 0.3}));
}

TEST_CASE("front examples") {
  const std::vector<Objectives> pts = {{1, 1}, {0.5, 0.5}, {1, 0.2}};
  const auto fronts = nondominated_sort(pts);
  REQUIRE(fronts.size() == 2);
  CHECK(fronts[0] == std::vector<std::size_t>{0});
  CHECK(fronts[1] == std::vector<std::size_t>{1, 2});
  const std::vector<Objectives> same(5, Objectives{0.3, 0.3});
  CHECK(nondominated_sort(same).size() == 1);
  CHECK(nondominated_sort(std::vector<Objectives>{}).empty());
}

TEST_CASE("nondominated sort matches brute force") {
  CounterRng rng(1, 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Objectives> pts;
    for (int i = 0; i < 200; ++i) {
      // coarse grid so ties and duplicates occur
      pts.push_back({std::round(rng.uniform() * 20) / 20, std::round(rng.uniform() * 20) / 20});
    }
    CHECK(nondominated_sort(pts) == brute_fronts(pts));
  }
}

TEST_CASE("crowding distance") {
  const std::vector<Objectives> pts = {{0, 1}, {0.25, 0.75}, {0.5, 0.5}, {1, 0}};
  const std::vector<std::size_t> front = {0, 1, 2, 3};
  const auto d = crowding_distance(pts, front);
  CHECK(std::isinf(d[0]));
  CHECK(std::isinf(d[3]));
  // interior: normalized neighbor gaps summed over both objectives
  CHECK(d[1] == doctest::Approx(0.5 + 0.5));
  CHECK(d[2] == doctest::Approx(0.75 + 0.75));
}

TEST_CASE("hypervolume examples") {
  CHECK(hypervolume(std::vector<Objectives>{{1, 1}}) == 1.0);
  const std::vector<Objectives> three = {{1, 0.1}, {0.5, 0.5}, {0.1, 1}};
  // strips from the right: 0.5*0.1 + 0.4*0.5 + 0.1*1
  CHECK(hypervolume(three) == doctest::Approx(0.05 + 0.2 + 0.1).epsilon(1e-12));
  std::vector<Objectives> dup = three;
  dup.insert(dup.end(), three.begin(), three.end());
  dup.push_back({0.3, 0.3});  // dominated
  CHECK(hypervolume(dup) == doctest::Approx(hypervolume(three)).epsilon(1e-15));
  CHECK(hypervolume(std::vector<Objectives>{}) == 0.0);
  CHECK_THROWS_AS(hypervolume(std::vector<Objectives>{{0.5, 0.5}}, Objectives{0.6, 0}), ValidationError);
  CHECK(hypervolume(std::vector<Objectives>{{0.5, 0.5}}, Objectives{0.25, 0.25}) == doctest::Approx(0.0625));
}

TEST_CASE("hypervolume agrees with Monte Carlo") {
  CounterRng rng(2, 0);
  std::vector<Objectives> fixed = {{1, 0.1}, {0.5, 0.5}, {0.1, 1}};
  CHECK(std::abs(mc_area(fixed, 10000000, rng) - hypervolume(fixed)) < 1e-3);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Objectives> pts;
    const auto n = rng.uniform_int(1, 50);
    for (long i = 0; i < n; ++i) pts.push_back({rng.uniform(), rng.uniform()});
    CHECK(std::abs(mc_area(pts, 10000000, rng) - hypervolume(pts)) < 1e-3);
  }
}

TEST_CASE("hypervolume subset selection matches exhaustive search") {
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 12));
    std::vector<Objectives> pts;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = rng.uniform();
      pts.push_back({e, std::clamp(1.0 - e * e + rng.uniform(-0.05, 0.05), 0.0, 1.0)});
    }
    const auto front = nondominated_sort(pts)[0];
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<long>(front.size())));
    double best = 0;
    for (unsigned mask = 0; mask < (1u << front.size()); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
      std::vector<Objectives> sub;
      for (std::size_t i = 0; i < front.size(); ++i) {
        if (mask & (1u << i)) sub.push_back(pts[front[i]]);
      }
      best = std::max(best, hypervolume(sub));
    }
    const auto chosen = best_hypervolume_subset(pts, front, k);
    REQUIRE(chosen.size() == k);
    CHECK(std::is_sorted(chosen.begin(), chosen.end()));
    std::vector<Objectives> sub;
    for (auto i : chosen) sub.push_back(pts[i]);
    CHECK(hypervolume(sub) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("genome bounds and conversions") {
  const Genome g{34.4, 5.4, 2.3, 3};
  CHECK(g.to_cuts() == CutConfig{});
  CHECK(Genome::from_cuts(CutConfig{}) == g);
  CHECK(g.within(GenomeBounds{}));
  CHECK_FALSE(Genome({0.5, 5.4, 2.3, 3}).within(GenomeBounds{}));
  CHECK_FALSE(Genome({34.4, 5.4, 2.3, 7}).within(GenomeBounds{}));
}

TEST_CASE("genome evaluation on calibration events") {
  const auto geom = default_geometry();
  const auto events = generate_events(SimConfig{}, geom, 0, 60);
  const auto paper = evaluate_genome(Genome{}, events, geom);
  CHECK(paper.efficiency >= 0.98);
  const auto open = evaluate_genome({100, 50, kPi, 6}, events, geom);
  CHECK(open.efficiency == 1.0);
  CHECK(open.purity <= paper.purity);
  const auto shut = evaluate_genome({1e-3, 1e-3, 1e-3, 0}, events, geom);
  CHECK(shut.efficiency == 0.0);
  CHECK(shut.purity == 1.0);
  CHECK_THROWS_AS(evaluate_genome(Genome{}, {}, geom), ValidationError);
}

TEST_CASE("selection rule") {
  const std::vector<Individual> archive = {
      {Genome{}, {0.995, 0.50}}, {Genome{}, {0.991, 0.55}}, {Genome{}, {0.98, 0.70}}};
  const auto s = select_genome(archive);
  CHECK(s.reached_target);
  CHECK(s.chosen.obj == Objectives{0.991, 0.55});
  CHECK(s.warning.empty());
  const std::vector<Individual> low = {{Genome{}, {0.95, 0.8}}, {Genome{}, {0.97, 0.6}}, {Genome{}, {0.9, 0.9}}};
  const auto f = select_genome(low);
  CHECK_FALSE(f.reached_target);
  CHECK(f.chosen.obj == Objectives{0.97, 0.6});
  CHECK_FALSE(f.warning.empty());
}

TEST_CASE("generation mechanics") {
  Nsga2Config cfg;
  CounterRng rng(3, 0);
  const auto pop = initial_population(cfg, rng, toy_eval);
  REQUIRE(pop.size() == 64);
  for (const auto& ind : pop) {
    CHECK(ind.genome.within(cfg.bounds));
    CHECK(ind.obj == toy_eval(ind.genome));
  }

  SUBCASE("determinism") {
    CounterRng a(9, 1), b(9, 1);
    CHECK(nsga2_generation(pop, cfg, a, toy_eval) == nsga2_generation(pop, cfg, b, toy_eval));
  }
  SUBCASE("null variation keeps the first front") {
    Nsga2Config null = cfg;
    null.crossover_prob = 0;
    null.mutation_prob = 0;
    const auto front_hv = [](const std::vector<Individual>& p) {
      std::vector<Objectives> o;
      for (const auto& i : p) o.push_back(i.obj);
      return hypervolume(o);
    };
    const auto next = nsga2_generation(pop, null, rng, toy_eval);
    CHECK(front_hv(next) == front_hv(pop));
    for (const auto& ind : next) CHECK(std::find(pop.begin(), pop.end(), ind) != pop.end());
  }
  SUBCASE("elitism keeps hypervolume monotone and genomes in bounds") {
    auto cur = pop;
    const auto hv = [](const std::vector<Individual>& p) {
      std::vector<Objectives> o;
      for (const auto& i : p) o.push_back(i.obj);
      return hypervolume(o);
    };
    for (int gen = 0; gen < 20; ++gen) {
      auto next = nsga2_generation(cur, cfg, rng, toy_eval);
      CHECK(next.size() == 64);
      CHECK(hv(next) >= hv(cur) - 1e-9);
      for (const auto& ind : next) CHECK(ind.genome.within(cfg.bounds));
      cur = std::move(next);
    }
  }
  SUBCASE("size mismatch") {
    auto short_pop = pop;
    short_pop.pop_back();
    CHECK_THROWS_AS(nsga2_generation(short_pop, cfg, rng, toy_eval), ValidationError);
  }
}

TEST_CASE("archive stays consistent") {
  ParetoArchive ar;
  CHECK(ar.insert({Genome{}, {0.5, 0.5}}));
  CHECK_FALSE(ar.insert({Genome{}, {0.4, 0.4}}));
  CHECK_FALSE(ar.insert({Genome{1, 1, 1, 1}, {0.5, 0.5}}));
  CHECK(ar.insert({Genome{}, {0.9, 0.1}}));
  CHECK(ar.insert({Genome{}, {0.6, 0.6}}));
  CHECK(ar.members().size() == 2);
  CHECK(ar.consistent());
  CHECK(ar.hypervolume() == doctest::Approx(0.6 * 0.6 + 0.3 * 0.1));
}

TEST_CASE("optimize on the toy objective") {
  std::vector<double> seen;
  const auto res = optimize_cuts(toy_eval, 15, 7, Nsga2Config{}, [&](int, double hv) { seen.push_back(hv); });
  CHECK(res.hypervolume_history.size() == 15);
  CHECK(seen == res.hypervolume_history);
  for (std::size_t k = 1; k < seen.size(); ++k) CHECK(seen[k] >= seen[k - 1] - 1e-9);
  CHECK(res.archive.consistent());
  CHECK(res.selection.reached_target);
  CHECK(res.selection.chosen.obj.efficiency >= 0.99);
  const auto again = optimize_cuts(toy_eval, 15, 7);
  CHECK(again.hypervolume_history == res.hypervolume_history);
  CHECK(again.selection.chosen == res.selection.chosen);
  const auto csv = archive_csv(res.archive.members());
  CHECK(csv.rfind("max_dxy,max_dxy_over_dz,max_abs_dphi,skip_max,efficiency,purity\n", 0) == 0);
  CHECK(hypervolume_csv(res.hypervolume_history).rfind("generation,hypervolume\n", 0) == 0);
}
