#include "fdctrack/cutopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fdctrack/config.hpp"

namespace fdc {

bool Genome::within(const GenomeBounds& b) const {
  return max_dxy >= b.dxy_min && max_dxy <= b.dxy_max && max_dxy_over_dz >= b.ratio_min &&
         max_dxy_over_dz <= b.ratio_max && max_abs_dphi >= b.dphi_min && max_abs_dphi <= b.dphi_max &&
         skip_max >= b.skip_min && skip_max <= b.skip_max;
}

bool dominates(const Objectives& a, const Objectives& b) {
  return a.efficiency >= b.efficiency && a.purity >= b.purity &&
         (a.efficiency > b.efficiency || a.purity > b.purity);
}

std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const Objectives> points) {
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> count(n, 0);
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<std::size_t> current;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dominates(points[i], points[j])) {
        dominated[i].push_back(j);
      } else if (dominates(points[j], points[i])) {
        ++count[i];
      }
    }
    if (count[i] == 0) current.push_back(i);
  }
  while (!current.empty()) {
    fronts.push_back(current);
    std::vector<std::size_t> next;
    for (std::size_t i : current) {
      for (std::size_t j : dominated[i]) {
        if (--count[j] == 0) next.push_back(j);
      }
    }
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return fronts;
}

std::vector<double> crowding_distance(std::span<const Objectives> points, std::span<const std::size_t> front) {
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n <= 2) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    return dist;
  }
  for (int obj = 0; obj < 2; ++obj) {
    auto value = [&](std::size_t k) {
      const auto& o = points[front[k]];
      return obj == 0 ? o.efficiency : o.purity;
    };
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
    const double lo = value(order.front());
    const double hi = value(order.back());
    dist[order.front()] = std::numeric_limits<double>::infinity();
    dist[order.back()] = std::numeric_limits<double>::infinity();
    if (hi <= lo) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      dist[order[k]] += (value(order[k + 1]) - value(order[k - 1])) / (hi - lo);
    }
  }
  return dist;
}

double hypervolume(std::span<const Objectives> points, const Objectives& ref) {
  std::vector<Objectives> pts(points.begin(), points.end());
  for (const auto& p : pts) {
    if (!std::isfinite(p.efficiency) || !std::isfinite(p.purity) || p.efficiency < ref.efficiency ||
        p.purity < ref.purity) {
      throw ValidationError("hypervolume: point does not dominate the reference");
    }
  }
  // Sweep from the highest efficiency down; each point adds the slab above
  // the best purity seen so far.
  std::sort(pts.begin(), pts.end(), [](const Objectives& a, const Objectives& b) {
    if (a.efficiency != b.efficiency) return a.efficiency > b.efficiency;
    return a.purity > b.purity;
  });
  double area = 0.0;
  double best_purity = ref.purity;
  for (const auto& p : pts) {
    if (p.purity > best_purity) {
      area += (p.efficiency - ref.efficiency) * (p.purity - best_purity);
      best_purity = p.purity;
    }
  }
  return area;
}

Objectives evaluate_genome(const Genome& g, std::span<const Event> calibration, const DetectorGeometry& geom) {
  if (calibration.empty()) throw ValidationError("evaluate_genome: empty calibration set");
  const CutConfig cuts = g.to_cuts();
  cuts.validate();
  BuilderCounts total;
  for (const auto& ev : calibration) total += count_builder(build_event_graph(ev, cuts, geom), ev);
  Objectives o;
  o.efficiency = total.segments_total == 0
                     ? 1.0
                     : static_cast<double>(total.segments_found) / static_cast<double>(total.segments_total);
  o.purity = total.edges_total == 0 ? 1.0
                                    : static_cast<double>(total.edges_correct) / static_cast<double>(total.edges_total);
  return o;
}

namespace {

Genome random_genome(const GenomeBounds& b, CounterRng& rng) {
  Genome g;
  g.max_dxy = rng.uniform(b.dxy_min, b.dxy_max);
  g.max_dxy_over_dz = rng.uniform(b.ratio_min, b.ratio_max);
  g.max_abs_dphi = rng.uniform(b.dphi_min, b.dphi_max);
  g.skip_max = static_cast<int>(rng.uniform_int(b.skip_min, b.skip_max));
  return g;
}

struct Ranked {
  std::vector<std::size_t> rank;
  std::vector<double> crowding;
};

Ranked rank_population(const std::vector<Individual>& pop) {
  std::vector<Objectives> objs;
  for (const auto& ind : pop) objs.push_back(ind.obj);
  Ranked r;
  r.rank.assign(pop.size(), 0);
  r.crowding.assign(pop.size(), 0.0);
  const auto fronts = nondominated_sort(objs);
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    const auto cd = crowding_distance(objs, fronts[f]);
    for (std::size_t k = 0; k < fronts[f].size(); ++k) {
      r.rank[fronts[f][k]] = f;
      r.crowding[fronts[f][k]] = cd[k];
    }
  }
  return r;
}

std::size_t tournament(const Ranked& r, CounterRng& rng) {
  const auto last = static_cast<long>(r.rank.size()) - 1;
  const auto a = static_cast<std::size_t>(rng.uniform_int(0, last));
  const auto b = static_cast<std::size_t>(rng.uniform_int(0, last));
  if (r.rank[a] != r.rank[b]) return r.rank[a] < r.rank[b] ? a : b;
  if (r.crowding[a] != r.crowding[b]) return r.crowding[a] > r.crowding[b] ? a : b;
  return std::min(a, b);
}

// Blend crossover (BLX-0.5) on one real gene.
std::pair<double, double> blend(double a, double b, double lo, double hi, CounterRng& rng) {
  constexpr double kAlpha = 0.5;
  const double u1 = rng.uniform(-kAlpha, 1.0 + kAlpha);
  const double u2 = rng.uniform(-kAlpha, 1.0 + kAlpha);
  return {std::clamp(a + u1 * (b - a), lo, hi), std::clamp(a + u2 * (b - a), lo, hi)};
}

void mutate_real(double& x, double lo, double hi, const Nsga2Config& cfg, CounterRng& rng) {
  if (!rng.bernoulli(cfg.mutation_prob)) return;
  x = std::clamp(x + rng.normal(0.0, cfg.mutation_sigma_frac * (hi - lo)), lo, hi);
}

void mutate(Genome& g, const Nsga2Config& cfg, CounterRng& rng) {
  const auto& b = cfg.bounds;
  mutate_real(g.max_dxy, b.dxy_min, b.dxy_max, cfg, rng);
  mutate_real(g.max_dxy_over_dz, b.ratio_min, b.ratio_max, cfg, rng);
  mutate_real(g.max_abs_dphi, b.dphi_min, b.dphi_max, cfg, rng);
  if (rng.bernoulli(cfg.mutation_prob)) {
    g.skip_max = std::clamp(g.skip_max + (rng.bernoulli(0.5) ? 1 : -1), b.skip_min, b.skip_max);
  }
}

}  // namespace

std::vector<Individual> initial_population(const Nsga2Config& cfg, CounterRng& rng, const Evaluator& eval) {
  std::vector<Individual> pop;
  for (std::size_t i = 0; i < cfg.population; ++i) {
    Individual ind;
    ind.genome = random_genome(cfg.bounds, rng);
    ind.obj = eval(ind.genome);
    pop.push_back(ind);
  }
  return pop;
}

// With points sorted by ascending efficiency
// (so descending purity), f[c][i] is the best area using c points of which
// i is the least efficient: f[c][i] = max_j f[c-1][j] + e_i (p_i - p_j).
std::vector<std::size_t> best_hypervolume_subset(std::span<const Objectives> objs, std::span<const std::size_t> front,
                                                 std::size_t k) {
  std::vector<std::size_t> order(front.begin(), front.end());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return objs[a].efficiency < objs[b].efficiency ||
           (objs[a].efficiency == objs[b].efficiency && objs[a].purity > objs[b].purity);
  });
  const std::size_t n = order.size();
  const auto e = [&](std::size_t i) { return objs[order[i]].efficiency; };
  const auto p = [&](std::size_t i) { return objs[order[i]].purity; };
  constexpr double kNone = -1.0;
  std::vector<std::vector<double>> f(k + 1, std::vector<double>(n, kNone));
  std::vector<std::vector<std::size_t>> next(k + 1, std::vector<std::size_t>(n, n));
  for (std::size_t i = 0; i < n; ++i) f[1][i] = e(i) * p(i);
  for (std::size_t c = 2; c <= k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (f[c - 1][j] == kNone) continue;
        const double v = f[c - 1][j] + e(i) * (p(i) - p(j));
        if (v > f[c][i]) {
          f[c][i] = v;
          next[c][i] = j;
        }
      }
    }
  }
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (f[k][i] > f[k][start]) start = i;
  }
  std::vector<std::size_t> chosen;
  for (std::size_t c = k, i = start; c >= 1 && i < n; --c) {
    chosen.push_back(order[i]);
    i = next[c][i];
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<Individual> nsga2_generation(const std::vector<Individual>& pop, const Nsga2Config& cfg, CounterRng& rng,
                                         const Evaluator& eval) {
  if (pop.size() != cfg.population || pop.size() < 2) {
    throw ValidationError("nsga2_generation: population size mismatch");
  }
  const Ranked ranked = rank_population(pop);
  const auto& b = cfg.bounds;

  std::vector<Individual> offspring;
  while (offspring.size() < pop.size()) {
    Genome c1 = pop[tournament(ranked, rng)].genome;
    Genome c2 = pop[tournament(ranked, rng)].genome;
    if (rng.bernoulli(cfg.crossover_prob)) {
      std::tie(c1.max_dxy, c2.max_dxy) = blend(c1.max_dxy, c2.max_dxy, b.dxy_min, b.dxy_max, rng);
      std::tie(c1.max_dxy_over_dz, c2.max_dxy_over_dz) =
          blend(c1.max_dxy_over_dz, c2.max_dxy_over_dz, b.ratio_min, b.ratio_max, rng);
      std::tie(c1.max_abs_dphi, c2.max_abs_dphi) =
          blend(c1.max_abs_dphi, c2.max_abs_dphi, b.dphi_min, b.dphi_max, rng);
      if (rng.bernoulli(0.5)) std::swap(c1.skip_max, c2.skip_max);
    }
    mutate(c1, cfg, rng);
    mutate(c2, cfg, rng);
    for (const Genome& g : {c1, c2}) {
      if (offspring.size() < pop.size()) offspring.push_back({g, eval(g)});
    }
  }

  std::vector<Individual> merged = pop;
  merged.insert(merged.end(), offspring.begin(), offspring.end());
  std::vector<Objectives> objs;
  for (const auto& ind : merged) objs.push_back(ind.obj);
  std::vector<Individual> next;
  for (const auto& front : nondominated_sort(objs)) {
    if (next.size() + front.size() <= pop.size()) {
      for (std::size_t i : front) next.push_back(merged[i]);
      continue;
    }
    if (next.empty()) {
      // An overfull first front: keep the subset with the largest
      // hypervolume, so the front never loses area between generations.
      for (std::size_t i : best_hypervolume_subset(objs, front, pop.size())) next.push_back(merged[i]);
      break;
    }
    const auto cd = crowding_distance(objs, front);
    std::vector<std::size_t> order(front.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return cd[x] > cd[y]; });
    for (std::size_t k = 0; next.size() < pop.size(); ++k) next.push_back(merged[front[order[k]]]);
    break;
  }
  return next;
}

bool ParetoArchive::insert(const Individual& ind) {
  for (const auto& m : members_) {
    if (dominates(m.obj, ind.obj) || m.obj == ind.obj) return false;
  }
  std::erase_if(members_, [&](const Individual& m) { return dominates(ind.obj, m.obj); });
  members_.push_back(ind);
  return true;
}

double ParetoArchive::hypervolume(const Objectives& ref) const {
  std::vector<Objectives> objs;
  for (const auto& m : members_) objs.push_back(m.obj);
  return fdc::hypervolume(objs, ref);
}

bool ParetoArchive::consistent() const {
  for (const auto& a : members_) {
    for (const auto& b : members_) {
      if (dominates(a.obj, b.obj)) return false;
    }
  }
  return true;
}

Selection select_genome(std::span<const Individual> archive, double min_efficiency) {
  if (archive.empty()) throw ValidationError("select_genome: empty archive");
  Selection s;
  const Individual* best = nullptr;
  for (const auto& m : archive) {
    if (m.obj.efficiency >= min_efficiency && (!best || m.obj.purity > best->obj.purity)) best = &m;
  }
  if (best) {
    s.chosen = *best;
    s.reached_target = true;
    return s;
  }
  for (const auto& m : archive) {
    if (!best || m.obj.efficiency > best->obj.efficiency) best = &m;
  }
  s.chosen = *best;
  std::ostringstream msg;
  msg << "no archive member reaches efficiency " << min_efficiency << "; best is " << best->obj.efficiency;
  s.warning = msg.str();
  return s;
}

OptimizeResult optimize_cuts(const Evaluator& eval, int generations, std::uint64_t seed, const Nsga2Config& cfg,
                             const GenerationCallback& on_generation) {
  if (generations < 1) throw ValidationError("optimize_cuts: generations must be >= 1");
  OptimizeResult r;
  CounterRng rng(seed, 0x6A0000);
  auto pop = initial_population(cfg, rng, eval);
  for (const auto& ind : pop) r.archive.insert(ind);
  for (int gen = 1; gen <= generations; ++gen) {
    pop = nsga2_generation(pop, cfg, rng, eval);
    for (const auto& ind : pop) r.archive.insert(ind);
    const double hv = r.archive.hypervolume();
    r.hypervolume_history.push_back(hv);
    if (on_generation) on_generation(gen, hv);
  }
  r.final_population = pop;
  r.selection = select_genome(r.archive.members());
  return r;
}

OptimizeResult optimize_cuts(std::span<const Event> calibration, const DetectorGeometry& geom, int generations,
                             std::uint64_t seed, const Nsga2Config& cfg, const GenerationCallback& on_generation) {
  if (calibration.empty()) throw ValidationError("optimize_cuts: empty calibration set");
  Evaluator eval = [&](const Genome& g) { return evaluate_genome(g, calibration, geom); };
  return optimize_cuts(eval, generations, seed, cfg, on_generation);
}

std::string archive_csv(std::span<const Individual> members) {
  std::ostringstream out;
  out << "max_dxy,max_dxy_over_dz,max_abs_dphi,skip_max,efficiency,purity\n";
  for (const auto& m : members) {
    out << format_double(m.genome.max_dxy) << ',' << format_double(m.genome.max_dxy_over_dz) << ','
        << format_double(m.genome.max_abs_dphi) << ',' << m.genome.skip_max << ','
        << format_double(m.obj.efficiency) << ',' << format_double(m.obj.purity) << '\n';
  }
  return out.str();
}

std::string hypervolume_csv(std::span<const double> history) {
  std::ostringstream out;
  out << "generation,hypervolume\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i + 1 << ',' << format_double(history[i]) << '\n';
  return out.str();
}

}  // namespace fdc
