#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fdctrack/detector.hpp"
#include "fdctrack/graphbuild.hpp"
#include "fdctrack/rng.hpp"
#include "fdctrack/simgen.hpp"

namespace fdc {

struct GenomeBounds {
  double dxy_min = 1.0, dxy_max = 100.0;
  double ratio_min = 0.1, ratio_max = 50.0;
  double dphi_min = 0.01, dphi_max = kPi;
  int skip_min = 0, skip_max = 6;
};

/// Cut genome; the fields are the CutConfig thresholds.
struct Genome {
  double max_dxy = 34.4;
  double max_dxy_over_dz = 5.4;
  double max_abs_dphi = 2.3;
  int skip_max = 3;

  CutConfig to_cuts() const { return {max_dxy, max_dxy_over_dz, max_abs_dphi, skip_max}; }
  static Genome from_cuts(const CutConfig& c) { return {c.max_dxy, c.max_dxy_over_dz, c.max_abs_dphi, c.skip_max}; }
  bool within(const GenomeBounds& b) const;
  bool operator==(const Genome&) const = default;
};

struct Objectives {
  double efficiency = 0.0;
  double purity = 0.0;
  bool operator==(const Objectives&) const = default;
};

struct Individual {
  Genome genome;
  Objectives obj;
  bool operator==(const Individual&) const = default;
};

/// a >= b in both objectives and a > b in at least one.
bool dominates(const Objectives& a, const Objectives& b);

/// Fronts of point indices, best first. Indices within a front ascend.
std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const Objectives> points);

/// Crowding distance of each member of one front (same order as `front`).
/// Boundary points get +infinity.
std::vector<double> crowding_distance(std::span<const Objectives> points, std::span<const std::size_t> front);

/// Area dominated by `points` and bounded below by `ref`. Every point must
/// dominate `ref` weakly (>= in both); otherwise ValidationError.
double hypervolume(std::span<const Objectives> points, const Objectives& ref = {});

/// The k members of a mutually non-dominated `front` (indices into
/// `points`) whose union has the largest hypervolume against (0, 0).
/// Returned indices ascend.
std::vector<std::size_t> best_hypervolume_subset(std::span<const Objectives> points, std::span<const std::size_t> front,
                                                 std::size_t k);

/// Builder efficiency and purity of `cuts` on labeled calibration events.
/// Purity is 1.0 when no edge survives.
Objectives evaluate_genome(const Genome& g, std::span<const Event> calibration, const DetectorGeometry& geom);

using Evaluator = std::function<Objectives(const Genome&)>;

struct Nsga2Config {
  std::size_t population = 64;
  double crossover_prob = 0.95;
  double mutation_prob = 0.01;
  double mutation_sigma_frac = 0.1;
  GenomeBounds bounds;
};

/// Uniformly random genomes inside the bounds.
std::vector<Individual> initial_population(const Nsga2Config& cfg, CounterRng& rng, const Evaluator& eval);

/// One generation: tournament selection, crossover, mutation, evaluation of
/// the offspring, and elitist survivor selection from parents + offspring.
std::vector<Individual> nsga2_generation(const std::vector<Individual>& pop, const Nsga2Config& cfg, CounterRng& rng,
                                         const Evaluator& eval);

/// Non-dominated members only, duplicates of objective vectors collapsed to
/// the first occurrence.
class ParetoArchive {
 public:
  /// Returns true when `ind` entered the archive.
  bool insert(const Individual& ind);
  const std::vector<Individual>& members() const { return members_; }
  double hypervolume(const Objectives& ref = {}) const;
  /// No member dominates another.
  bool consistent() const;

 private:
  std::vector<Individual> members_;
};

struct Selection {
  Individual chosen;
  bool reached_target = false;
  std::string warning;  // set when no member reached the target
};

/// Highest purity among members with efficiency >= min_efficiency; else the
/// highest-efficiency member with a warning. Ties keep archive order.
Selection select_genome(std::span<const Individual> archive, double min_efficiency = 0.99);

struct OptimizeResult {
  ParetoArchive archive;
  std::vector<double> hypervolume_history;  // one entry per generation
  std::vector<Individual> final_population;
  Selection selection;
};

using GenerationCallback = std::function<void(int generation, double hypervolume)>;

OptimizeResult optimize_cuts(const Evaluator& eval, int generations, std::uint64_t seed, const Nsga2Config& cfg = {},
                             const GenerationCallback& on_generation = {});

/// Convenience overload evaluating on calibration events.
OptimizeResult optimize_cuts(std::span<const Event> calibration, const DetectorGeometry& geom, int generations,
                             std::uint64_t seed, const Nsga2Config& cfg = {},
                             const GenerationCallback& on_generation = {});

// CSV: max_dxy,max_dxy_over_dz,max_abs_dphi,skip_max,efficiency,purity
std::string archive_csv(std::span<const Individual> members);
// CSV: generation,hypervolume
std::string hypervolume_csv(std::span<const double> history);

}  // namespace fdc
