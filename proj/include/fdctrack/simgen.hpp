#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fdctrack/detector.hpp"

namespace fdc {

/// Helix through a uniform solenoidal field along +z.
///
/// `kappa` is the signed transverse curvature (1/cm); positive values turn
/// counterclockwise seen from +z. The transverse arc length travelled to
/// reach plane z is s = (z - z0) / tan_lambda, and the direction angle
/// advances as phi(s) = phi0 + kappa * s.
struct HelixParams {
  double kappa = 0.0;
  double phi0 = 0.0;
  double tan_lambda = 1.0;
  double x0 = 0.0, y0 = 0.0, z0 = 0.0;

  /// Center of the transverse circle; undefined for kappa == 0.
  std::pair<double, double> center() const;
};

/// Closed-form transverse position at z (no acceptance check). Requires z >= z0.
std::pair<double, double> helix_xy(const HelixParams& p, double z);

/// Transverse position at z, or nullopt when it falls outside the radial
/// acceptance of `geom`.
std::optional<std::pair<double, double>> propagate_helix(const HelixParams& p, double z,
                                                          const DetectorGeometry& geom);

struct SimConfig {
  int n_tracks_min = 1;
  int n_tracks_max = 8;
  double hit_efficiency = 0.92;
  double noise_hits_mean = 3.0;
  double smear_sigma_xy = 0.2;  // cm, stands in for multiple scattering
  double kappa_min = 1.0 / 300.0;  // |kappa| range, 1/cm
  double kappa_max = 1.0 / 40.0;
  double tan_lambda_min = 3.0;
  double tan_lambda_max = 12.0;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

SimConfig parse_sim_config(const std::string& text);
std::string format_sim_config(const SimConfig& cfg);

struct TruthTrack {
  int truth_id = 0;
  HelixParams helix;
  std::vector<int> hit_ids;  // ordered by plane
};

struct Event {
  std::int64_t event_id = 0;
  std::vector<Hit> hits;
  std::vector<TruthTrack> truth_tracks;

  /// Index into `hits` for a hit id, or -1.
  int find_hit(int hit_id) const;
};

/// Deterministic in (cfg.rng_seed, event_id).
Event generate_event(const SimConfig& cfg, const DetectorGeometry& geom, std::int64_t event_id);

/// Builds an event from explicit tracks: every in-acceptance crossing is
/// recorded, except planes listed in `dropped` for that track. No smearing,
/// no noise. Hit ids are assigned in track order.
Event event_from_tracks(const std::vector<HelixParams>& tracks, const DetectorGeometry& geom,
                        std::int64_t event_id, const std::vector<std::vector<int>>& dropped = {});

struct Split {
  std::vector<Event> train, val, test;
};

/// (train, val, test) sizes: round(n*f_train), round(n*f_val), remainder.
std::array<std::size_t, 3> split_sizes(std::size_t n_events, const std::array<double, 3>& fractions);

/// Event ids 0..n_events-1 (offset by `first_event_id`), assigned to the
/// splits in contiguous blocks.
Split generate_dataset(const SimConfig& cfg, const DetectorGeometry& geom, std::size_t n_events,
                       const std::array<double, 3>& fractions, std::int64_t first_event_id = 0);

std::vector<Event> generate_events(const SimConfig& cfg, const DetectorGeometry& geom,
                                   std::int64_t first_event_id, std::size_t count);

// JSON-lines persistence. Field order is fixed.
std::string event_to_json(const Event& ev);
Event event_from_json(const std::string& line, const DetectorGeometry& geom);
void write_events(const std::string& path, const std::vector<Event>& events);
std::vector<Event> read_events(const std::string& path, const DetectorGeometry& geom);

}  // namespace fdc
