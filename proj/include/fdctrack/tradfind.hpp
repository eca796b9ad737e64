#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fdctrack/detector.hpp"
#include "fdctrack/simgen.hpp"

namespace fdc {

/// Raised when the hits cannot determine a circle (rank-deficient system).
class DegenerateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Helix estimate from a set of hits.
///
/// The transverse projection is the circle (x_c, y_c, r_c). Arc length is
/// measured from the circle point in the direction of the origin
/// (`ref_angle`), turning with `turn_sign`; z = z_offset + tan_lambda * s.
struct HelixFit {
  double x_c = 0, y_c = 0, r_c = 0;
  double tan_lambda = 0;
  double z_offset = 0;
  double ref_angle = 0;
  int turn_sign = 1;
  double residual = 0;  // RMS radial distance of the hits from the circle

  /// Transverse position of the fitted helix at plane height z.
  std::pair<double, double> project(double z) const;
};

/// With `constrain_origin` the circle passes through (0, 0) and z is fitted
/// as tan_lambda * s (vertex at the origin). Otherwise a free algebraic
/// circle and a two-parameter line are fitted. Needs at least 3 hits.
HelixFit helical_fit(std::span<const Hit> hits, bool constrain_origin = true);

struct Segment {
  int package = 0;
  std::vector<Hit> hits;  // plane-ordered, one package
  HelixFit fit;
};

struct TrackCandidate {
  std::vector<Segment> segments;  // ascending package order
  std::vector<Hit> hits;          // combined, plane-ordered
  HelixFit fit;
};

struct TradConfig {
  double proximity_cm = 2.0;     // chain-growing xy distance
  std::size_t min_hits = 3;
  double d2_scale = 1000.0;      // projection threshold d^2 < scale / r_c
  double d2_min = 5.0;           // cm^2
  double d2_max = 25.0;          // cm^2
  double center_d2_max = 25.0;   // cm^2
};

/// Projection-match threshold clamp(scale / r_c, d2_min, d2_max).
double projection_threshold(double r_c, const TradConfig& cfg = {});

/// Greedy nearest-neighbor chains inside one package.
std::vector<Segment> find_segments(std::span<const Hit> package_hits, const DetectorGeometry& geom,
                                   const TradConfig& cfg = {});

/// Links segments of different packages into track candidates.
std::vector<TrackCandidate> link_segments(std::vector<Segment> segments, const DetectorGeometry& geom,
                                          const TradConfig& cfg = {});

struct PredictedEdge {
  std::int64_t event_id = 0;
  int source_hit = 0;
  int target_hit = 0;
  double score = 1.0;
  bool operator==(const PredictedEdge&) const = default;
};

struct TraditionalResult {
  std::vector<Segment> segments;
  std::vector<TrackCandidate> candidates;
  std::vector<PredictedEdge> edges;  // consecutive hits of each candidate
};

TraditionalResult run_traditional(const Event& ev, const DetectorGeometry& geom, const TradConfig& cfg = {});

}  // namespace fdc
