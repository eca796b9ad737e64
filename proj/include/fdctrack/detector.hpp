#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fdc {

/// Thrown for inputs that violate a documented contract (bad config, shape
/// mismatch, broken invariant). The CLI maps it to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr int kNumPlanes = 24;
inline constexpr int kNumPackages = 4;
inline constexpr int kPlanesPerPackage = 6;

/// Maps an angle onto (-pi, pi].
double wrap_angle(double a);

/// Idealized forward drift chamber: 24 wire planes in 4 packages of 6.
struct DetectorGeometry {
  std::vector<double> plane_z;       // cm, strictly increasing
  std::vector<int> package_of_plane;  // 0..3
  double active_radius_min = 0.0;     // cm
  double active_radius_max = 0.0;     // cm

  int num_planes() const { return static_cast<int>(plane_z.size()); }
  int package(int plane) const { return package_of_plane.at(static_cast<std::size_t>(plane)); }
  /// First and last plane index of a package.
  std::pair<int, int> package_planes(int pkg) const;
  bool in_acceptance(double r) const { return r >= active_radius_min && r <= active_radius_max; }

  /// Throws ValidationError when any geometry invariant is violated.
  void validate() const;
};

DetectorGeometry default_geometry();

/// (x, y) -> (r, phi) with phi in (-pi, pi]; the origin maps to (0, 0).
std::pair<double, double> to_cylindrical(double x, double y);

/// One recorded crossing of a detector plane.
struct Hit {
  double x = 0, y = 0, z = 0;
  double r = 0, phi = 0;
  int plane = 0;
  std::int64_t event_id = 0;
  int truth_id = -1;  // negative for noise
  int hit_id = 0;
};

/// Builds a hit with consistent cylindrical coordinates and z = plane_z[plane].
Hit make_hit(double x, double y, int plane, const DetectorGeometry& geom, std::int64_t event_id,
             int truth_id, int hit_id);

/// Plain-text geometry config: `key = value` lines, '#' comments.
/// Keys: plane_z (24 comma-separated values), package_of_plane (optional),
/// active_radius_min, active_radius_max.
DetectorGeometry parse_geometry(const std::string& text);
std::string format_geometry(const DetectorGeometry& geom);
DetectorGeometry load_geometry(const std::string& path);

}  // namespace fdc
