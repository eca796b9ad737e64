#include "fdctrack/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "fdctrack/config.hpp"

namespace fdc {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

std::pair<int, int> DetectorGeometry::package_planes(int pkg) const {
  int first = -1;
  int last = -1;
  for (int p = 0; p < num_planes(); ++p) {
    if (package_of_plane[static_cast<std::size_t>(p)] != pkg) continue;
    if (first < 0) first = p;
    last = p;
  }
  if (first < 0) throw ValidationError("no planes in package " + std::to_string(pkg));
  return {first, last};
}

void DetectorGeometry::validate() const {
  if (plane_z.size() != kNumPlanes) {
    throw ValidationError("geometry: expected 24 planes, got " + std::to_string(plane_z.size()));
  }
  if (package_of_plane.size() != plane_z.size()) {
    throw ValidationError("geometry: package_of_plane must have one entry per plane");
  }
  for (std::size_t i = 1; i < plane_z.size(); ++i) {
    if (!(plane_z[i] > plane_z[i - 1])) throw ValidationError("geometry: plane_z not strictly increasing");
  }
  for (int p = 0; p < kNumPlanes; ++p) {
    if (package_of_plane[static_cast<std::size_t>(p)] != p / kPlanesPerPackage) {
      throw ValidationError("geometry: packages must be 6 consecutive planes each");
    }
  }
  double max_intra = 0.0;
  double min_inter = 1e300;
  for (std::size_t i = 1; i < plane_z.size(); ++i) {
    const double gap = plane_z[i] - plane_z[i - 1];
    if (package_of_plane[i] == package_of_plane[i - 1]) {
      max_intra = std::max(max_intra, gap);
    } else {
      min_inter = std::min(min_inter, gap);
    }
  }
  if (!(max_intra < min_inter)) {
    throw ValidationError("geometry: intra-package spacing must be smaller than inter-package gap");
  }
  if (!(active_radius_min >= 0.0 && active_radius_max > active_radius_min)) {
    throw ValidationError("geometry: need 0 <= active_radius_min < active_radius_max");
  }
}

DetectorGeometry default_geometry() {
  DetectorGeometry g;
  constexpr std::array<double, kNumPackages> centers = {180.0, 240.0, 300.0, 360.0};
  constexpr double pitch = 1.0;
  for (int pkg = 0; pkg < kNumPackages; ++pkg) {
    for (int j = 0; j < kPlanesPerPackage; ++j) {
      g.plane_z.push_back(centers[static_cast<std::size_t>(pkg)] + (j - 2.5) * pitch);
      g.package_of_plane.push_back(pkg);
    }
  }
  g.active_radius_min = 3.0;
  g.active_radius_max = 48.0;
  return g;
}

std::pair<double, double> to_cylindrical(double x, double y) {
  const double r = std::hypot(x, y);
  if (r == 0.0) return {0.0, 0.0};
  double phi = std::atan2(y, x);
  if (phi <= -kPi) phi = kPi;  // atan2(-0.0, -1) gives -pi
  return {r, phi};
}

Hit make_hit(double x, double y, int plane, const DetectorGeometry& geom, std::int64_t event_id,
             int truth_id, int hit_id) {
  Hit h;
  h.x = x;
  h.y = y;
  h.z = geom.plane_z.at(static_cast<std::size_t>(plane));
  std::tie(h.r, h.phi) = to_cylindrical(x, y);
  h.plane = plane;
  h.event_id = event_id;
  h.truth_id = truth_id;
  h.hit_id = hit_id;
  return h;
}

DetectorGeometry parse_geometry(const std::string& text) {
  const auto cfg = KeyValueConfig::parse(text);
  cfg.check_known({"plane_z", "package_of_plane", "active_radius_min", "active_radius_max"});
  DetectorGeometry g = default_geometry();
  if (cfg.has("plane_z")) g.plane_z = cfg.get_doubles("plane_z");
  if (cfg.has("package_of_plane")) {
    g.package_of_plane.clear();
    for (double v : cfg.get_doubles("package_of_plane")) g.package_of_plane.push_back(static_cast<int>(v));
  }
  g.active_radius_min = cfg.get_double("active_radius_min", g.active_radius_min);
  g.active_radius_max = cfg.get_double("active_radius_max", g.active_radius_max);
  g.validate();
  return g;
}

std::string format_geometry(const DetectorGeometry& geom) {
  std::ostringstream out;
  out << "plane_z = ";
  for (std::size_t i = 0; i < geom.plane_z.size(); ++i) out << (i ? ", " : "") << format_double(geom.plane_z[i]);
  out << "\npackage_of_plane = ";
  for (std::size_t i = 0; i < geom.package_of_plane.size(); ++i) out << (i ? ", " : "") << geom.package_of_plane[i];
  out << "\nactive_radius_min = " << format_double(geom.active_radius_min)
      << "\nactive_radius_max = " << format_double(geom.active_radius_max) << "\n";
  return out.str();
}

DetectorGeometry load_geometry(const std::string& path) { return parse_geometry(read_text_file(path)); }

}  // namespace fdc
