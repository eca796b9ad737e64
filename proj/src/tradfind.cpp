#include "fdctrack/tradfind.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <tuple>

namespace fdc {

std::pair<double, double> HelixFit::project(double z) const {
  const double s = (z - z_offset) / tan_lambda;
  const double psi = ref_angle + turn_sign * s / r_c;
  return {x_c + r_c * std::cos(psi), y_c + r_c * std::sin(psi)};
}

namespace {

// Solves a small dense system in place by Gaussian elimination with partial
// pivoting. Returns false when a pivot is negligible relative to the
// matrix scale.
template <std::size_t N>
bool solve(std::array<std::array<double, N>, N> a, std::array<double, N> b, std::array<double, N>& x) {
  double scale = 0.0;
  for (const auto& row : a) {
    for (double v : row) scale = std::max(scale, std::abs(v));
  }
  if (scale == 0.0) return false;
  for (std::size_t col = 0; col < N; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < N; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) <= 1e-12 * scale) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < N; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < N; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = N; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < N; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return true;
}

}  // namespace

HelixFit helical_fit(std::span<const Hit> hits, bool constrain_origin) {
  if (hits.size() < 3) throw DegenerateFitError("helical fit needs at least 3 hits");
  HelixFit f;
  if (constrain_origin) {
    // x^2 + y^2 = 2 x_c x + 2 y_c y for circles through the origin.
    std::array<std::array<double, 2>, 2> a{};
    std::array<double, 2> b{};
    for (const auto& h : hits) {
      const double rho2 = h.x * h.x + h.y * h.y;
      a[0][0] += 4 * h.x * h.x;
      a[0][1] += 4 * h.x * h.y;
      a[1][1] += 4 * h.y * h.y;
      b[0] += 2 * h.x * rho2;
      b[1] += 2 * h.y * rho2;
    }
    a[1][0] = a[0][1];
    std::array<double, 2> sol{};
    // A rank-1 system can survive elimination with a rounding-level pivot,
    // so also test the determinant against the diagonal scale.
    const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if (!(det > 1e-10 * a[0][0] * a[1][1]) || !solve<2>(a, b, sol)) {
      throw DegenerateFitError("helical fit: hits do not determine a circle through the origin");
    }
    f.x_c = sol[0];
    f.y_c = sol[1];
    f.r_c = std::hypot(f.x_c, f.y_c);
  } else {
    // x^2 + y^2 = A x + B y + C
    std::array<std::array<double, 3>, 3> a{};
    std::array<double, 3> b{};
    for (const auto& h : hits) {
      const std::array<double, 3> row = {h.x, h.y, 1.0};
      const double rho2 = h.x * h.x + h.y * h.y;
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) a[i][j] += row[i] * row[j];
        b[i] += row[i] * rho2;
      }
    }
    std::array<double, 3> sol{};
    if (!solve<3>(a, b, sol)) throw DegenerateFitError("helical fit: hits do not determine a circle");
    f.x_c = sol[0] / 2;
    f.y_c = sol[1] / 2;
    const double r2 = sol[2] + f.x_c * f.x_c + f.y_c * f.y_c;
    if (!(r2 > 0.0)) throw DegenerateFitError("helical fit: imaginary radius");
    f.r_c = std::sqrt(r2);
  }
  if (!(f.r_c > 0.0) || !std::isfinite(f.r_c)) throw DegenerateFitError("helical fit: invalid radius");

  // Turning direction from the angular progression of plane-ordered hits.
  std::vector<const Hit*> ordered;
  for (const auto& h : hits) ordered.push_back(&h);
  std::stable_sort(ordered.begin(), ordered.end(), [](const Hit* a, const Hit* b) { return a->z < b->z; });
  std::vector<double> psi;
  for (const Hit* h : ordered) psi.push_back(std::atan2(h->y - f.y_c, h->x - f.x_c));
  double sweep = 0.0;
  for (std::size_t i = 1; i < psi.size(); ++i) sweep += wrap_angle(psi[i] - psi[i - 1]);
  f.turn_sign = sweep >= 0.0 ? 1 : -1;
  f.ref_angle = std::atan2(-f.y_c, -f.x_c);

  std::vector<double> s(ordered.size());
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    double theta = std::fmod(f.turn_sign * (psi[i] - f.ref_angle), 2.0 * kPi);
    if (theta < 0.0) theta += 2.0 * kPi;
    s[i] = f.r_c * theta;
  }
  if (constrain_origin) {
    double szs = 0.0, sss = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      szs += ordered[i]->z * s[i];
      sss += s[i] * s[i];
    }
    if (!(sss > 0.0)) throw DegenerateFitError("helical fit: zero arc length");
    f.tan_lambda = szs / sss;
    f.z_offset = 0.0;
  } else {
    const auto n = static_cast<double>(s.size());
    double ms = 0.0, mz = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      ms += s[i];
      mz += ordered[i]->z;
    }
    ms /= n;
    mz /= n;
    double cov = 0.0, var = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      cov += (s[i] - ms) * (ordered[i]->z - mz);
      var += (s[i] - ms) * (s[i] - ms);
    }
    if (!(var > 0.0)) throw DegenerateFitError("helical fit: no arc-length spread");
    f.tan_lambda = cov / var;
    f.z_offset = mz - f.tan_lambda * ms;
  }
  if (!(f.tan_lambda > 0.0) || !std::isfinite(f.tan_lambda)) {
    throw DegenerateFitError("helical fit: non-forward dip");
  }

  double sq = 0.0;
  for (const auto& h : hits) {
    const double d = std::hypot(h.x - f.x_c, h.y - f.y_c) - f.r_c;
    sq += d * d;
  }
  f.residual = std::sqrt(sq / static_cast<double>(hits.size()));
  return f;
}

double projection_threshold(double r_c, const TradConfig& cfg) {
  return std::clamp(cfg.d2_scale / r_c, cfg.d2_min, cfg.d2_max);
}

std::vector<Segment> find_segments(std::span<const Hit> package_hits, const DetectorGeometry& geom,
                                   const TradConfig& cfg) {
  std::map<int, std::vector<std::size_t>> by_plane;
  for (std::size_t i = 0; i < package_hits.size(); ++i) by_plane[package_hits[i].plane].push_back(i);
  for (auto& [plane, idx] : by_plane) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return package_hits[a].hit_id < package_hits[b].hit_id;
    });
  }
  std::vector<bool> used(package_hits.size(), false);
  std::vector<Segment> out;
  const double max_d2 = cfg.proximity_cm * cfg.proximity_cm;

  for (auto seed_plane = by_plane.begin(); seed_plane != by_plane.end(); ++seed_plane) {
    for (std::size_t seed : seed_plane->second) {
      if (used[seed]) continue;
      std::vector<std::size_t> chain = {seed};
      for (auto next = std::next(seed_plane); next != by_plane.end(); ++next) {
        const Hit& last = package_hits[chain.back()];
        std::size_t best = package_hits.size();
        double best_d2 = max_d2;
        for (std::size_t c : next->second) {
          if (used[c]) continue;
          const double dx = package_hits[c].x - last.x;
          const double dy = package_hits[c].y - last.y;
          const double d2 = dx * dx + dy * dy;
          // Candidates are visited in hit-id order, so strict < keeps the
          // lowest id among equal distances.
          if (d2 < best_d2) {
            best_d2 = d2;
            best = c;
          }
        }
        if (best < package_hits.size()) chain.push_back(best);
      }
      if (chain.size() < cfg.min_hits) continue;
      Segment seg;
      for (std::size_t c : chain) seg.hits.push_back(package_hits[c]);
      seg.package = geom.package(seg.hits.front().plane);
      try {
        seg.fit = helical_fit(seg.hits, true);
      } catch (const DegenerateFitError&) {
        continue;
      }
      for (std::size_t c : chain) used[c] = true;
      out.push_back(std::move(seg));
    }
  }
  return out;
}

namespace {

double dist2(std::pair<double, double> a, std::pair<double, double> b) {
  const double dx = a.first - b.first;
  const double dy = a.second - b.second;
  return dx * dx + dy * dy;
}

struct Match {
  double d2;
  std::size_t source;
  std::size_t target;
  bool operator<(const Match& o) const { return std::tie(d2, source, target) < std::tie(o.d2, o.source, o.target); }
};

// Squared distance between two helices evaluated at the first plane of the
// target package.
double projection_d2(const HelixFit& from, const Segment& to, const DetectorGeometry& geom) {
  const double z = geom.plane_z[static_cast<std::size_t>(geom.package_planes(to.package).first)];
  return dist2(from.project(z), to.fit.project(z));
}

double center_d2(const HelixFit& a, const HelixFit& b) { return dist2({a.x_c, a.y_c}, {b.x_c, b.y_c}); }

std::vector<Hit> combined_hits(const std::vector<Segment>& segs) {
  std::vector<Hit> hits;
  for (const auto& s : segs) hits.insert(hits.end(), s.hits.begin(), s.hits.end());
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.plane < b.plane; });
  return hits;
}

}  // namespace

std::vector<TrackCandidate> link_segments(std::vector<Segment> segments, const DetectorGeometry& geom,
                                          const TradConfig& cfg) {
  std::stable_sort(segments.begin(), segments.end(),
                   [](const Segment& a, const Segment& b) { return a.package < b.package; });
  std::array<std::vector<std::size_t>, kNumPackages> by_pkg;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    by_pkg.at(static_cast<std::size_t>(segments[i].package)).push_back(i);
  }

  std::vector<std::vector<std::size_t>> cands;  // segment indices
  std::vector<long> cand_of(segments.size(), -1);

  // First pass: package by package, extend each candidate to the next
  // package that has segments.
  for (int p = 0; p < kNumPackages; ++p) {
    for (std::size_t s : by_pkg[static_cast<std::size_t>(p)]) {
      if (cand_of[s] >= 0) continue;
      cand_of[s] = static_cast<long>(cands.size());
      cands.push_back({s});
    }
    int q = p + 1;
    while (q < kNumPackages && by_pkg[static_cast<std::size_t>(q)].empty()) ++q;
    if (q >= kNumPackages) continue;

    std::vector<std::size_t> sources;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (segments[cands[c].back()].package == p) sources.push_back(c);
    }
    std::vector<Match> proj, centers;
    for (std::size_t c : sources) {
      const HelixFit& fit = segments[cands[c].back()].fit;
      for (std::size_t t : by_pkg[static_cast<std::size_t>(q)]) {
        const double d2 = projection_d2(fit, segments[t], geom);
        if (d2 < projection_threshold(fit.r_c, cfg)) proj.push_back({d2, c, t});
        const double cd2 = center_d2(fit, segments[t].fit);
        if (cd2 < cfg.center_d2_max) centers.push_back({cd2, c, t});
      }
    }
    std::vector<bool> extended(cands.size(), false);
    for (auto* matches : {&proj, &centers}) {
      std::sort(matches->begin(), matches->end());
      for (const auto& m : *matches) {
        if (extended[m.source] || cand_of[m.target] >= 0) continue;
        extended[m.source] = true;
        cand_of[m.target] = static_cast<long>(m.source);
        cands[m.source].push_back(m.target);
      }
    }
  }

  // Recovery pass, once: refit linked candidates on their combined hits and
  // try to absorb candidates that start further downstream.
  std::vector<bool> absorbed(cands.size(), false);
  for (std::size_t a = 0; a < cands.size(); ++a) {
    if (absorbed[a] || cands[a].size() < 2) continue;
    std::vector<Segment> segs;
    for (std::size_t s : cands[a]) segs.push_back(segments[s]);
    const auto hits = combined_hits(segs);
    HelixFit fit;
    try {
      fit = helical_fit(hits, true);
    } catch (const DegenerateFitError&) {
      continue;
    }
    const int last_pkg = segments[cands[a].back()].package;
    std::vector<Match> proj, centers;
    for (std::size_t b = 0; b < cands.size(); ++b) {
      if (b == a || absorbed[b]) continue;
      const Segment& first = segments[cands[b].front()];
      if (first.package <= last_pkg) continue;
      const double d2 = projection_d2(fit, first, geom);
      if (d2 < projection_threshold(fit.r_c, cfg)) proj.push_back({d2, a, b});
      const double cd2 = center_d2(fit, first.fit);
      if (cd2 < cfg.center_d2_max) centers.push_back({cd2, a, b});
    }
    const Match* best = nullptr;
    if (!proj.empty()) {
      best = &*std::min_element(proj.begin(), proj.end());
    } else if (!centers.empty()) {
      best = &*std::min_element(centers.begin(), centers.end());
    }
    if (best) {
      absorbed[best->target] = true;
      cands[a].insert(cands[a].end(), cands[best->target].begin(), cands[best->target].end());
    }
  }

  std::vector<TrackCandidate> out;
  for (std::size_t c = 0; c < cands.size(); ++c) {
    if (absorbed[c]) continue;
    TrackCandidate tc;
    for (std::size_t s : cands[c]) tc.segments.push_back(segments[s]);
    tc.hits = combined_hits(tc.segments);
    try {
      tc.fit = helical_fit(tc.hits, true);
    } catch (const DegenerateFitError&) {
      tc.fit = tc.segments.front().fit;
    }
    out.push_back(std::move(tc));
  }
  return out;
}

TraditionalResult run_traditional(const Event& ev, const DetectorGeometry& geom, const TradConfig& cfg) {
  TraditionalResult r;
  std::array<std::vector<Hit>, kNumPackages> per_pkg;
  for (const auto& h : ev.hits) per_pkg.at(static_cast<std::size_t>(geom.package(h.plane))).push_back(h);
  for (const auto& hits : per_pkg) {
    auto segs = find_segments(hits, geom, cfg);
    r.segments.insert(r.segments.end(), segs.begin(), segs.end());
  }
  r.candidates = link_segments(r.segments, geom, cfg);
  for (const auto& c : r.candidates) {
    for (std::size_t k = 1; k < c.hits.size(); ++k) {
      r.edges.push_back({ev.event_id, c.hits[k - 1].hit_id, c.hits[k].hit_id, 1.0});
    }
  }
  return r;
}

}  // namespace fdc
