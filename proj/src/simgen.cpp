#include "fdctrack/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fdctrack/config.hpp"
#include "fdctrack/rng.hpp"

namespace fdc {
namespace {

using ordered_json = nlohmann::ordered_json;

double sinc(double u) {
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    return 1.0 - u2 / 6.0 + u2 * u2 / 120.0;
  }
  return std::sin(u) / u;
}

}  // namespace

std::pair<double, double> HelixParams::center() const {
  return {x0 - std::sin(phi0) / kappa, y0 + std::cos(phi0) / kappa};
}

std::pair<double, double> helix_xy(const HelixParams& p, double z) {
  if (z < p.z0) throw ValidationError("helix_xy: z below vertex");
  if (!(p.tan_lambda > 0.0)) throw ValidationError("helix_xy: tan_lambda must be positive");
  const double s = (z - p.z0) / p.tan_lambda;
  // Chord of length s*sinc(kappa*s/2) along the mid-arc direction; exact for
  // kappa == 0 and free of 1/kappa cancellation for small curvature.
  const double half_turn = 0.5 * p.kappa * s;
  const double chord = s * sinc(half_turn);
  const double dir = p.phi0 + half_turn;
  return {p.x0 + chord * std::cos(dir), p.y0 + chord * std::sin(dir)};
}

std::optional<std::pair<double, double>> propagate_helix(const HelixParams& p, double z,
                                                          const DetectorGeometry& geom) {
  const auto xy = helix_xy(p, z);
  if (!geom.in_acceptance(std::hypot(xy.first, xy.second))) return std::nullopt;
  return xy;
}

void SimConfig::validate() const {
  if (n_tracks_min < 0 || n_tracks_max < n_tracks_min) throw ValidationError("sim: bad track count range");
  if (!(hit_efficiency > 0.0 && hit_efficiency <= 1.0)) throw ValidationError("sim: hit_efficiency must be in (0, 1]");
  if (!(noise_hits_mean >= 0.0)) throw ValidationError("sim: noise_hits_mean must be >= 0");
  if (!(smear_sigma_xy >= 0.0)) throw ValidationError("sim: smear_sigma_xy must be >= 0");
  if (!(kappa_min > 0.0 && kappa_max >= kappa_min)) throw ValidationError("sim: bad kappa range");
  if (!(tan_lambda_min > 0.0 && tan_lambda_max >= tan_lambda_min)) throw ValidationError("sim: bad tan_lambda range");
}

SimConfig parse_sim_config(const std::string& text) {
  const auto kv = KeyValueConfig::parse(text);
  kv.check_known({"n_tracks_min", "n_tracks_max", "hit_efficiency", "noise_hits_mean", "smear_sigma_xy",
                  "kappa_min", "kappa_max", "tan_lambda_min", "tan_lambda_max", "rng_seed"});
  SimConfig c;
  c.n_tracks_min = static_cast<int>(kv.get_int("n_tracks_min", c.n_tracks_min));
  c.n_tracks_max = static_cast<int>(kv.get_int("n_tracks_max", c.n_tracks_max));
  c.hit_efficiency = kv.get_double("hit_efficiency", c.hit_efficiency);
  c.noise_hits_mean = kv.get_double("noise_hits_mean", c.noise_hits_mean);
  c.smear_sigma_xy = kv.get_double("smear_sigma_xy", c.smear_sigma_xy);
  c.kappa_min = kv.get_double("kappa_min", c.kappa_min);
  c.kappa_max = kv.get_double("kappa_max", c.kappa_max);
  c.tan_lambda_min = kv.get_double("tan_lambda_min", c.tan_lambda_min);
  c.tan_lambda_max = kv.get_double("tan_lambda_max", c.tan_lambda_max);
  c.rng_seed = static_cast<std::uint64_t>(kv.get_int("rng_seed", static_cast<long>(c.rng_seed)));
  c.validate();
  return c;
}

std::string format_sim_config(const SimConfig& c) {
  std::ostringstream out;
  out << "n_tracks_min = " << c.n_tracks_min << "\n"
      << "n_tracks_max = " << c.n_tracks_max << "\n"
      << "hit_efficiency = " << format_double(c.hit_efficiency) << "\n"
      << "noise_hits_mean = " << format_double(c.noise_hits_mean) << "\n"
      << "smear_sigma_xy = " << format_double(c.smear_sigma_xy) << "\n"
      << "kappa_min = " << format_double(c.kappa_min) << "\n"
      << "kappa_max = " << format_double(c.kappa_max) << "\n"
      << "tan_lambda_min = " << format_double(c.tan_lambda_min) << "\n"
      << "tan_lambda_max = " << format_double(c.tan_lambda_max) << "\n"
      << "rng_seed = " << c.rng_seed << "\n";
  return out.str();
}

int Event::find_hit(int hit_id) const {
  // Generated events use hit_id == index; fall back to a scan otherwise.
  if (hit_id >= 0 && static_cast<std::size_t>(hit_id) < hits.size() &&
      hits[static_cast<std::size_t>(hit_id)].hit_id == hit_id) {
    return hit_id;
  }
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i].hit_id == hit_id) return static_cast<int>(i);
  }
  return -1;
}

namespace {

struct RawHit {
  double x, y;
  int plane;
  int truth_id;
};

// Assigns hit ids in the given order and fills the per-track hit lists.
Event assemble(std::int64_t event_id, const std::vector<RawHit>& raw, const std::vector<HelixParams>& helices,
               const DetectorGeometry& geom) {
  Event ev;
  ev.event_id = event_id;
  std::vector<std::vector<std::pair<int, int>>> per_track(helices.size());  // (plane, hit_id)
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& h = raw[i];
    ev.hits.push_back(make_hit(h.x, h.y, h.plane, geom, event_id, h.truth_id, static_cast<int>(i)));
    if (h.truth_id >= 0) per_track[static_cast<std::size_t>(h.truth_id)].emplace_back(h.plane, static_cast<int>(i));
  }
  for (std::size_t t = 0; t < helices.size(); ++t) {
    if (per_track[t].empty()) continue;
    std::sort(per_track[t].begin(), per_track[t].end());
    TruthTrack tr;
    tr.truth_id = static_cast<int>(t);
    tr.helix = helices[t];
    for (const auto& [plane, id] : per_track[t]) tr.hit_ids.push_back(id);
    ev.truth_tracks.push_back(std::move(tr));
  }
  return ev;
}

}  // namespace

Event generate_event(const SimConfig& cfg, const DetectorGeometry& geom, std::int64_t event_id) {
  cfg.validate();
  CounterRng rng(cfg.rng_seed, static_cast<std::uint64_t>(event_id));
  const int n_tracks = static_cast<int>(rng.uniform_int(cfg.n_tracks_min, cfg.n_tracks_max));

  std::vector<HelixParams> helices;
  std::vector<RawHit> raw;
  for (int t = 0; t < n_tracks; ++t) {
    HelixParams hp;
    const double magnitude = rng.uniform(cfg.kappa_min, cfg.kappa_max);
    hp.kappa = rng.bernoulli(0.5) ? magnitude : -magnitude;
    hp.phi0 = wrap_angle(rng.uniform(-kPi, kPi));
    hp.tan_lambda = rng.uniform(cfg.tan_lambda_min, cfg.tan_lambda_max);
    helices.push_back(hp);
    for (int plane = 0; plane < geom.num_planes(); ++plane) {
      const auto xy = propagate_helix(hp, geom.plane_z[static_cast<std::size_t>(plane)], geom);
      // Draw both variates unconditionally so the stream layout does not
      // depend on acceptance.
      const bool recorded = rng.bernoulli(cfg.hit_efficiency);
      const double dx = rng.normal() * cfg.smear_sigma_xy;
      const double dy = rng.normal() * cfg.smear_sigma_xy;
      if (!xy || !recorded) continue;
      const double x = xy->first + dx;
      const double y = xy->second + dy;
      if (!geom.in_acceptance(std::hypot(x, y))) continue;
      raw.push_back({x, y, plane, t});
    }
  }

  const int n_noise = rng.poisson(cfg.noise_hits_mean);
  const double r2_lo = geom.active_radius_min * geom.active_radius_min;
  const double r2_hi = geom.active_radius_max * geom.active_radius_max;
  for (int k = 0; k < n_noise; ++k) {
    const int plane = static_cast<int>(rng.uniform_int(0, geom.num_planes() - 1));
    const double r = std::sqrt(rng.uniform(r2_lo, r2_hi));
    const double phi = rng.uniform(-kPi, kPi);
    raw.push_back({r * std::cos(phi), r * std::sin(phi), plane, -1});
  }

  // Hit ids must not leak the truth grouping.
  rng.shuffle(raw);
  return assemble(event_id, raw, helices, geom);
}

Event event_from_tracks(const std::vector<HelixParams>& tracks, const DetectorGeometry& geom,
                        std::int64_t event_id, const std::vector<std::vector<int>>& dropped) {
  std::vector<RawHit> raw;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    for (int plane = 0; plane < geom.num_planes(); ++plane) {
      if (t < dropped.size() && std::find(dropped[t].begin(), dropped[t].end(), plane) != dropped[t].end()) {
        continue;
      }
      const auto xy = propagate_helix(tracks[t], geom.plane_z[static_cast<std::size_t>(plane)], geom);
      if (xy) raw.push_back({xy->first, xy->second, plane, static_cast<int>(t)});
    }
  }
  return assemble(event_id, raw, tracks, geom);
}

std::array<std::size_t, 3> split_sizes(std::size_t n_events, const std::array<double, 3>& f) {
  if (n_events < 3) throw ValidationError("dataset: need at least 3 events");
  for (double x : f) {
    if (!(x >= 0.0)) throw ValidationError("dataset: split fractions must be non-negative");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ValidationError("dataset: split fractions must sum to 1");
  const auto n = static_cast<double>(n_events);
  const auto train = static_cast<std::size_t>(std::llround(n * f[0]));
  const auto val = std::min(n_events - train, static_cast<std::size_t>(std::llround(n * f[1])));
  return {train, val, n_events - train - val};
}

std::vector<Event> generate_events(const SimConfig& cfg, const DetectorGeometry& geom, std::int64_t first_event_id,
                                   std::size_t count) {
  std::vector<Event> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_event(cfg, geom, first_event_id + static_cast<std::int64_t>(i)));
  }
  return out;
}

Split generate_dataset(const SimConfig& cfg, const DetectorGeometry& geom, std::size_t n_events,
                       const std::array<double, 3>& fractions, std::int64_t first_event_id) {
  const auto sizes = split_sizes(n_events, fractions);
  Split s;
  auto id = first_event_id;
  s.train = generate_events(cfg, geom, id, sizes[0]);
  id += static_cast<std::int64_t>(sizes[0]);
  s.val = generate_events(cfg, geom, id, sizes[1]);
  id += static_cast<std::int64_t>(sizes[1]);
  s.test = generate_events(cfg, geom, id, sizes[2]);
  return s;
}

std::string event_to_json(const Event& ev) {
  ordered_json j;
  j["event_id"] = ev.event_id;
  auto hits = ordered_json::array();
  for (const auto& h : ev.hits) {
    ordered_json jh;
    jh["hit_id"] = h.hit_id;
    jh["x"] = h.x;
    jh["y"] = h.y;
    jh["z"] = h.z;
    jh["plane"] = h.plane;
    jh["truth_id"] = h.truth_id;
    hits.push_back(std::move(jh));
  }
  j["hits"] = std::move(hits);
  auto tracks = ordered_json::array();
  for (const auto& t : ev.truth_tracks) {
    ordered_json jt;
    jt["truth_id"] = t.truth_id;
    jt["hit_ids"] = t.hit_ids;
    jt["helix"] = {{"kappa", t.helix.kappa}, {"phi0", t.helix.phi0}, {"tan_lambda", t.helix.tan_lambda},
                   {"x0", t.helix.x0},       {"y0", t.helix.y0},     {"z0", t.helix.z0}};
    tracks.push_back(std::move(jt));
  }
  j["tracks"] = std::move(tracks);
  return j.dump();
}

Event event_from_json(const std::string& line, const DetectorGeometry& geom) {
  Event ev;
  try {
    const auto j = nlohmann::json::parse(line);
    ev.event_id = j.at("event_id").get<std::int64_t>();
    for (const auto& jh : j.at("hits")) {
      const int plane = jh.at("plane").get<int>();
      if (plane < 0 || plane >= geom.num_planes()) throw ValidationError("event: plane index out of range");
      Hit h = make_hit(jh.at("x").get<double>(), jh.at("y").get<double>(), plane, geom, ev.event_id,
                       jh.at("truth_id").get<int>(), jh.at("hit_id").get<int>());
      h.z = jh.at("z").get<double>();
      ev.hits.push_back(h);
    }
    for (const auto& jt : j.at("tracks")) {
      TruthTrack t;
      t.truth_id = jt.at("truth_id").get<int>();
      t.hit_ids = jt.at("hit_ids").get<std::vector<int>>();
      const auto& jh = jt.at("helix");
      t.helix = {jh.at("kappa").get<double>(), jh.at("phi0").get<double>(), jh.at("tan_lambda").get<double>(),
                 jh.at("x0").get<double>(),    jh.at("y0").get<double>(),   jh.at("z0").get<double>()};
      ev.truth_tracks.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("event json: ") + e.what());
  }
  return ev;
}

void write_events(const std::string& path, const std::vector<Event>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& ev : events) out << event_to_json(ev) << '\n';
}

std::vector<Event> read_events(const std::string& path, const DetectorGeometry& geom) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<Event> events;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) events.push_back(event_from_json(line, geom));
  }
  return events;
}

}  // namespace fdc
