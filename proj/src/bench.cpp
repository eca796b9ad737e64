#include "fdctrack/bench.hpp"

#include <chrono>
#include <cmath>

#include "fdctrack/config.hpp"

namespace fdc {

std::vector<std::size_t> default_batch_sizes() {
  std::vector<std::size_t> out;
  for (std::size_t b = 1; b <= 256; b *= 2) out.push_back(b);
  return out;
}

namespace {

using clock_type = std::chrono::steady_clock;

double micros(clock_type::duration d) { return std::chrono::duration<double, std::micro>(d).count(); }

// Sample mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace

BenchReport run_benchmark(std::span<const Event> events, std::span<const std::size_t> batch_sizes,
                          std::size_t trials, const EdgeClassifierParams& params, const CutConfig& cuts,
                          const DetectorGeometry& geom) {
  if (trials < 3) throw ValidationError("benchmark: need at least 3 trials");
  if (events.empty()) throw ValidationError("benchmark: no events");
  if (batch_sizes.empty()) throw ValidationError("benchmark: no batch sizes");
  params.validate();
  BenchReport report;
  report.trials = trials;
  report.num_events = events.size();
  const auto n = static_cast<double>(events.size());
  double sink = 0.0;

  for (std::size_t b : batch_sizes) {
    if (b == 0) throw ValidationError("benchmark: batch size must be positive");
    {
      const auto warm = events.subspan(0, std::min(b, events.size()));
      const auto g = build_batched_graph(warm, cuts, geom);
      for (double s : classify_edges(params, g)) sink += s;
    }
    std::vector<double> build, infer, total;
    for (std::size_t t = 0; t < trials; ++t) {
      clock_type::duration tb{}, ti{};
      for (std::size_t i = 0; i < events.size(); i += b) {
        const auto chunk = events.subspan(i, std::min(b, events.size() - i));
        const auto t0 = clock_type::now();
        const auto g = build_batched_graph(chunk, cuts, geom);
        const auto t1 = clock_type::now();
        const auto scores = classify_edges(params, g);
        const auto t2 = clock_type::now();
        if (!scores.empty()) sink += scores.front();
        tb += t1 - t0;
        ti += t2 - t1;
      }
      build.push_back(micros(tb) / n);
      infer.push_back(micros(ti) / n);
      total.push_back(micros(tb + ti) / n);
    }
    BenchRow row;
    row.batch_size = b;
    std::tie(row.build_us_mean, row.build_us_std) = mean_std(build);
    std::tie(row.infer_us_mean, row.infer_us_std) = mean_std(infer);
    std::tie(row.total_us_mean, row.total_us_std) = mean_std(total);
    report.rows.push_back(row);
  }
  // Keeps the scores observable so the timed work is not elided.
  if (std::isnan(sink)) throw ValidationError("benchmark: non-finite scores");
  return report;
}

std::string bench_csv(const BenchReport& report) {
  std::string out = "batch_size,build_us_mean,build_us_std,infer_us_mean,infer_us_std,total_us_mean,total_us_std\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.batch_size) + ',' + format_double(r.build_us_mean) + ',' + format_double(r.build_us_std) +
           ',' + format_double(r.infer_us_mean) + ',' + format_double(r.infer_us_std) + ',' +
           format_double(r.total_us_mean) + ',' + format_double(r.total_us_std) + '\n';
  }
  return out;
}

}  // namespace fdc
