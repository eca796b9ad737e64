#pragma once

#include <span>
#include <string>
#include <vector>

#include "fdctrack/edgegnn.hpp"
#include "fdctrack/graphbuild.hpp"
#include "fdctrack/simgen.hpp"

namespace fdc {

struct BenchRow {
  std::size_t batch_size = 0;
  double build_us_mean = 0.0, build_us_std = 0.0;  // per event
  double infer_us_mean = 0.0, infer_us_std = 0.0;  // per event
  double total_us_mean = 0.0, total_us_std = 0.0;  // per event
};

struct BenchReport {
  std::size_t trials = 0;
  std::size_t num_events = 0;
  std::vector<BenchRow> rows;
};

std::vector<std::size_t> default_batch_sizes();  // 1, 2, 4, ..., 256

/// Times graph building and inference per event for each batch size. Each
/// batch size gets one untimed warm-up pass; `trials` must be >= 3.
BenchReport run_benchmark(std::span<const Event> events, std::span<const std::size_t> batch_sizes,
                          std::size_t trials, const EdgeClassifierParams& params, const CutConfig& cuts,
                          const DetectorGeometry& geom);

// CSV: batch_size,build_us_mean,build_us_std,infer_us_mean,infer_us_std,total_us_mean,total_us_std
std::string bench_csv(const BenchReport& report);

}  // namespace fdc
