#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "softmoe/model.hpp"
#include "softmoe/results.hpp"

namespace softmoe {

struct LatencyConfig {
  std::size_t layers = 6;
  std::size_t experts = 8;
  std::size_t dim = 256;
  std::size_t tokens = 16;
  std::size_t expert_hidden = 2048;
  std::vector<std::size_t> ks{8, 6, 4, 2};
  std::vector<std::size_t> batch_sizes{1};
  std::size_t warmup = 100;
  std::size_t timed = 100;
  std::uint64_t seed = 0;
};

struct LatencyCell {
  /// "plain" (ordinary forward, no selection) or "algorithm1".
  std::string policy;
  std::size_t k = 0;
  std::size_t batch = 0;
  std::vector<double> samples_ms;  // one per timed call
  double mean_ms = 0.0;
  double std_ms = 0.0;
  /// Sum of outputs over the timed calls; keeps the work observable.
  double checksum = 0.0;
};

struct LatencyReport {
  std::size_t experts = 0;
  std::vector<LatencyCell> cells;  // plain first, then ks in order, per batch size
};

/// Stack of `layers` Soft MoE layers, every expert with expert_hidden units, summation head.
Model build_latency_model(const LatencyConfig& cfg);

/// Warmup calls, then timed calls measured one by one with a steady clock.
LatencyReport run_latency_bench(const Model& model, const LatencyConfig& cfg);

std::vector<ResultRow> latency_rows(const std::string& experiment, const LatencyReport& report);

}  // namespace softmoe
