#include "softmoe/latency.hpp"

#include <chrono>
#include <stdexcept>

#include "softmoe/experiments.hpp"
#include "softmoe/selection.hpp"

namespace softmoe {

Model build_latency_model(const LatencyConfig& cfg) {
  RngStream init(cfg.seed, "latency-model");
  return build_model({cfg.layers, cfg.tokens, cfg.dim, cfg.experts, cfg.experts * cfg.expert_hidden, 0},
                     init);
}

namespace {

double output_sum(const Matrix& y) { return sum(y); }

// One call of the policy on the batch; returns a value derived from every output.
double run_once(const Model& model, const std::vector<Matrix>& batch, bool plain, std::size_t k) {
  double acc = 0.0;
  if (plain) {
    for (const auto& x : batch) acc += output_sum(model_forward(model, x).output());
  } else if (batch.size() == 1) {
    acc += output_sum(algorithm1_model_forward(model, batch.front(), k).output());
  } else {
    for (const auto& y : batched_stack_forward(model, batch, k)) acc += output_sum(y);
  }
  return acc;
}

LatencyCell time_cell(const Model& model, const std::vector<Matrix>& batch, bool plain, std::size_t k,
                      const LatencyConfig& cfg) {
  LatencyCell cell;
  cell.policy = plain ? "plain" : "algorithm1";
  cell.k = k;
  cell.batch = batch.size();
  volatile double sink = 0.0;
  for (std::size_t i = 0; i < cfg.warmup; ++i) sink = sink + run_once(model, batch, plain, k);
  cell.samples_ms.reserve(cfg.timed);
  for (std::size_t i = 0; i < cfg.timed; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const double v = run_once(model, batch, plain, k);
    const auto t1 = std::chrono::steady_clock::now();
    cell.checksum += v;
    cell.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  sink = sink + cell.checksum;
  cell.mean_ms = sample_mean(cell.samples_ms);
  cell.std_ms = sample_stddev(cell.samples_ms);
  return cell;
}

}  // namespace

LatencyReport run_latency_bench(const Model& model, const LatencyConfig& cfg) {
  if (cfg.timed == 0) throw std::invalid_argument("run_latency_bench: timed must be >= 1");
  for (std::size_t k : cfg.ks)
    if (k == 0 || k > model.experts())
      throw std::invalid_argument("run_latency_bench: k=" + std::to_string(k) + " out of range");
  LatencyReport report;
  report.experts = model.experts();
  RngStream inputs(cfg.seed, "latency-inputs");
  for (std::size_t b : cfg.batch_sizes) {
    std::vector<Matrix> batch;
    RngStream s = inputs.fork("batch" + std::to_string(b));
    for (std::size_t i = 0; i < b; ++i) batch.push_back(sample_gaussian(s, model.tokens, model.dim(), 0.0, 1.0));
    report.cells.push_back(time_cell(model, batch, true, model.experts(), cfg));
    for (std::size_t k : cfg.ks) report.cells.push_back(time_cell(model, batch, false, k, cfg));
  }
  return report;
}

std::vector<ResultRow> latency_rows(const std::string& experiment, const LatencyReport& report) {
  std::vector<ResultRow> rows;
  const auto n = static_cast<std::int64_t>(report.experts);
  for (const auto& c : report.cells) {
    const auto k = static_cast<std::int64_t>(c.k);
    const std::string prefix = c.policy + "_b" + std::to_string(c.batch) + "_";
    rows.push_back({experiment, n, k, -1, prefix + "latency_ms_mean", c.mean_ms});
    rows.push_back({experiment, n, k, -1, prefix + "latency_ms_std", c.std_ms});
  }
  return rows;
}

}  // namespace softmoe
