#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "softmoe/datasets.hpp"
#include "softmoe/kernels.hpp"
#include "softmoe/model.hpp"
#include "softmoe/rng.hpp"

namespace softmoe {

/// Bias-corrected Adam. Moments are allocated lazily on the first step.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads);
void adam_step(AdamState& state, Model& model, const ModelGradients& grads);

/// Loss for sample `index` given the model's prediction for it.
using SampleLoss = std::function<LossValue(std::span<const double> prediction, std::size_t index)>;

struct BatchGradient {
  double mean_loss = 0.0;
  ModelGradients grads;  // gradient of the mean loss
};

/// Samples are processed in fixed blocks of kGradientBlock, each summed in
/// order into its own buffer; blocks are then summed in order. The result is
/// bitwise independent of Exec and thread count.
inline constexpr std::size_t kGradientBlock = 16;

BatchGradient batch_gradient(const Model& model, std::span<const Matrix> inputs,
                             const SampleLoss& loss, Exec exec);

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  /// Regression on generated data: batches per epoch.
  std::size_t steps_per_epoch = 1;
  /// Classification: stop at the first evaluation whose test accuracy reaches this.
  std::optional<double> stop_at_accuracy;
  /// Classification: steps between test evaluations when stop_at_accuracy is set (0 = once per epoch).
  std::size_t eval_every = 0;
  Exec exec = Exec::Parallel;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> test_accuracy;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
  std::size_t steps = 0;
  std::optional<double> final_test_accuracy;
};

/// Fraction of samples whose full-model prediction equals the label.
double evaluate_accuracy(const Model& model, const LabeledSet& set, Exec exec);

/// Cross-entropy training with shuffled mini-batches (one shuffle stream fork per epoch).
TrainTrace train_classifier(Model& model, const LabeledSet& train, const LabeledSet& test,
                            const TrainConfig& cfg, const RngStream& shuffle_stream);

/// MSE regression on the norm task; every batch is freshly generated.
TrainTrace train_norm_regressor(Model& model, const NormTaskConfig& task, const TrainConfig& cfg,
                                const RngStream& data_stream);

}  // namespace softmoe
