#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "softmoe/layer.hpp"
#include "softmoe/rng.hpp"
#include "softmoe/subset_mask.hpp"
#include "softmoe/tensor.hpp"

namespace softmoe {

/// Non-trainable head: the prediction is the sum of all output entries.
struct SummationHead {};

/// logits = W^T flatten(y) + b, with y flattened row-major.
struct LinearHead {
  Matrix w;  // (m*d) x classes
  std::vector<double> b;

  std::size_t inputs() const noexcept { return w.rows(); }
  std::size_t classes() const noexcept { return w.cols(); }
};

using Head = std::variant<SummationHead, LinearHead>;

/// Length-1 vector for the summation head, class logits for the linear head.
std::vector<double> head_forward(const Head& head, const Matrix& y);

struct Model {
  std::size_t tokens = 1;  // m
  std::vector<SoftMoELayer> layers;
  Head head;

  std::size_t dim() const noexcept { return layers.front().dim(); }
  std::size_t experts() const noexcept { return layers.front().experts(); }
  bool is_classifier() const noexcept { return std::holds_alternative<LinearHead>(head); }
  std::size_t parameter_count() const;

  /// Trainable parameter blocks in a fixed order: per layer phi then each
  /// expert's w1, b1, w2, b2; then head w, b when the head is linear.
  std::vector<std::span<double>> parameter_spans();
  std::vector<std::span<const double>> parameter_spans() const;
};

struct ModelSpec {
  std::size_t layers = 1;
  std::size_t tokens = 1;  // m
  std::size_t dim = 1;     // d
  std::size_t experts = 1;
  std::size_t hidden_budget = 1;
  std::size_t classes = 0;  // 0 selects the summation head
};

/// Linear head weights ~ N(0, 1/(m*d)), zero bias.
Model build_model(const ModelSpec& spec, RngStream& init_stream);

struct ModelTrace {
  std::vector<LayerActivations> layers;
  std::vector<double> prediction;

  const Matrix& output() const { return layers.back().output; }
};

/// Full forward through every layer and the head.
ModelTrace model_forward(const Model& model, const Matrix& x);
/// Same, with `mask` applied in every layer.
ModelTrace model_forward_masked(const Model& model, const Matrix& x, const SubsetMask& mask);

/// Gradient buffers shaped like the model's trainable parameters.
struct ModelGradients {
  std::vector<LayerGradients> layers;
  std::optional<LinearHead> head;

  static ModelGradients zeros_like(const Model& model);
  std::vector<std::span<double>> spans();
  std::vector<std::span<const double>> spans() const;
  void scale(double factor);
  void add(const ModelGradients& other);
};

/// Accumulates parameter gradients and returns dL/dX given dL/d(prediction).
Matrix model_backward(const Model& model, const ModelTrace& trace,
                      std::span<const double> d_prediction, ModelGradients& grads);

struct LossValue {
  double loss;
  std::vector<double> grad;
};

/// (pred - target)^2 and its derivative.
LossValue mse_loss(double pred, double target);
/// -log softmax(logits)[label], stable; gradient softmax - onehot.
LossValue cross_entropy_loss(std::span<const double> logits, std::size_t label);

/// Index of the largest logit, ties to the smaller index.
std::size_t argmax(std::span<const double> v);

}  // namespace softmoe
