#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "softmoe/rng.hpp"
#include "softmoe/tensor.hpp"

namespace softmoe {

/// Two-layer ReLU MLP R^d -> R^d:  y = W2^T relu(W1^T z + b1) + b2.
/// W1 is d x h and W2 is h x d, so a row vector z maps as z W1 and r W2.
struct MlpExpert {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;

  MlpExpert(std::size_t d, std::size_t h);

  std::size_t dim() const noexcept { return w1.rows(); }
  std::size_t hidden() const noexcept { return w1.cols(); }
  std::size_t parameter_count() const noexcept;

  /// Same shape, all parameters zero. Doubles as a gradient buffer.
  MlpExpert zeros_like() const { return MlpExpert(dim(), hidden()); }

  /// Parameter blocks in serialization order: w1, b1, w2, b2.
  std::vector<std::span<double>> spans();
  std::vector<std::span<const double>> spans() const;
};

/// Single-vector forward. out has length d, pre_activation receives the h
/// hidden pre-activations (kept for backward).
void expert_forward(const MlpExpert& e, std::span<const double> z, std::span<double> out,
                    std::span<double> pre_activation);
std::vector<double> expert_forward(const MlpExpert& e, std::span<const double> z);

/// Reverse-mode gradient of expert_forward. Parameter gradients are
/// accumulated into grads; dz (length d) is overwritten. pre_activation must
/// be the one recorded by the forward pass for z. ReLU'(0) is taken as 0.
void expert_backward(const MlpExpert& e, std::span<const double> z,
                     std::span<const double> pre_activation, std::span<const double> upstream,
                     MlpExpert& grads, std::span<double> dz);

/// n identically shaped experts sharing a total hidden-unit budget H; each has
/// width max(1, floor(H / n)).
struct ExpertBank {
  std::vector<MlpExpert> experts;
  std::size_t hidden_budget = 0;

  std::size_t size() const noexcept { return experts.size(); }
  std::size_t dim() const noexcept { return experts.front().dim(); }
  std::size_t hidden_width() const noexcept { return experts.front().hidden(); }
};

std::size_t hidden_width_for(std::size_t n, std::size_t hidden_budget);

/// He-initialized bank (weights N(0, 2/fan_in), zero biases).
ExpertBank build_bank(std::size_t d, std::size_t n, std::size_t hidden_budget,
                      RngStream& init_stream);

std::size_t parameter_count(const ExpertBank& bank);
/// Weights only (W1 and W2), i.e. 2 d h per expert.
std::size_t weight_parameter_count(const ExpertBank& bank);

}  // namespace softmoe
