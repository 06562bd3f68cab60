#pragma once

#include <cstddef>
#include <vector>

#include "softmoe/experts.hpp"
#include "softmoe/rng.hpp"
#include "softmoe/subset_mask.hpp"
#include "softmoe/tensor.hpp"

namespace softmoe {

/// Soft MoE layer with a single slot per expert.
///
/// For tokens X (m x d) and router Phi (d x n), with logits L = X Phi:
///   D = softmax of L down each column    (dispatch, columns sum to 1)
///   C = softmax of L across each row     (combine, rows sum to 1)
///   Z = D^T X                            (one mixed token per expert)
///   Y~ row j = f_j(Z row j)
///   out = C Y~
struct SoftMoELayer {
  Matrix phi;  // d x n
  ExpertBank bank;

  std::size_t dim() const noexcept { return phi.rows(); }
  std::size_t experts() const noexcept { return phi.cols(); }
  std::size_t parameter_count() const noexcept;
};

/// Router N(0, 1/d), He-initialized experts.
SoftMoELayer build_layer(std::size_t d, std::size_t n, std::size_t hidden_budget,
                         RngStream& init_stream);

/// Everything forward computes; backward consumes these.
struct LayerActivations {
  Matrix input;           // X, m x d
  Matrix logits;          // X Phi, m x n
  Matrix dispatch;        // D, m x n
  Matrix combine;         // C, m x n
  Matrix expert_inputs;   // D^T X, n x d
  Matrix expert_outputs;  // Y~ (or Y^ under a mask), n x d
  Matrix output;          // C Y, m x d
  std::vector<std::vector<double>> hidden_pre;  // per expert; empty when skipped
  SubsetMask mask;                              // experts that were evaluated

  std::size_t tokens() const noexcept { return input.rows(); }
};

Matrix compute_logits(const SoftMoELayer& layer, const Matrix& x);
Matrix compute_dispatch(const SoftMoELayer& layer, const Matrix& x);
Matrix compute_combine(const SoftMoELayer& layer, const Matrix& x);

LayerActivations forward(const SoftMoELayer& layer, const Matrix& x);

/// Forward pass where only experts in mask are evaluated; the other rows of
/// the expert output matrix are exact zeros. C is not renormalized.
LayerActivations masked_forward(const SoftMoELayer& layer, const Matrix& x,
                                const SubsetMask& mask);

/// masked_forward with logits and combine weights already in hand. Used by
/// selection so C is computed once per input.
LayerActivations forward_from_logits(const SoftMoELayer& layer, const Matrix& x, Matrix logits,
                                     Matrix combine, const SubsetMask& mask);

struct LayerGradients {
  Matrix phi;
  std::vector<MlpExpert> experts;

  static LayerGradients zeros_like(const SoftMoELayer& layer);
};

/// Accumulates dL/dPhi and dL/d(expert params) into grads and returns dL/dX.
/// Unevaluated experts contribute nothing.
Matrix backward(const SoftMoELayer& layer, const LayerActivations& acts, const Matrix& upstream,
                LayerGradients& grads);

}  // namespace softmoe
