#include "softmoe/layer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace softmoe {

namespace {

void require_tokens(const SoftMoELayer& layer, const Matrix& x, const char* what) {
  if (x.cols() != layer.dim())
    throw ShapeError(std::string(what) + ": token dim " + std::to_string(x.cols()) +
                     " does not match layer dim " + std::to_string(layer.dim()));
}

}  // namespace

std::size_t SoftMoELayer::parameter_count() const noexcept {
  return phi.size() + softmoe::parameter_count(bank);
}

SoftMoELayer build_layer(std::size_t d, std::size_t n, std::size_t hidden_budget,
                         RngStream& init_stream) {
  SoftMoELayer layer{Matrix(d, n), {}};
  RngStream router = init_stream.fork("router");
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : layer.phi.flat()) v = std * router.normal();
  RngStream experts = init_stream.fork("experts");
  layer.bank = build_bank(d, n, hidden_budget, experts);
  return layer;
}

Matrix compute_logits(const SoftMoELayer& layer, const Matrix& x) {
  require_tokens(layer, x, "compute_logits");
  return matmul(x, layer.phi);
}

Matrix compute_dispatch(const SoftMoELayer& layer, const Matrix& x) {
  return softmax_over_rows_per_column(compute_logits(layer, x));
}

Matrix compute_combine(const SoftMoELayer& layer, const Matrix& x) {
  return softmax_over_columns_per_row(compute_logits(layer, x));
}

LayerActivations forward_from_logits(const SoftMoELayer& layer, const Matrix& x, Matrix logits,
                                     Matrix combine, const SubsetMask& mask) {
  require_tokens(layer, x, "forward");
  const std::size_t n = layer.experts();
  const std::size_t d = layer.dim();
  mask.validate(n);

  LayerActivations acts{x,
                        std::move(logits),
                        Matrix(1, 1),
                        std::move(combine),
                        Matrix(1, 1),
                        Matrix(n, d),
                        Matrix(1, 1),
                        std::vector<std::vector<double>>(n),
                        mask};
  acts.dispatch = softmax_over_rows_per_column(acts.logits);
  acts.expert_inputs = matmul_tn(acts.dispatch, x);
  for (std::size_t j : mask.indices()) {
    const auto& e = layer.bank.experts[j];
    acts.hidden_pre[j].resize(e.hidden());
    expert_forward(e, acts.expert_inputs.row(j), acts.expert_outputs.row(j), acts.hidden_pre[j]);
  }
  acts.output = matmul(acts.combine, acts.expert_outputs);
  return acts;
}

LayerActivations masked_forward(const SoftMoELayer& layer, const Matrix& x,
                                const SubsetMask& mask) {
  Matrix logits = compute_logits(layer, x);
  Matrix combine = softmax_over_columns_per_row(logits);
  return forward_from_logits(layer, x, std::move(logits), std::move(combine), mask);
}

LayerActivations forward(const SoftMoELayer& layer, const Matrix& x) {
  return masked_forward(layer, x, SubsetMask::full(layer.experts()));
}

LayerGradients LayerGradients::zeros_like(const SoftMoELayer& layer) {
  LayerGradients g{Matrix(layer.phi.rows(), layer.phi.cols()), {}};
  g.experts.reserve(layer.bank.size());
  for (const auto& e : layer.bank.experts) g.experts.push_back(e.zeros_like());
  return g;
}

Matrix backward(const SoftMoELayer& layer, const LayerActivations& acts, const Matrix& upstream,
                LayerGradients& grads) {
  const std::size_t m = acts.tokens();
  const std::size_t n = layer.experts();
  const std::size_t d = layer.dim();
  if (acts.input.cols() != d || acts.logits.cols() != n || acts.expert_outputs.rows() != n ||
      upstream.rows() != m || upstream.cols() != d || grads.phi.rows() != d ||
      grads.phi.cols() != n || grads.experts.size() != n)
    throw ShapeError("backward: activations or gradients do not match layer shape");

  // out = C Y
  const Matrix d_combine = matmul_nt(upstream, acts.expert_outputs);     // m x n
  const Matrix d_expert_out = matmul_tn(acts.combine, upstream);         // n x d

  // Y row j = f_j(Z row j), only for evaluated experts.
  Matrix d_expert_in(n, d);
  for (std::size_t j : acts.mask.indices()) {
    const auto& e = layer.bank.experts[j];
    if (acts.hidden_pre[j].size() != e.hidden())
      throw ShapeError("backward: stale activations for expert " + std::to_string(j));
    expert_backward(e, acts.expert_inputs.row(j), acts.hidden_pre[j], d_expert_out.row(j),
                    grads.experts[j], d_expert_in.row(j));
  }

  // Z = D^T X
  const Matrix d_dispatch = matmul_nt(acts.input, d_expert_in);  // m x n
  Matrix d_input = matmul(acts.dispatch, d_expert_in);           // m x d

  // Both softmaxes share the logits.
  Matrix d_logits(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += acts.combine(i, j) * d_combine(i, j);
    for (std::size_t j = 0; j < n; ++j)
      d_logits(i, j) = acts.combine(i, j) * (d_combine(i, j) - dot);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double dot = 0.0;
    for (std::size_t i = 0; i < m; ++i) dot += acts.dispatch(i, j) * d_dispatch(i, j);
    for (std::size_t i = 0; i < m; ++i)
      d_logits(i, j) += acts.dispatch(i, j) * (d_dispatch(i, j) - dot);
  }

  // L = X Phi
  const Matrix d_phi = matmul_tn(acts.input, d_logits);
  for (std::size_t i = 0; i < d_phi.size(); ++i) grads.phi.flat()[i] += d_phi.flat()[i];
  const Matrix via_logits = matmul_nt(d_logits, layer.phi);
  for (std::size_t i = 0; i < d_input.size(); ++i) d_input.flat()[i] += via_logits.flat()[i];
  return d_input;
}

}  // namespace softmoe
