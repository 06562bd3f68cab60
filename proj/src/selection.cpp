#include "softmoe/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace softmoe {

namespace {

void require_k(std::size_t k, std::size_t n, const char* what) {
  if (k < 1 || k > n)
    throw std::out_of_range(std::string(what) + ": k=" + std::to_string(k) +
                            " must be in [1, " + std::to_string(n) + "]");
}

}  // namespace

CombineMass combine_mass(const Matrix& c) {
  CombineMass mass{std::vector<double>(c.cols(), 0.0)};
  for (std::size_t i = 0; i < c.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < c.cols(); ++j) {
      const double v = c(i, j);
      if (!(v >= 0.0)) throw std::invalid_argument("combine_mass: negative or non-finite weight");
      row += v;
      mass.values[j] += v;
    }
    if (std::abs(row - 1.0) > 1e-9)
      throw std::invalid_argument("combine_mass: row " + std::to_string(i) +
                                  " does not sum to one");
  }
  return mass;
}

SubsetMask select_top_k(const CombineMass& mass, std::size_t k, SelectionOrder order) {
  const std::size_t n = mass.values.size();
  require_k(k, n, "select_top_k");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto& v = mass.values;
  if (order == SelectionOrder::Largest) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  }
  idx.resize(k);
  return SubsetMask(std::move(idx));
}

LayerActivations algorithm1_forward(const SoftMoELayer& layer, const Matrix& x, std::size_t k,
                                    SelectionOrder order) {
  require_k(k, layer.experts(), "algorithm1_forward");
  Matrix logits = compute_logits(layer, x);
  Matrix combine = softmax_over_columns_per_row(logits);
  const SubsetMask mask = select_top_k(combine_mass(combine), k, order);
  return forward_from_logits(layer, x, std::move(logits), std::move(combine), mask);
}

std::vector<LayerActivations> batched_select(const SoftMoELayer& layer,
                                             std::span<const Matrix> xs, std::size_t k,
                                             SelectionOrder order,
                                             std::vector<std::size_t>* subbatch_sizes) {
  const std::size_t n = layer.experts();
  const std::size_t d = layer.dim();
  require_k(k, n, "batched_select");
  std::vector<LayerActivations> out;
  if (subbatch_sizes) subbatch_sizes->assign(n, 0);
  if (xs.empty()) return out;
  const std::size_t m = xs.front().rows();
  for (const auto& x : xs)
    if (x.rows() != m || x.cols() != d)
      throw ShapeError("batched_select: ragged batch (" + x.shape_str() + " vs " +
                       std::to_string(m) + "x" + std::to_string(d) + ")");

  // Routing for every item.
  out.reserve(xs.size());
  for (const auto& x : xs) {
    Matrix logits = compute_logits(layer, x);
    Matrix combine = softmax_over_columns_per_row(logits);
    SubsetMask mask = select_top_k(combine_mass(combine), k, order);
    Matrix dispatch = softmax_over_rows_per_column(logits);
    Matrix expert_inputs = matmul_tn(dispatch, x);
    out.push_back(LayerActivations{x, std::move(logits), std::move(dispatch), std::move(combine),
                                   std::move(expert_inputs), Matrix(n, d), Matrix(1, 1),
                                   std::vector<std::vector<double>>(n), std::move(mask)});
  }

  // Each expert processes the sub-batch of items that selected it.
  std::vector<std::size_t> members;
  for (std::size_t j = 0; j < n; ++j) {
    members.clear();
    for (std::size_t b = 0; b < out.size(); ++b)
      if (out[b].mask.contains(j)) members.push_back(b);
    if (subbatch_sizes) (*subbatch_sizes)[j] = members.size();
    if (members.empty()) continue;
    const auto& e = layer.bank.experts[j];
    Matrix sub_in(members.size(), d);
    for (std::size_t r = 0; r < members.size(); ++r) {
      const auto src = out[members[r]].expert_inputs.row(j);
      std::copy(src.begin(), src.end(), sub_in.row(r).begin());
    }
    Matrix sub_out(members.size(), d);
    for (std::size_t r = 0; r < members.size(); ++r) {
      auto& pre = out[members[r]].hidden_pre[j];
      pre.resize(e.hidden());
      expert_forward(e, sub_in.row(r), sub_out.row(r), pre);
    }
    for (std::size_t r = 0; r < members.size(); ++r) {
      const auto src = sub_out.row(r);
      std::copy(src.begin(), src.end(), out[members[r]].expert_outputs.row(j).begin());
    }
  }

  for (auto& acts : out) acts.output = matmul(acts.combine, acts.expert_outputs);
  return out;
}

SubsetMask random_subset(std::size_t n, std::size_t k, RngStream& stream) {
  require_k(k, n, "random_subset");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + stream.uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return SubsetMask(std::move(pool));
}

std::vector<SubsetMask> all_subsets(std::size_t n, std::size_t k) {
  require_k(k, n, "all_subsets");
  std::vector<SubsetMask> out;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    out.emplace_back(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t r = i; r < k; ++r) idx[r] = idx[r - 1] + 1;
  }
  return out;
}

namespace {

// Calls visit(mask) for each size-k subset in lexicographic order until it returns true.
template <class Visit>
void for_each_subset(std::size_t n, std::size_t k, Visit&& visit) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    if (visit(idx)) return;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t r = i; r < k; ++r) idx[r] = idx[r - 1] + 1;
  }
}

}  // namespace

ExhaustiveResult exhaustive_best_subset(const Model& model, const Matrix& x, std::size_t label,
                                        std::size_t k) {
  const std::size_t n = model.experts();
  require_k(k, n, "exhaustive_best_subset");
  ExhaustiveResult result;

  if (model.layers.size() == 1) {
    // A mask only zeroes rows of Y~, so evaluate every expert once and
    // rebuild C Y^ per mask. matmul with the same zero rows gives the same
    // bits as masked_forward.
    const LayerActivations full = forward(model.layers.front(), x);
    Matrix masked(n, model.dim());
    for_each_subset(n, k, [&](const std::vector<std::size_t>& idx) {
      masked.fill(0.0);
      for (std::size_t j : idx) {
        const auto src = full.expert_outputs.row(j);
        std::copy(src.begin(), src.end(), masked.row(j).begin());
      }
      const auto logits = head_forward(model.head, matmul(full.combine, masked));
      if (argmax(logits) != label) return false;
      result = {true, SubsetMask(idx)};
      return true;
    });
    return result;
  }

  for_each_subset(n, k, [&](const std::vector<std::size_t>& idx) {
    SubsetMask mask(idx);
    if (predict_masked(model, x, mask) != label) return false;
    result = {true, std::move(mask)};
    return true;
  });
  return result;
}

ModelTrace algorithm1_model_forward(const Model& model, const Matrix& x, std::size_t k) {
  if (x.rows() != model.tokens)
    throw ShapeError("algorithm1_model_forward: expected " + std::to_string(model.tokens) +
                     " tokens, got " + x.shape_str());
  ModelTrace trace;
  const Matrix* current = &x;
  for (const auto& layer : model.layers) {
    trace.layers.push_back(algorithm1_forward(layer, *current, k));
    current = &trace.layers.back().output;
  }
  trace.prediction = head_forward(model.head, *current);
  return trace;
}

std::vector<Matrix> batched_stack_forward(const Model& model, std::span<const Matrix> xs,
                                          std::size_t k) {
  std::vector<Matrix> current(xs.begin(), xs.end());
  for (const auto& layer : model.layers) {
    auto acts = batched_select(layer, current, k);
    for (std::size_t b = 0; b < acts.size(); ++b) current[b] = std::move(acts[b].output);
  }
  return current;
}

std::size_t predict_full(const Model& model, const Matrix& x) {
  return argmax(model_forward(model, x).prediction);
}

std::size_t predict_masked(const Model& model, const Matrix& x, const SubsetMask& mask) {
  return argmax(model_forward_masked(model, x, mask).prediction);
}

std::size_t predict_algorithm1(const Model& model, const Matrix& x, std::size_t k) {
  return argmax(algorithm1_model_forward(model, x, k).prediction);
}

}  // namespace softmoe
