#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "softmoe/kernels.hpp"
#include "softmoe/layer.hpp"
#include "softmoe/model.hpp"
#include "softmoe/rng.hpp"
#include "softmoe/subset_mask.hpp"

namespace softmoe {

/// Per-expert column sums of the combine matrix. Sums to m.
struct CombineMass {
  std::vector<double> values;
};

/// Throws if some row of c does not sum to 1 within 1e-9 or has a negative entry.
CombineMass combine_mass(const Matrix& c);

enum class SelectionOrder {
  /// The k largest masses, ties toward the smaller index.
  Largest,
  /// Compatibility mode: first k of an ascending stable sort (the smallest masses).
  AscendingPrefix,
};

SubsetMask select_top_k(const CombineMass& mass, std::size_t k,
                        SelectionOrder order = SelectionOrder::Largest);

/// Best-subset selection for one input: compute C, its column mass, keep the
/// k heaviest experts and run the masked forward with only those.
LayerActivations algorithm1_forward(const SoftMoELayer& layer, const Matrix& x, std::size_t k,
                                    SelectionOrder order = SelectionOrder::Largest);

/// Batched selection. Items are grouped by selected expert and each expert is
/// evaluated once on its stacked sub-batch. Per-item results are identical to
/// algorithm1_forward. When subbatch_sizes is given it receives, per expert,
/// the number of items routed to it.
std::vector<LayerActivations> batched_select(const SoftMoELayer& layer,
                                             std::span<const Matrix> xs, std::size_t k,
                                             SelectionOrder order = SelectionOrder::Largest,
                                             std::vector<std::size_t>* subbatch_sizes = nullptr);

/// Uniform draw over all size-k subsets of {0..n-1}.
SubsetMask random_subset(std::size_t n, std::size_t k, RngStream& stream);

/// All size-k subsets in lexicographic order.
std::vector<SubsetMask> all_subsets(std::size_t n, std::size_t k);

struct ExhaustiveResult {
  bool found = false;
  std::optional<SubsetMask> mask;
};

/// Lexicographically first size-k mask whose masked prediction equals label.
ExhaustiveResult exhaustive_best_subset(const Model& model, const Matrix& x, std::size_t label,
                                        std::size_t k);

/// Model-level forward where every layer runs algorithm1_forward with budget k.
ModelTrace algorithm1_model_forward(const Model& model, const Matrix& x, std::size_t k);

/// Batched counterpart for a stack: each layer runs batched_select on the
/// whole batch. Returns each item's final layer output.
std::vector<Matrix> batched_stack_forward(const Model& model, std::span<const Matrix> xs,
                                          std::size_t k);

/// Predicted class under the three inference policies used by the experiments.
std::size_t predict_full(const Model& model, const Matrix& x);
std::size_t predict_masked(const Model& model, const Matrix& x, const SubsetMask& mask);
std::size_t predict_algorithm1(const Model& model, const Matrix& x, std::size_t k);

}  // namespace softmoe
