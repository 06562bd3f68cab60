#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "softmoe/rng.hpp"
#include "softmoe/tensor.hpp"

namespace softmoe {

struct LabeledSet {
  std::vector<Matrix> inputs;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return inputs.size(); }
};

struct RegressionBatch {
  std::vector<Matrix> inputs;
  std::vector<double> targets;
};

/// Row-major reshape of a length m*d vector into m tokens of dimension d.
Matrix tokenize_vector(std::span<const double> v, std::size_t m, std::size_t d);
std::vector<double> flatten(const Matrix& x);

/// Vectors x ~ N(0, source_std^2 I) in R^input_dim, split into m tokens of d
/// consecutive coordinates; target is the Euclidean norm of x.
struct NormTaskConfig {
  std::size_t input_dim = 10;
  std::size_t tokens = 2;  // m
  std::size_t dim = 5;     // d
  double source_std = std::sqrt(5.0);
  std::size_t batch_size = 1024;

  void validate() const;
};

RegressionBatch gen_norm_batch(const NormTaskConfig& cfg, RngStream& stream);

/// Gaussian clusters in token space: class c draws mean_c + N(0, within_std^2).
struct ClusterTaskConfig {
  std::size_t classes = 10;
  std::size_t tokens = 4;
  std::size_t dim = 8;
  std::vector<Matrix> means;  // one m x d mean per class
  double within_std = 1.0;
  std::size_t train_size = 4000;
  std::size_t test_size = 2000;

  void validate() const;
};

/// Means drawn i.i.d. N(0, mean_scale^2).
ClusterTaskConfig make_cluster_config(std::size_t classes, std::size_t tokens, std::size_t dim,
                                      double mean_scale, double within_std,
                                      std::size_t train_size, std::size_t test_size,
                                      RngStream& stream);

/// Labels cycle through the classes and are then shuffled, so class counts
/// differ by at most one.
std::pair<LabeledSet, LabeledSet> gen_cluster_dataset(const ClusterTaskConfig& cfg,
                                                      RngStream& stream);

/// Accuracy of assigning each sample to the class with the nearest mean.
double nearest_mean_accuracy(const ClusterTaskConfig& cfg, const LabeledSet& set);

}  // namespace softmoe
