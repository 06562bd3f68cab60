#include "softmoe/datasets.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace softmoe {

Matrix tokenize_vector(std::span<const double> v, std::size_t m, std::size_t d) {
  if (m * d != v.size())
    throw ShapeError("tokenize_vector: " + std::to_string(m) + "x" + std::to_string(d) +
                     " tokens do not cover a vector of length " + std::to_string(v.size()));
  return Matrix(m, d, std::vector<double>(v.begin(), v.end()));
}

std::vector<double> flatten(const Matrix& x) { return {x.flat().begin(), x.flat().end()}; }

void NormTaskConfig::validate() const {
  if (tokens * dim != input_dim)
    throw std::invalid_argument("NormTaskConfig: tokens * dim must equal input_dim");
  if (batch_size == 0) throw std::invalid_argument("NormTaskConfig: batch_size must be >= 1");
  if (!(source_std >= 0.0)) throw std::invalid_argument("NormTaskConfig: source_std must be >= 0");
}

RegressionBatch gen_norm_batch(const NormTaskConfig& cfg, RngStream& stream) {
  cfg.validate();
  RegressionBatch batch;
  batch.inputs.reserve(cfg.batch_size);
  batch.targets.reserve(cfg.batch_size);
  std::vector<double> v(cfg.input_dim);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    for (double& x : v) x = cfg.source_std * stream.normal();
    Matrix x = tokenize_vector(v, cfg.tokens, cfg.dim);
    batch.targets.push_back(frobenius_norm(x));
    batch.inputs.push_back(std::move(x));
  }
  return batch;
}

void ClusterTaskConfig::validate() const {
  if (classes < 1 || tokens < 1 || dim < 1 || train_size < 1 || test_size < 1)
    throw std::invalid_argument("ClusterTaskConfig: sizes must be >= 1");
  if (means.size() != classes)
    throw std::invalid_argument("ClusterTaskConfig: need one mean per class");
  for (const auto& mu : means)
    if (mu.rows() != tokens || mu.cols() != dim)
      throw ShapeError("ClusterTaskConfig: mean shape must be tokens x dim");
  for (std::size_t a = 0; a < classes; ++a)
    for (std::size_t b = a + 1; b < classes; ++b)
      if (means[a] == means[b]) throw std::invalid_argument("ClusterTaskConfig: duplicate means");
  if (!(within_std >= 0.0)) throw std::invalid_argument("ClusterTaskConfig: within_std must be >= 0");
}

ClusterTaskConfig make_cluster_config(std::size_t classes, std::size_t tokens, std::size_t dim,
                                      double mean_scale, double within_std,
                                      std::size_t train_size, std::size_t test_size,
                                      RngStream& stream) {
  ClusterTaskConfig cfg;
  cfg.classes = classes;
  cfg.tokens = tokens;
  cfg.dim = dim;
  cfg.within_std = within_std;
  cfg.train_size = train_size;
  cfg.test_size = test_size;
  for (std::size_t c = 0; c < classes; ++c)
    cfg.means.push_back(sample_gaussian(stream, tokens, dim, 0.0, mean_scale));
  cfg.validate();
  return cfg;
}

namespace {

LabeledSet draw_split(const ClusterTaskConfig& cfg, std::size_t count, RngStream& stream) {
  LabeledSet set;
  set.classes = cfg.classes;
  set.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) set.labels[i] = i % cfg.classes;
  for (std::size_t i = count; i > 1; --i)
    std::swap(set.labels[i - 1], set.labels[stream.uniform_index(i)]);
  set.inputs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Matrix x = sample_gaussian(stream, cfg.tokens, cfg.dim, 0.0, cfg.within_std);
    const Matrix& mu = cfg.means[set.labels[i]];
    for (std::size_t p = 0; p < x.size(); ++p) x.flat()[p] += mu.flat()[p];
    set.inputs.push_back(std::move(x));
  }
  return set;
}

}  // namespace

std::pair<LabeledSet, LabeledSet> gen_cluster_dataset(const ClusterTaskConfig& cfg,
                                                      RngStream& stream) {
  cfg.validate();
  RngStream train_stream = stream.fork("train");
  RngStream test_stream = stream.fork("test");
  return {draw_split(cfg, cfg.train_size, train_stream), draw_split(cfg, cfg.test_size, test_stream)};
}

double nearest_mean_accuracy(const ClusterTaskConfig& cfg, const LabeledSet& set) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      double dist = 0.0;
      for (std::size_t p = 0; p < cfg.means[c].size(); ++p) {
        const double diff = set.inputs[i].flat()[p] - cfg.means[c].flat()[p];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    if (best == set.labels[i]) ++correct;
  }
  return set.size() ? static_cast<double>(correct) / static_cast<double>(set.size()) : 0.0;
}

}  // namespace softmoe
