#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "softmoe/datasets.hpp"
#include "softmoe/kernels.hpp"
#include "softmoe/model.hpp"
#include "softmoe/results.hpp"
#include "softmoe/subset_mask.hpp"
#include "softmoe/training.hpp"

namespace softmoe {

/// A subset budget, either absolute ("2") or a fraction of n ("n", "n/4", "3n/4").
struct KSpec {
  std::size_t numer = 1;
  std::size_t denom = 1;
  std::optional<std::size_t> absolute;

  static KSpec parse(std::string_view s);
  /// nullopt when the fraction of n is not an integer or the result is outside [1, n].
  std::optional<std::size_t> resolve(std::size_t n) const;
  std::string label() const;
};

enum class DatasetKind { Cluster, Norm, Mnist };

struct ExperimentConfig {
  std::string name;

  // Model.
  std::size_t layers = 1;
  std::vector<std::size_t> n_list{4, 8, 16, 32};
  std::vector<KSpec> k_list{KSpec{1, 4, std::nullopt}};
  std::size_t hidden_budget = 64;
  std::size_t tokens = 4;
  std::size_t dim = 8;

  // Data.
  DatasetKind dataset = DatasetKind::Cluster;
  std::size_t classes = 10;
  std::size_t train_size = 4000;
  std::size_t test_size = 2000;
  double cluster_std = 1.0;
  double mean_scale = 1.0;
  std::filesystem::path mnist_dir;
  bool normalize_pixels = true;

  // Training.
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t steps_per_epoch = 10;
  std::optional<double> stop_at_accuracy = 0.95;
  std::size_t eval_every = 5;
  double match_tolerance = 0.005;
  std::uint64_t model_seed = 0;
  /// Training seeds for the norm task; random-selection seeds for classification.
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

  // Norm task.
  std::vector<std::pair<std::size_t, std::size_t>> tokenizations{{2, 5}, {5, 2}};
  std::size_t input_dim = 10;

  // Latency.
  std::vector<std::size_t> batch_sizes{1};
  std::size_t warmup = 100;
  std::size_t timed = 100;
  std::size_t expert_hidden = 2048;

  std::filesystem::path output;
  ResultFormat format = ResultFormat::Csv;
  Exec exec = Exec::Parallel;

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
};

ExperimentConfig norm_experiment_defaults();
ExperimentConfig specialization_defaults();
ExperimentConfig accuracy_vs_n_defaults();
ExperimentConfig latency_defaults();
/// Defaults for a named experiment; throws std::invalid_argument for an unknown name.
ExperimentConfig defaults_for(std::string_view name);

struct ClassificationData {
  LabeledSet train;
  LabeledSet test;
  std::size_t tokens = 0;
  std::size_t dim = 0;
};

/// Cluster task from the config, or the MNIST IDX files under mnist_dir.
ClassificationData make_classification_data(const ExperimentConfig& cfg);

struct TrainedModel {
  std::size_t n = 0;
  Model model;
  TrainTrace trace;
  double test_accuracy = 0.0;
  /// Reached stop_at_accuracy and stayed within match_tolerance above it.
  bool matched = false;
};

/// One single-layer classifier per n, trained to the stop_at_accuracy target.
std::vector<TrainedModel> train_matched_models(const ExperimentConfig& cfg,
                                               const ClassificationData& data);

/// (alg - mean(random)) / std(random) with the n-1 sample std. nullopt when
/// fewer than two samples or the std is zero.
std::optional<double> stddev_statistic(double alg_accuracy, std::span<const double> random_accuracies);

double sample_mean(std::span<const double> v);
double sample_stddev(std::span<const double> v);

std::size_t unique_subset_count(std::span<const SubsetMask> masks);

double algorithm1_accuracy(const Model& model, const LabeledSet& test, std::size_t k, Exec exec);
/// Each test point gets its own uniformly random k-subset, drawn in order from stream.
double random_subset_accuracy(const Model& model, const LabeledSet& test, std::size_t k,
                              RngStream& stream, Exec exec);

struct SpecializationCell {
  std::size_t n = 0;
  std::size_t k = 0;
  double full_accuracy = 0.0;
  double best_accuracy = 0.0;
  double algorithm1_accuracy = 0.0;
  std::vector<double> random_accuracies;  // one per seed
  double random_mean = 0.0;
  double random_std = 0.0;
  std::optional<double> statistic;
  std::size_t unique_best_subsets = 0;
  /// Test points where Algorithm 1 is right but the exhaustive search found nothing.
  std::size_t dominance_violations = 0;
};

SpecializationCell specialization_cell(const ExperimentConfig& cfg, const Model& model,
                                       const LabeledSet& test, std::size_t k);

struct AccuracyCell {
  std::size_t n = 0;
  std::size_t k = 0;
  double base_accuracy = 0.0;
  double algorithm1_accuracy = 0.0;
  std::vector<double> random_accuracies;
  double random_mean = 0.0;
  double random_std = 0.0;
  std::optional<double> statistic;
};

AccuracyCell accuracy_cell(const ExperimentConfig& cfg, const Model& model, const LabeledSet& test,
                           std::size_t k);

std::vector<ResultRow> run_norm_experiment(const ExperimentConfig& cfg);
std::vector<ResultRow> run_specialization_table(const ExperimentConfig& cfg);
std::vector<ResultRow> run_accuracy_vs_n(const ExperimentConfig& cfg);
std::vector<ResultRow> run_latency_experiment(const ExperimentConfig& cfg);

std::vector<ResultRow> specialization_rows(const std::string& experiment,
                                           const SpecializationCell& cell);
std::vector<ResultRow> accuracy_rows(const std::string& experiment, const AccuracyCell& cell);
std::vector<ResultRow> training_rows(const std::string& experiment, const TrainedModel& tm);

/// Dispatch by name: norm, specialization, accuracy-vs-n, latency.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg);

}  // namespace softmoe
