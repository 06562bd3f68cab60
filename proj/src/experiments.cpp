#include "softmoe/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "softmoe/latency.hpp"
#include "softmoe/mnist.hpp"
#include "softmoe/selection.hpp"

namespace softmoe {

namespace {

std::size_t parse_count(std::string_view s, std::string_view whole) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || v == 0)
    throw std::invalid_argument("bad k spec '" + std::string(whole) + "'");
  return v;
}

std::int64_t as_i64(std::size_t v) { return static_cast<std::int64_t>(v); }

}  // namespace

KSpec KSpec::parse(std::string_view s) {
  const auto pos = s.find('n');
  if (pos == std::string_view::npos) return KSpec{1, 1, parse_count(s, s)};
  KSpec spec;
  if (pos > 0) spec.numer = parse_count(s.substr(0, pos), s);
  const auto rest = s.substr(pos + 1);
  if (!rest.empty()) {
    if (rest.front() != '/') throw std::invalid_argument("bad k spec '" + std::string(s) + "'");
    spec.denom = parse_count(rest.substr(1), s);
  }
  return spec;
}

std::optional<std::size_t> KSpec::resolve(std::size_t n) const {
  std::size_t k = 0;
  if (absolute) {
    k = *absolute;
  } else {
    if ((numer * n) % denom != 0) return std::nullopt;
    k = numer * n / denom;
  }
  if (k < 1 || k > n) return std::nullopt;
  return k;
}

std::string KSpec::label() const {
  if (absolute) return std::to_string(*absolute);
  std::string s = numer == 1 ? "n" : std::to_string(numer) + "n";
  if (denom != 1) s += "/" + std::to_string(denom);
  return s;
}

void ExperimentConfig::validate() const {
  if (n_list.empty()) throw std::invalid_argument("config: n list is empty");
  if (seeds.empty()) throw std::invalid_argument("config: seeds list is empty");
  if (layers == 0 || tokens == 0 || dim == 0)
    throw std::invalid_argument("config: layers, tokens and dim must be >= 1");
  for (std::size_t n : n_list)
    if (n == 0) throw std::invalid_argument("config: n must be >= 1");
  if (name != "norm") {
    if (k_list.empty()) throw std::invalid_argument("config: k list is empty");
    for (std::size_t n : n_list)
      for (const auto& k : k_list)
        if (!k.resolve(n))
          throw std::invalid_argument("config: k=" + k.label() + " is not a valid budget for n=" +
                                      std::to_string(n));
    if (hidden_budget == 0) throw std::invalid_argument("config: hidden_budget must be >= 1");
  }
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
  if (stop_at_accuracy && (*stop_at_accuracy <= 0.0 || *stop_at_accuracy > 1.0))
    throw std::invalid_argument("config: stop_at_accuracy must be in (0, 1]");
  if (name == "norm") {
    if (tokenizations.empty()) throw std::invalid_argument("config: no tokenizations");
    for (const auto& [m, d] : tokenizations)
      if (m * d != input_dim)
        throw std::invalid_argument("config: tokenization " + std::to_string(m) + "x" +
                                    std::to_string(d) + " does not cover input_dim");
    if (steps_per_epoch == 0) throw std::invalid_argument("config: steps_per_epoch must be >= 1");
  }
  if (name == "latency") {
    if (warmup == 0 || timed == 0 || batch_sizes.empty() || expert_hidden == 0)
      throw std::invalid_argument("config: latency counts must be positive");
    for (std::size_t b : batch_sizes)
      if (b == 0) throw std::invalid_argument("config: batch sizes must be positive");
  }
  if (dataset == DatasetKind::Mnist && mnist_dir.empty())
    throw std::invalid_argument("config: dataset=mnist needs mnist_dir");
}

ExperimentConfig norm_experiment_defaults() {
  ExperimentConfig cfg;
  cfg.name = "norm";
  cfg.dataset = DatasetKind::Norm;
  cfg.n_list = {1, 2, 5, 10};
  cfg.hidden_budget = 0;  // 10 * token dim
  cfg.epochs = 200;
  cfg.batch_size = 1024;
  cfg.steps_per_epoch = 10;
  cfg.stop_at_accuracy.reset();
  cfg.seeds = {0, 1, 2};
  return cfg;
}

ExperimentConfig specialization_defaults() {
  ExperimentConfig cfg;
  cfg.name = "specialization";
  cfg.n_list = {4, 8, 16};
  cfg.k_list = {KSpec{1, 4, std::nullopt}};
  return cfg;
}

ExperimentConfig accuracy_vs_n_defaults() {
  ExperimentConfig cfg;
  cfg.name = "accuracy-vs-n";
  cfg.n_list = {4, 8, 16, 32};
  cfg.k_list = {KSpec{1, 1, std::nullopt}, KSpec{1, 2, std::nullopt}, KSpec{1, 4, std::nullopt}};
  return cfg;
}

ExperimentConfig latency_defaults() {
  ExperimentConfig cfg;
  cfg.name = "latency";
  cfg.layers = 6;
  cfg.n_list = {8};
  cfg.k_list = {KSpec{1, 1, std::nullopt}, KSpec{3, 4, std::nullopt}, KSpec{1, 2, std::nullopt},
                KSpec{1, 4, std::nullopt}};
  cfg.tokens = 16;
  cfg.dim = 256;
  cfg.expert_hidden = 2048;
  cfg.hidden_budget = 8 * 2048;
  cfg.batch_sizes = {1};
  cfg.seeds = {0};
  cfg.stop_at_accuracy.reset();
  return cfg;
}

ExperimentConfig defaults_for(std::string_view name) {
  if (name == "norm") return norm_experiment_defaults();
  if (name == "specialization") return specialization_defaults();
  if (name == "accuracy-vs-n") return accuracy_vs_n_defaults();
  if (name == "latency") return latency_defaults();
  throw std::invalid_argument("unknown experiment '" + std::string(name) +
                              "' (norm|specialization|accuracy-vs-n|latency)");
}

ClassificationData make_classification_data(const ExperimentConfig& cfg) {
  ClassificationData data;
  if (cfg.dataset == DatasetKind::Mnist) {
    const auto& dir = cfg.mnist_dir;
    const MnistStore train = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    const MnistStore test = load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    data.train = mnist_to_labeled_set(train, cfg.normalize_pixels);
    data.test = mnist_to_labeled_set(test, cfg.normalize_pixels);
    data.tokens = 4;
    data.dim = 196;
    return data;
  }
  if (cfg.dataset != DatasetKind::Cluster)
    throw std::invalid_argument("make_classification_data: dataset must be cluster or mnist");
  RngStream stream(cfg.model_seed, "cluster-data");
  RngStream means = stream.fork("means");
  const ClusterTaskConfig task = make_cluster_config(cfg.classes, cfg.tokens, cfg.dim, cfg.mean_scale,
                                                     cfg.cluster_std, cfg.train_size, cfg.test_size,
                                                     means);
  RngStream samples = stream.fork("samples");
  auto [train, test] = gen_cluster_dataset(task, samples);
  data.train = std::move(train);
  data.test = std::move(test);
  data.tokens = cfg.tokens;
  data.dim = cfg.dim;
  return data;
}

std::vector<TrainedModel> train_matched_models(const ExperimentConfig& cfg,
                                               const ClassificationData& data) {
  std::vector<TrainedModel> out;
  for (std::size_t n : cfg.n_list) {
    const std::string tag = "n" + std::to_string(n);
    RngStream init = RngStream(cfg.model_seed, "model-init").fork(tag);
    TrainedModel tm;
    tm.n = n;
    tm.model = build_model({1, data.tokens, data.dim, n, cfg.hidden_budget, data.train.classes}, init);
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.stop_at_accuracy = cfg.stop_at_accuracy;
    tc.eval_every = cfg.eval_every;
    tc.exec = cfg.exec;
    tm.trace = train_classifier(tm.model, data.train, data.test, tc,
                                RngStream(cfg.model_seed, "shuffle").fork(tag));
    tm.test_accuracy = tm.trace.final_test_accuracy ? *tm.trace.final_test_accuracy
                                                    : evaluate_accuracy(tm.model, data.test, cfg.exec);
    tm.matched = !cfg.stop_at_accuracy ||
                 (tm.test_accuracy >= *cfg.stop_at_accuracy &&
                  tm.test_accuracy <= *cfg.stop_at_accuracy + cfg.match_tolerance);
    out.push_back(std::move(tm));
  }
  return out;
}

double sample_mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = sample_mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::optional<double> stddev_statistic(double alg_accuracy, std::span<const double> random_accuracies) {
  if (random_accuracies.size() < 2) return std::nullopt;
  const double sd = sample_stddev(random_accuracies);
  if (!(sd > 0.0)) return std::nullopt;
  return (alg_accuracy - sample_mean(random_accuracies)) / sd;
}

std::size_t unique_subset_count(std::span<const SubsetMask> masks) {
  return std::set<SubsetMask>(masks.begin(), masks.end()).size();
}

double algorithm1_accuracy(const Model& model, const LabeledSet& test, std::size_t k, Exec exec) {
  std::vector<unsigned char> hit(test.size(), 0);
  parallel_for(test.size(), exec, [&](std::size_t i) {
    hit[i] = predict_algorithm1(model, test.inputs[i], k) == test.labels[i];
  });
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), std::size_t{0})) /
         static_cast<double>(test.size());
}

double random_subset_accuracy(const Model& model, const LabeledSet& test, std::size_t k,
                              RngStream& stream, Exec exec) {
  std::vector<SubsetMask> masks;
  masks.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) masks.push_back(random_subset(model.experts(), k, stream));
  std::vector<unsigned char> hit(test.size(), 0);
  parallel_for(test.size(), exec, [&](std::size_t i) {
    hit[i] = predict_masked(model, test.inputs[i], masks[i]) == test.labels[i];
  });
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), std::size_t{0})) /
         static_cast<double>(test.size());
}

namespace {

std::vector<double> random_accuracies(const ExperimentConfig& cfg, const Model& model,
                                      const LabeledSet& test, std::size_t k) {
  std::vector<double> out;
  const std::string tag = "n" + std::to_string(model.experts()) + "/k" + std::to_string(k);
  for (std::uint64_t seed : cfg.seeds) {
    RngStream s = RngStream(seed, "random-subset").fork(tag);
    out.push_back(random_subset_accuracy(model, test, k, s, cfg.exec));
  }
  return out;
}

void warn_undefined_statistic(std::size_t n, std::size_t k) {
  std::cerr << "warning: stddev statistic undefined for n=" << n << " k=" << k
            << " (random accuracies have zero spread); row omitted\n";
}

}  // namespace

SpecializationCell specialization_cell(const ExperimentConfig& cfg, const Model& model,
                                       const LabeledSet& test, std::size_t k) {
  SpecializationCell cell;
  cell.n = model.experts();
  cell.k = k;
  cell.full_accuracy = evaluate_accuracy(model, test, cfg.exec);

  std::vector<ExhaustiveResult> best(test.size());
  std::vector<unsigned char> alg(test.size(), 0);
  parallel_for(test.size(), cfg.exec, [&](std::size_t i) {
    best[i] = exhaustive_best_subset(model, test.inputs[i], test.labels[i], k);
    alg[i] = predict_algorithm1(model, test.inputs[i], k) == test.labels[i];
  });

  std::vector<SubsetMask> found;
  std::size_t best_hits = 0;
  std::size_t alg_hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (best[i].found) {
      ++best_hits;
      found.push_back(*best[i].mask);
    }
    if (alg[i]) {
      ++alg_hits;
      if (!best[i].found) ++cell.dominance_violations;
    }
  }
  const double total = static_cast<double>(test.size());
  cell.best_accuracy = static_cast<double>(best_hits) / total;
  cell.algorithm1_accuracy = static_cast<double>(alg_hits) / total;
  cell.unique_best_subsets = unique_subset_count(found);

  cell.random_accuracies = random_accuracies(cfg, model, test, k);
  cell.random_mean = sample_mean(cell.random_accuracies);
  cell.random_std = sample_stddev(cell.random_accuracies);
  cell.statistic = stddev_statistic(cell.algorithm1_accuracy, cell.random_accuracies);
  if (!cell.statistic) warn_undefined_statistic(cell.n, k);
  return cell;
}

AccuracyCell accuracy_cell(const ExperimentConfig& cfg, const Model& model, const LabeledSet& test,
                           std::size_t k) {
  AccuracyCell cell;
  cell.n = model.experts();
  cell.k = k;
  cell.base_accuracy = evaluate_accuracy(model, test, cfg.exec);
  cell.algorithm1_accuracy = algorithm1_accuracy(model, test, k, cfg.exec);
  cell.random_accuracies = random_accuracies(cfg, model, test, k);
  cell.random_mean = sample_mean(cell.random_accuracies);
  cell.random_std = sample_stddev(cell.random_accuracies);
  cell.statistic = stddev_statistic(cell.algorithm1_accuracy, cell.random_accuracies);
  if (!cell.statistic && k != cell.n) warn_undefined_statistic(cell.n, k);
  return cell;
}

std::vector<ResultRow> training_rows(const std::string& experiment, const TrainedModel& tm) {
  const auto n = as_i64(tm.n);
  return {
      {experiment, n, -1, -1, "trained_test_accuracy", tm.test_accuracy},
      {experiment, n, -1, -1, "train_steps", static_cast<double>(tm.trace.steps)},
      {experiment, n, -1, -1, "matched", tm.matched ? 1.0 : 0.0},
  };
}

std::vector<ResultRow> specialization_rows(const std::string& experiment,
                                           const SpecializationCell& cell) {
  const auto n = as_i64(cell.n);
  const auto k = as_i64(cell.k);
  std::vector<ResultRow> rows{
      {experiment, n, k, -1, "full_accuracy", cell.full_accuracy},
      {experiment, n, k, -1, "best_subset_accuracy", cell.best_accuracy},
      {experiment, n, k, -1, "algorithm1_accuracy", cell.algorithm1_accuracy},
  };
  for (std::size_t s = 0; s < cell.random_accuracies.size(); ++s)
    rows.push_back({experiment, n, k, static_cast<std::int64_t>(s), "random_accuracy",
                    cell.random_accuracies[s]});
  rows.push_back({experiment, n, k, -1, "random_accuracy_mean", cell.random_mean});
  rows.push_back({experiment, n, k, -1, "random_accuracy_std", cell.random_std});
  if (cell.statistic) rows.push_back({experiment, n, k, -1, "stddev_statistic", *cell.statistic});
  rows.push_back({experiment, n, k, -1, "unique_best_subsets",
                  static_cast<double>(cell.unique_best_subsets)});
  rows.push_back({experiment, n, k, -1, "dominance_violations",
                  static_cast<double>(cell.dominance_violations)});
  return rows;
}

std::vector<ResultRow> accuracy_rows(const std::string& experiment, const AccuracyCell& cell) {
  const auto n = as_i64(cell.n);
  const auto k = as_i64(cell.k);
  std::vector<ResultRow> rows{
      {experiment, n, k, -1, "algorithm1_accuracy", cell.algorithm1_accuracy},
      {experiment, n, k, -1, "random_accuracy", cell.random_mean},
      {experiment, n, k, -1, "random_std", cell.random_std},
  };
  if (cell.statistic) rows.push_back({experiment, n, k, -1, "stddev_statistic", *cell.statistic});
  return rows;
}

std::vector<ResultRow> run_norm_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.dataset != DatasetKind::Norm)
    throw std::invalid_argument("run_norm_experiment: dataset must be norm");
  std::vector<ResultRow> rows;
  for (const auto& [m, d] : cfg.tokenizations) {
    const std::string shape = std::to_string(m) + "x" + std::to_string(d);
    NormTaskConfig task{cfg.input_dim, m, d, std::sqrt(5.0), cfg.batch_size};
    const std::size_t budget = cfg.hidden_budget ? cfg.hidden_budget : 10 * d;
    for (std::size_t n : cfg.n_list) {
      for (std::uint64_t seed : cfg.seeds) {
        const std::string tag = shape + "/n" + std::to_string(n);
        RngStream init = RngStream(seed, "norm-init").fork(tag);
        Model model = build_model({1, m, d, n, budget, 0}, init);
        TrainConfig tc;
        tc.epochs = cfg.epochs;
        tc.batch_size = cfg.batch_size;
        tc.lr = cfg.lr;
        tc.steps_per_epoch = cfg.steps_per_epoch;
        tc.exec = cfg.exec;
        const TrainTrace trace = train_norm_regressor(model, task, tc, RngStream(seed, "norm-data").fork(tag));
        const auto ni = as_i64(n);
        const auto si = static_cast<std::int64_t>(seed);
        for (const auto& e : trace.epochs)
          rows.push_back({cfg.name, ni, -1, si, "loss_" + shape + "_epoch_" + std::to_string(e.epoch), e.loss});
        if (!trace.epochs.empty())
          rows.push_back({cfg.name, ni, -1, si, "final_loss_" + shape, trace.epochs.back().loss});
        rows.push_back({cfg.name, ni, -1, si, "weight_params_" + shape,
                        static_cast<double>(weight_parameter_count(model.layers.front().bank))});
      }
    }
  }
  return rows;
}

std::vector<ResultRow> run_specialization_table(const ExperimentConfig& cfg) {
  cfg.validate();
  const ClassificationData data = make_classification_data(cfg);
  std::vector<ResultRow> rows;
  for (const auto& tm : train_matched_models(cfg, data)) {
    auto tr = training_rows(cfg.name, tm);
    rows.insert(rows.end(), tr.begin(), tr.end());
    for (const auto& ks : cfg.k_list) {
      const auto k = ks.resolve(tm.n);
      if (!k) throw std::invalid_argument("run_specialization_table: k=" + ks.label() + " not integral");
      auto sr = specialization_rows(cfg.name, specialization_cell(cfg, tm.model, data.test, *k));
      rows.insert(rows.end(), sr.begin(), sr.end());
    }
  }
  return rows;
}

std::vector<ResultRow> run_accuracy_vs_n(const ExperimentConfig& cfg) {
  cfg.validate();
  const ClassificationData data = make_classification_data(cfg);
  std::vector<ResultRow> rows;
  for (const auto& tm : train_matched_models(cfg, data)) {
    auto tr = training_rows(cfg.name, tm);
    rows.insert(rows.end(), tr.begin(), tr.end());
    for (const auto& ks : cfg.k_list) {
      const auto k = ks.resolve(tm.n);
      if (!k) throw std::invalid_argument("run_accuracy_vs_n: missing cell for k=" + ks.label());
      auto ar = accuracy_rows(cfg.name, accuracy_cell(cfg, tm.model, data.test, *k));
      rows.insert(rows.end(), ar.begin(), ar.end());
    }
  }
  return rows;
}

std::vector<ResultRow> run_latency_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  LatencyConfig lc;
  lc.layers = cfg.layers;
  lc.experts = cfg.n_list.front();
  lc.dim = cfg.dim;
  lc.tokens = cfg.tokens;
  lc.expert_hidden = cfg.expert_hidden;
  lc.batch_sizes = cfg.batch_sizes;
  lc.warmup = cfg.warmup;
  lc.timed = cfg.timed;
  lc.seed = cfg.seeds.front();
  lc.ks.clear();
  for (const auto& ks : cfg.k_list) lc.ks.push_back(*ks.resolve(lc.experts));
  const Model model = build_latency_model(lc);
  return latency_rows(cfg.name, run_latency_bench(model, lc));
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  if (cfg.name == "norm") return run_norm_experiment(cfg);
  if (cfg.name == "specialization") return run_specialization_table(cfg);
  if (cfg.name == "accuracy-vs-n") return run_accuracy_vs_n(cfg);
  if (cfg.name == "latency") return run_latency_experiment(cfg);
  throw std::invalid_argument("unknown experiment '" + cfg.name + "'");
}

}  // namespace softmoe
