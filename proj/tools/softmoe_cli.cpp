// softmoe: train a model, run a named experiment, or time the selection policies.
//
// Exit codes: 0 ok, 2 usage, 3 bad config, 4 file I/O, 5 other runtime failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "softmoe/checkpoint.hpp"
#include "softmoe/config.hpp"
#include "softmoe/experiments.hpp"
#include "softmoe/latency.hpp"
#include "softmoe/mnist.hpp"

namespace fs = std::filesystem;
using namespace softmoe;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitRuntime = 5;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string mnist_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory (default $SOFTMOE_OUT_DIR, else ./results)");
  cmd->add_option("--seed", f.seed, "model seed (norm and latency: the only run seed)");
  cmd->add_option("--mnist-dir", f.mnist_dir, "directory holding the four MNIST IDX files");
}

fs::path output_dir(const CommonFlags& f) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("SOFTMOE_OUT_DIR"); env && *env) return env;
  return "results";
}

ExperimentConfig resolve_config(ExperimentConfig cfg, const CommonFlags& f) {
  if (!f.config.empty()) cfg = load_config(f.config, std::move(cfg));
  if (!f.mnist_dir.empty()) {
    cfg.mnist_dir = f.mnist_dir;
    if (cfg.dataset == DatasetKind::Cluster) cfg.dataset = DatasetKind::Mnist;
  }
  if (f.seed) {
    cfg.model_seed = *f.seed;
    if (cfg.dataset == DatasetKind::Norm || cfg.name == "latency") cfg.seeds = {*f.seed};
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  return cfg;
}

fs::path result_path(const ExperimentConfig& cfg, const fs::path& dir) {
  if (!cfg.output.empty()) return cfg.output.is_absolute() ? cfg.output : dir / cfg.output;
  return dir / (cfg.name + (cfg.format == ResultFormat::Json ? ".json" : ".csv"));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

ExperimentConfig train_defaults() {
  ExperimentConfig cfg = specialization_defaults();
  cfg.name = "train";
  cfg.n_list = {8};
  return cfg;
}

int cmd_train(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve_config(train_defaults(), f);
  const fs::path dir = output_dir(f);
  ensure_dir(dir);
  const std::size_t n = cfg.n_list.front();
  std::vector<ResultRow> rows;
  Model model;

  if (cfg.dataset == DatasetKind::Norm) {
    const auto [m, d] = cfg.tokenizations.front();
    const std::size_t budget = cfg.hidden_budget ? cfg.hidden_budget : 10 * d;
    RngStream init(cfg.model_seed, "train-init");
    model = build_model({cfg.layers, m, d, n, budget, 0}, init);
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.steps_per_epoch = cfg.steps_per_epoch;
    tc.exec = cfg.exec;
    const TrainTrace trace = train_norm_regressor(model, {cfg.input_dim, m, d, std::sqrt(5.0), cfg.batch_size},
                                                  tc, RngStream(cfg.model_seed, "train-data"));
    for (const auto& e : trace.epochs)
      rows.push_back({"train", static_cast<std::int64_t>(n), -1, static_cast<std::int64_t>(cfg.model_seed),
                      "epoch_" + std::to_string(e.epoch) + "_loss", e.loss});
    std::cout << "trained n=" << n << " for " << trace.steps << " steps, final loss "
              << (trace.epochs.empty() ? 0.0 : trace.epochs.back().loss) << "\n";
  } else {
    const ClassificationData data = make_classification_data(cfg);
    RngStream init(cfg.model_seed, "train-init");
    model = build_model({cfg.layers, data.tokens, data.dim, n, cfg.hidden_budget, data.train.classes}, init);
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.stop_at_accuracy = cfg.stop_at_accuracy;
    tc.eval_every = cfg.eval_every;
    tc.exec = cfg.exec;
    const TrainTrace trace = train_classifier(model, data.train, data.test, tc, RngStream(cfg.model_seed, "train-shuffle"));
    const auto ni = static_cast<std::int64_t>(n);
    const auto si = static_cast<std::int64_t>(cfg.model_seed);
    for (const auto& e : trace.epochs) {
      const std::string p = "epoch_" + std::to_string(e.epoch) + "_";
      rows.push_back({"train", ni, -1, si, p + "loss", e.loss});
      if (e.test_accuracy) rows.push_back({"train", ni, -1, si, p + "test_accuracy", *e.test_accuracy});
    }
    const double acc = trace.final_test_accuracy.value_or(evaluate_accuracy(model, data.test, cfg.exec));
    rows.push_back({"train", ni, -1, si, "final_test_accuracy", acc});
    rows.push_back({"train", ni, -1, si, "steps", static_cast<double>(trace.steps)});
    std::cout << "trained n=" << n << " for " << trace.steps << " steps, test accuracy " << acc << "\n";
  }

  const fs::path ckpt = dir / "model.ckpt";
  save_checkpoint(model, ckpt);
  const fs::path trace_path = dir / (cfg.format == ResultFormat::Json ? "train_trace.json" : "train_trace.csv");
  emit_results(rows, trace_path, cfg.format);
  std::cout << "wrote " << ckpt.string() << " and " << trace_path.string() << "\n";
  return 0;
}

int cmd_experiment(const std::string& name, const CommonFlags& f) {
  ExperimentConfig cfg;
  try {
    cfg = defaults_for(name);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  cfg = resolve_config(std::move(cfg), f);
  const fs::path dir = output_dir(f);
  ensure_dir(dir);
  const auto rows = run_experiment(cfg);
  const fs::path path = result_path(cfg, dir);
  emit_results(rows, path, cfg.format);
  std::cout << "wrote " << rows.size() << " rows to " << path.string() << "\n";
  return 0;
}

int cmd_bench(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve_config(latency_defaults(), f);
  const fs::path dir = output_dir(f);
  ensure_dir(dir);
  const auto rows = run_latency_experiment(cfg);
  std::printf("%-28s %6s %12s\n", "metric", "k", "ms");
  for (const auto& r : rows) std::printf("%-28s %6lld %12.4f\n", r.metric.c_str(), static_cast<long long>(r.k), r.value);
  const fs::path path = result_path(cfg, dir);
  emit_results(rows, path, cfg.format);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft MoE expert-subset selection: training, experiments and latency"};
  app.require_subcommand(1);

  CommonFlags train_flags, exp_flags, bench_flags;
  auto* train = app.add_subcommand("train", "train one model, write model.ckpt and a training trace");
  add_common(train, train_flags);
  auto* exp = app.add_subcommand("experiment", "run norm | specialization | accuracy-vs-n | latency");
  std::string exp_name;
  exp->add_option("name", exp_name, "experiment name")->required();
  add_common(exp, exp_flags);
  auto* bench = app.add_subcommand("bench", "latency of the plain forward and Algorithm 1 per k");
  add_common(bench, bench_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*exp) return cmd_experiment(exp_name, exp_flags);
    return cmd_bench(bench_flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IdxError& e) {
    std::cerr << "mnist: " << e.what() << "\n";
    return kExitIo;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
