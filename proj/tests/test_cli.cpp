#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "softmoe/checkpoint.hpp"
#include "softmoe/results.hpp"

using namespace softmoe;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + SOFTMOE_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("softmoe_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kSmallAccuracy =
    "n = 4\nk = n/4, n\ntrain_size = 200\ntest_size = 80\nclasses = 3\ntokens = 2\ndim = 3\n"
    "hidden_budget = 8\nepochs = 5\nstop_at_accuracy = 0.7\nseeds = 0..2\n";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("experiment") == 2);
  CHECK(run("experiment not-an-experiment") == 2);
  CHECK(run("train --seed banana") == 2);
  CHECK(run("train --config /definitely/missing.conf") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("config errors exit with 3") {
  const fs::path d = fresh_dir("config");
  CHECK(run("experiment accuracy-vs-n --out " + d.string() + " --config " +
            write_file(d / "bad.conf", "no_such_key = 1\n").string()) == 3);
  CHECK(run("experiment accuracy-vs-n --out " + d.string() + " --config " +
            write_file(d / "k.conf", "n = 6\nk = n/4\n").string()) == 3);
}

TEST_CASE("i/o errors exit with 4") {
  const fs::path d = fresh_dir("io");
  const fs::path blocker = write_file(d / "file", "x");
  CHECK(run("experiment accuracy-vs-n --out " + (blocker / "sub").string() + " --config " +
            write_file(d / "ok.conf", kSmallAccuracy).string()) == 4);
  CHECK(run("experiment specialization --out " + d.string() + " --mnist-dir " + (d / "nothing").string()) == 4);
}

TEST_CASE("train writes a loadable checkpoint and trace; runs are reproducible") {
  const fs::path a = fresh_dir("train_a");
  const fs::path b = fresh_dir("train_b");
  const fs::path conf = write_file(a / "t.conf", kSmallAccuracy);
  REQUIRE(run("train --config " + conf.string() + " --seed 3 --out " + a.string()) == 0);
  REQUIRE(run("train --config " + conf.string() + " --seed 3 --out " + b.string()) == 0);
  const Model m = load_checkpoint(a / "model.ckpt");
  CHECK(m.experts() == 4);
  CHECK(m.is_classifier());
  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
  const auto rows = read_results(a / "train_trace.csv", ResultFormat::Csv);
  CHECK_FALSE(rows.empty());
}

TEST_CASE("experiment output goes to the env directory and is deterministic") {
  const fs::path a = fresh_dir("env_a");
  const fs::path b = fresh_dir("env_b");
  const fs::path conf = write_file(a / "acc.conf", kSmallAccuracy);
  REQUIRE(run("experiment accuracy-vs-n --config " + conf.string(), "SOFTMOE_OUT_DIR=" + a.string()) == 0);
  REQUIRE(run("experiment accuracy-vs-n --config " + conf.string() + " --out " + b.string(),
              "SOFTMOE_OUT_DIR=/nonexistent/never") == 0);
  REQUIRE(fs::exists(a / "accuracy-vs-n.csv"));
  CHECK(slurp(a / "accuracy-vs-n.csv") == slurp(b / "accuracy-vs-n.csv"));

  const fs::path j = write_file(a / "json.conf", std::string(kSmallAccuracy) + "format = json\n");
  REQUIRE(run("experiment accuracy-vs-n --config " + j.string() + " --out " + a.string()) == 0);
  CHECK(read_results(a / "accuracy-vs-n.json", ResultFormat::Json) ==
        read_results(a / "accuracy-vs-n.csv", ResultFormat::Csv));
}

TEST_CASE("norm experiment and bench run end to end on small settings") {
  const fs::path d = fresh_dir("small");
  const fs::path norm = write_file(d / "norm.conf", "n = 1,2\nepochs = 2\nbatch_size = 32\nsteps_per_epoch = 1\n");
  CHECK(run("experiment norm --seed 4 --config " + norm.string() + " --out " + d.string()) == 0);
  const auto rows = read_results(d / "norm.csv", ResultFormat::Csv);
  for (const auto& r : rows) CHECK(r.seed == 4);

  const fs::path bench = write_file(d / "bench.conf",
                                    "layers = 1\nn = 4\nk = n, n/2\ndim = 8\ntokens = 2\nexpert_hidden = 8\n"
                                    "warmup = 1\ntimed = 2\noutput = lat.json\nformat = json\n");
  CHECK(run("bench --config " + bench.string() + " --out " + d.string()) == 0);
  CHECK(read_results(d / "lat.json", ResultFormat::Json).size() == 6);
}
