#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "softmoe/config.hpp"

using namespace softmoe;

TEST_CASE("key value parsing with comments and blank lines") {
  const auto kv = parse_key_values("# comment\n\nn = 4, 8\n  k=n/4 # trailing\nlr=0.01\r\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv.at("n").value == "4, 8");
  CHECK(kv.at("k").value == "n/4");
  CHECK(kv.at("k").line == 4);
  CHECK(kv.at("lr").value == "0.01");
}

TEST_CASE("malformed lines report their line number") {
  try {
    parse_key_values("n = 4\njust words\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("= 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("a =\n"), ConfigError);
}

TEST_CASE("config values override the experiment defaults") {
  const auto cfg = apply_config(defaults_for("accuracy-vs-n"),
                                parse_key_values("n = 4,8\nk = n/2, n\nseeds = 0..4\nstop_at_accuracy = none\n"
                                                 "lr = 2e-3\nexec = serial\nformat = json\nmnist_dir = /x\n"
                                                 "tokenizations = 1x10\ncluster_std = 0.5\n"));
  CHECK(cfg.n_list == std::vector<std::size_t>{4, 8});
  CHECK(cfg.k_list.size() == 2);
  CHECK(cfg.k_list[0].label() == "n/2");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  CHECK_FALSE(cfg.stop_at_accuracy);
  CHECK(cfg.lr == 2e-3);
  CHECK(cfg.exec == Exec::Serial);
  CHECK(cfg.format == ResultFormat::Json);
  CHECK(cfg.mnist_dir == "/x");
  CHECK(cfg.tokenizations.front() == std::pair<std::size_t, std::size_t>{1, 10});
  CHECK(cfg.cluster_std == 0.5);
}

TEST_CASE("bad values and unknown keys are config errors") {
  const auto base = defaults_for("specialization");
  for (const char* text : {"bogus = 1\n", "n = four\n", "lr = 1e-3x\n", "k = n/0\n", "dataset = cifar\n",
                           "seeds = 5..1\n", "exec = gpu\n", "tokenizations = 2by5\n", "normalize_pixels = maybe\n",
                           "experiment = norm\n", "n = 6\n", "epochs = -1\n"})
    CHECK_THROWS_AS(apply_config(base, parse_key_values(text)), ConfigError);
}

TEST_CASE("config files load from disk") {
  const auto p = std::filesystem::temp_directory_path() / "softmoe_config_test.conf";
  {
    std::ofstream out(p);
    out << "experiment = norm\nn = 1, 10\nhidden_budget = 100\n";
  }
  const auto cfg = load_config(p, defaults_for("norm"));
  CHECK(cfg.n_list == std::vector<std::size_t>{1, 10});
  CHECK(cfg.hidden_budget == 100);
  CHECK_THROWS_AS(load_config(p.string() + ".missing", defaults_for("norm")), IoError);
}
