#include "softmoe/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

namespace softmoe {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

template <class T>
T parse_number(std::string_view s, std::size_t line, std::string_view key) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw ConfigError(line, "bad value '" + std::string(s) + "' for " + std::string(key));
  return v;
}

std::size_t parse_size(std::string_view s, std::size_t line, std::string_view key) {
  return parse_number<std::size_t>(s, line, key);
}

double parse_real(std::string_view s, std::size_t line, std::string_view key) {
  return parse_number<double>(s, line, key);
}

bool parse_bool(std::string_view s, std::size_t line, std::string_view key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(line, "bad boolean '" + std::string(s) + "' for " + std::string(key));
}

std::vector<std::size_t> parse_sizes(std::string_view s, std::size_t line, std::string_view key) {
  std::vector<std::size_t> out;
  for (auto item : split(s, ',')) out.push_back(parse_size(item, line, key));
  return out;
}

// "0,1,2" or an inclusive range "0..9".
std::vector<std::uint64_t> parse_seeds(std::string_view s, std::size_t line) {
  std::vector<std::uint64_t> out;
  for (auto item : split(s, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string_view::npos) {
      out.push_back(parse_number<std::uint64_t>(item, line, "seeds"));
      continue;
    }
    const auto lo = parse_number<std::uint64_t>(trim(item.substr(0, dots)), line, "seeds");
    const auto hi = parse_number<std::uint64_t>(trim(item.substr(dots + 2)), line, "seeds");
    if (hi < lo) throw ConfigError(line, "empty seed range");
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::size_t)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto size_field = [&t](const char* key, std::size_t ExperimentConfig::*field) {
      t[key] = [key, field](ExperimentConfig& c, std::string_view v, std::size_t line) {
        c.*field = parse_size(v, line, key);
      };
    };
    auto real_field = [&t](const char* key, double ExperimentConfig::*field) {
      t[key] = [key, field](ExperimentConfig& c, std::string_view v, std::size_t line) {
        c.*field = parse_real(v, line, key);
      };
    };
    size_field("layers", &ExperimentConfig::layers);
    size_field("hidden_budget", &ExperimentConfig::hidden_budget);
    size_field("tokens", &ExperimentConfig::tokens);
    size_field("dim", &ExperimentConfig::dim);
    size_field("classes", &ExperimentConfig::classes);
    size_field("train_size", &ExperimentConfig::train_size);
    size_field("test_size", &ExperimentConfig::test_size);
    size_field("epochs", &ExperimentConfig::epochs);
    size_field("batch_size", &ExperimentConfig::batch_size);
    size_field("steps_per_epoch", &ExperimentConfig::steps_per_epoch);
    size_field("eval_every", &ExperimentConfig::eval_every);
    size_field("input_dim", &ExperimentConfig::input_dim);
    size_field("warmup", &ExperimentConfig::warmup);
    size_field("timed", &ExperimentConfig::timed);
    size_field("expert_hidden", &ExperimentConfig::expert_hidden);
    real_field("cluster_std", &ExperimentConfig::cluster_std);
    real_field("mean_scale", &ExperimentConfig::mean_scale);
    real_field("lr", &ExperimentConfig::lr);
    real_field("match_tolerance", &ExperimentConfig::match_tolerance);

    t["experiment"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      if (!c.name.empty() && c.name != v)
        throw ConfigError(line, "config is for experiment '" + std::string(v) + "', not '" + c.name + "'");
      c.name = v;
    };
    t["n"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.n_list = parse_sizes(v, line, "n"); };
    t["k"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      c.k_list.clear();
      for (auto item : split(v, ',')) {
        try {
          c.k_list.push_back(KSpec::parse(item));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(line, e.what());
        }
      }
    };
    t["dataset"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      if (v == "cluster") c.dataset = DatasetKind::Cluster;
      else if (v == "norm") c.dataset = DatasetKind::Norm;
      else if (v == "mnist") c.dataset = DatasetKind::Mnist;
      else throw ConfigError(line, "dataset must be cluster, norm or mnist");
    };
    t["mnist_dir"] = [](ExperimentConfig& c, std::string_view v, std::size_t) { c.mnist_dir = std::string(v); };
    t["normalize_pixels"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      c.normalize_pixels = parse_bool(v, line, "normalize_pixels");
    };
    t["stop_at_accuracy"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      if (v == "none") c.stop_at_accuracy.reset();
      else c.stop_at_accuracy = parse_real(v, line, "stop_at_accuracy");
    };
    t["model_seed"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      c.model_seed = parse_number<std::uint64_t>(v, line, "model_seed");
    };
    t["seeds"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) { c.seeds = parse_seeds(v, line); };
    t["tokenizations"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      c.tokenizations.clear();
      for (auto item : split(v, ',')) {
        const auto x = item.find('x');
        if (x == std::string_view::npos) throw ConfigError(line, "tokenization must look like 2x5");
        c.tokenizations.emplace_back(parse_size(item.substr(0, x), line, "tokenizations"),
                                     parse_size(item.substr(x + 1), line, "tokenizations"));
      }
    };
    t["batch_sizes"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      c.batch_sizes = parse_sizes(v, line, "batch_sizes");
    };
    t["output"] = [](ExperimentConfig& c, std::string_view v, std::size_t) { c.output = std::string(v); };
    t["format"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      try {
        c.format = parse_result_format(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(line, e.what());
      }
    };
    t["exec"] = [](ExperimentConfig& c, std::string_view v, std::size_t line) {
      if (v == "serial") c.exec = Exec::Serial;
      else if (v == "parallel") c.exec = Exec::Parallel;
      else throw ConfigError(line, "exec must be serial or parallel");
    };
    return t;
  }();
  return table;
}

}  // namespace

std::map<std::string, ConfigEntry> parse_key_values(std::string_view text) {
  std::map<std::string, ConfigEntry> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? text.npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected key = value");
    const std::string key{trim(line.substr(0, eq))};
    const std::string value{trim(line.substr(eq + 1))};
    if (key.empty()) throw ConfigError(line_no, "empty key");
    if (value.empty()) throw ConfigError(line_no, "empty value for " + key);
    if (!out.emplace(key, ConfigEntry{value, line_no}).second)
      throw ConfigError(line_no, "duplicate key " + key);
  }
  return out;
}

ExperimentConfig apply_config(ExperimentConfig base, const std::map<std::string, ConfigEntry>& entries) {
  const auto& table = setters();
  for (const auto& [key, entry] : entries) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(entry.line, "unknown key " + key);
    it->second(base, entry.value, entry.line);
  }
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return apply_config(std::move(base), parse_key_values(text));
}

}  // namespace softmoe
