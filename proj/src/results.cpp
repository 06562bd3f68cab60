#include "softmoe/results.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace softmoe {

ResultFormat parse_result_format(std::string_view s) {
  if (s == "csv") return ResultFormat::Csv;
  if (s == "json") return ResultFormat::Json;
  throw std::invalid_argument("unknown result format '" + std::string(s) + "' (csv|json)");
}

ResultFormat format_for_path(const std::filesystem::path& p) {
  return p.extension() == ".json" ? ResultFormat::Json : ResultFormat::Csv;
}

std::string to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "experiment,n,k,seed,metric,value\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    if (r.experiment.find_first_of(",\n") != std::string::npos ||
        r.metric.find_first_of(",\n") != std::string::npos)
      throw std::invalid_argument("to_csv: experiment and metric names must not contain commas");
    os << r.experiment << ',' << r.n << ',' << r.k << ',' << r.seed << ',' << r.metric << ','
       << r.value << '\n';
  }
  return os.str();
}

std::string to_json(const std::vector<ResultRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"experiment", r.experiment},
                   {"n", r.n},
                   {"k", r.k},
                   {"seed", r.seed},
                   {"metric", r.metric},
                   {"value", r.value}});
  return arr.dump(2) + "\n";
}

std::vector<ResultRow> rows_from_json(std::string_view text) {
  const auto arr = nlohmann::json::parse(text);
  std::vector<ResultRow> rows;
  for (const auto& o : arr)
    rows.push_back({o.at("experiment").get<std::string>(), o.at("n").get<std::int64_t>(),
                    o.at("k").get<std::int64_t>(), o.at("seed").get<std::int64_t>(),
                    o.at("metric").get<std::string>(), o.at("value").get<double>()});
  return rows;
}

std::vector<ResultRow> rows_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "experiment,n,k,seed,metric,value")
    throw std::invalid_argument("rows_from_csv: missing header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ResultRow r;
    std::string n, k, seed, value;
    if (!std::getline(ls, r.experiment, ',') || !std::getline(ls, n, ',') ||
        !std::getline(ls, k, ',') || !std::getline(ls, seed, ',') ||
        !std::getline(ls, r.metric, ',') || !std::getline(ls, value))
      throw std::invalid_argument("rows_from_csv: malformed line '" + line + "'");
    r.n = std::stoll(n);
    r.k = std::stoll(k);
    r.seed = std::stoll(seed);
    r.value = std::stod(value);
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path,
                  ResultFormat format) {
  for (const auto& r : rows)
    if (!std::isfinite(r.value))
      throw std::invalid_argument("emit_results: non-finite value for metric " + r.metric);
  const std::string body = format == ResultFormat::Csv ? to_csv(rows) : to_json(rows);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("emit_results: cannot write " + path.string());
  out << body;
  if (!out) throw IoError("emit_results: write failed for " + path.string());
}

std::vector<ResultRow> read_results(const std::filesystem::path& path, ResultFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_results: cannot open " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return format == ResultFormat::Csv ? rows_from_csv(text) : rows_from_json(text);
}

}  // namespace softmoe
