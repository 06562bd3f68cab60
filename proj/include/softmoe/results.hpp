#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace softmoe {

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One result cell. n, k and seed are -1 when they do not apply.
struct ResultRow {
  std::string experiment;
  std::int64_t n = -1;
  std::int64_t k = -1;
  std::int64_t seed = -1;
  std::string metric;
  double value = 0.0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

enum class ResultFormat { Csv, Json };

ResultFormat parse_result_format(std::string_view s);
/// Json for a .json extension, otherwise Csv.
ResultFormat format_for_path(const std::filesystem::path& p);

std::string to_csv(const std::vector<ResultRow>& rows);
std::string to_json(const std::vector<ResultRow>& rows);
std::vector<ResultRow> rows_from_json(std::string_view text);
std::vector<ResultRow> rows_from_csv(std::string_view text);

/// Writes rows in emission order. Throws IoError if the path is not writable.
void emit_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path,
                  ResultFormat format);
std::vector<ResultRow> read_results(const std::filesystem::path& path, ResultFormat format);

}  // namespace softmoe
