#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "softmoe/experiments.hpp"

namespace softmoe {

/// Bad config text or value. line() is 0 when the error is not tied to a line.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::size_t line, const std::string& msg)
      : std::invalid_argument(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

/// `key = value` lines; '#' starts a comment, blank lines are ignored,
/// repeated keys are an error.
std::map<std::string, ConfigEntry> parse_key_values(std::string_view text);

/// Overrides fields of `base` from the entries. Unknown keys and malformed
/// values throw ConfigError. The result is validated.
ExperimentConfig apply_config(ExperimentConfig base, const std::map<std::string, ConfigEntry>& entries);

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base);

}  // namespace softmoe
