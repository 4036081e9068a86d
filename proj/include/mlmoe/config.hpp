#pragma once

// YAML run configuration. Sections: model, sweep, em, init, loss, output.
// Unknown keys and invalid values are errors naming the offending key path.
// The grammar is documented in README.md.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "mlmoe/experiments.hpp"

namespace mlmoe {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key_path, const std::string& message)
      : std::invalid_argument(key_path.empty() ? message : key_path + ": " + message),
        key_path_(key_path) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

struct OutputConfig {
  std::string directory = "results";
  std::string stem;  // file name stem; defaults to the preset or gate name
  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  SweepConfig sweep;
  OutputConfig output;
};

RunConfig parse_config_text(const std::string& text);
// Throws std::runtime_error when the file cannot be read.
RunConfig parse_config(const std::string& path);

// Fully resolved configuration with the truth spelled out atom by atom.
// parse_config_text(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& cfg);

// Lowercase hex SHA-256 of serialize_config(cfg).
std::string config_digest(const RunConfig& cfg);

std::string sha256_hex(const std::string& bytes);

}  // namespace mlmoe
