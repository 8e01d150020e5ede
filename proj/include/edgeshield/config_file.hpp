#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "edgeshield/pipeline.hpp"

namespace edgeshield {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// YAML subset mirroring ExperimentConfig. Every key is optional and falls
/// back to the ExperimentConfig default; unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical form: every key, fixed order. parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// FNV-1a 64 of the canonical form without the output path, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace edgeshield
