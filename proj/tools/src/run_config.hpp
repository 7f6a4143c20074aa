// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cantus/oracle.hpp"
#include "cantus/training.hpp"

namespace cantus::cli {

/// Everything a command can be configured with, as one flat key space:
/// model.*, train.*, loss.* (TrainConfig), oracle.* and paths.*.
struct RunConfig {
  TrainConfig train = TrainConfig::desk();
  OracleConfig oracle;
  std::string manifest;  // paths.manifest
  std::string run_dir;   // paths.run_dir
  std::string lexicon;   // paths.lexicon

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& config);
std::vector<std::string> config_keys();

/// Throws ValidationError for unknown keys or bad values.
void apply_key_value(RunConfig& config, const std::string& key, const std::string& value);

/// `key = value` lines; '#' starts a comment. Errors carry the line number.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
std::string serialize_run_config(const RunConfig& config);

}  // namespace cantus::cli
