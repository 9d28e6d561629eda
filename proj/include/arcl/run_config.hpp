// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: an INI file with [model] [data] [train] [optim] [run]
// sections. Key names are unique across sections, so any value can be
// overridden on the command line as `--key value`.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "arcl/clharness.hpp"

namespace arcl {

enum class RunMode { seq_ft, arcl, both };

const char* run_mode_name(RunMode m) noexcept;

struct RunConfig {
  ExperimentConfig experiment;
  std::uint64_t seed = 1;
  RunMode mode = RunMode::arcl;
  /// Empty: the CLI picks $ARCL_OUTPUT_ROOT/<mode>_seed<seed> or ./runs/...
  std::string out;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Every recognised key as (section, key), in file order.
const std::vector<std::pair<std::string, std::string>>& config_keys();

/// Sets one key from its textual value. Throws ConfigError for unknown keys
/// and malformed or out-of-range values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

RunConfig parse_run_config(std::istream& ini);

/// `source` is a file path or the literal "default". Overrides are applied
/// after the file, then the result is validated.
RunConfig load_run_config(const std::string& source, const Overrides& overrides = {});

/// Full config as INI; parse_run_config(to_ini(c)) reproduces c exactly.
std::string to_ini(const RunConfig& config);

}  // namespace arcl
