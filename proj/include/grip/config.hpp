#pragma once

#include <string>
#include <vector>

#include "grip/harness.hpp"

namespace grip {

// INI document with sections [dataset], [solver], [train], [output].
struct ExperimentConfig {
  DatasetSpec dataset;
  std::string dataset_path;  // [dataset] path: read instead of generating when set

  std::string solver = "classical";  // classical | var | iss | prox
  ClassicalConfig classical;
  UnrolledConfig unrolled;

  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  std::string out_dir = "run";
  std::string setting;        // label in metric tables; derived from the task when empty
  bool write_traces = true;   // solve: one trace CSV per test problem

  bool learned() const { return solver != "classical"; }
  std::string model_name() const;
  std::string setting_label() const;
};

// Parses INI text; unknown sections or keys, malformed values and failed
// validation raise ConfigError.
ExperimentConfig parse_config(const std::string& ini_text);
ExperimentConfig load_config(const std::string& path);

// "section.key=value"
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Cross-field checks (ranges, solver names, ...). Throws ConfigError.
void validate(const ExperimentConfig& cfg);

// Every key with its resolved value, in schema order.
std::string to_ini(const ExperimentConfig& cfg);

}  // namespace grip
