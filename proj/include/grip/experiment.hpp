#pragma once

#include <string>
#include <vector>

#include "grip/config.hpp"

namespace grip {

// Exit codes of the command-line driver.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitMissingInput = 3;
inline constexpr int kExitNumerical = 4;

// Subcommands. Each writes the resolved config to <out>/config.ini.
//   gen    dataset directory
//   solve  traces/<split>_<NNNN>.csv per test problem + metrics.csv (classical)
//   train  seed_<s>/{checkpoint.bin,model.json,run.json} + metrics.csv (learned)
//   eval   metrics.csv recomputed from checkpoints (learned) or solves (classical)
//   report report.csv merged from the metrics.csv of `runs`
void cmd_gen(const ExperimentConfig& cfg);
void cmd_solve(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg);
void cmd_report(const std::string& out_dir, const std::vector<std::string>& runs);

// Dataset named by the config: read from dataset.path or generated.
Dataset load_dataset(const ExperimentConfig& cfg);

// Architecture manifest stored next to a checkpoint.
nlohmann::json model_manifest(const SolverNet& net);
SolverNet net_from_manifest(const nlohmann::json& j);

// Full driver: parses argv, runs the subcommand, maps failures to exit codes
// and prints one JSON error line on stderr.
int run_cli(int argc, char** argv);

}  // namespace grip
