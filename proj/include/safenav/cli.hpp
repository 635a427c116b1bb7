#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "safenav/config.hpp"
#include "safenav/eval.hpp"
#include "safenav/verifier.hpp"

namespace safenav {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Parses argv and runs one subcommand; returns the process exit code.
int run_cli(int argc, char** argv);

/// `[group=]path` weight arguments; the group defaults to the file stem.
ModelEntry parse_model_arg(const std::string& arg);

struct TrainOutput {
  std::filesystem::path dir;
  TrainingResult result;
};

TrainOutput cmd_train(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* log = nullptr);

struct ModelSummaries {
  ModelEntry model;
  std::vector<EvalSummary> per_env;
};

/// Writes episodes.csv and summary.csv, plus group_summary.csv and gains.csv
/// when the models carry regime groups including e2e.
std::vector<ModelSummaries> cmd_eval(const RunConfig& config, const std::vector<ModelEntry>& models,
                                     const std::filesystem::path& out_dir, std::ostream* log = nullptr);

/// Writes verdicts.csv and violation_table.csv.
SuiteResult cmd_verify(const RunConfig& config, const std::vector<ModelEntry>& models,
                       const std::filesystem::path& out_dir, std::ostream* log = nullptr);

struct ReproOutput {
  std::filesystem::path root;
  std::vector<ModelEntry> models;  // final policies, group = regime
  std::vector<ModelSummaries> eval;
  SuiteResult verify;
};

/// Trains every regime for every seed, evaluates on the test environments
/// and verifies the final policies. Layout:
///   config.json
///   train/<regime>/seed_<s>/{config.json, curve.csv, training_log.csv, checkpoints/, final/}
///   eval/{config.json, episodes.csv, summary.csv, group_summary.csv, gains.csv}
///   verify/{config.json, verdicts.csv, violation_table.csv}
ReproOutput cmd_repro(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* log = nullptr);

/// Every CSV below `root`, relative paths in sorted order.
std::vector<std::filesystem::path> list_csv_files(const std::filesystem::path& root);

}  // namespace safenav
