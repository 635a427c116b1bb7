#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "safenav/curriculum.hpp"
#include "safenav/ppo.hpp"
#include "safenav/sim.hpp"
#include "safenav/verifier.hpp"

namespace safenav {

/// Invalid configuration file or flag value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  std::size_t episodes = 200;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> envs;  // empty: the five test environments
};

struct VerifyConfig {
  BoundMode mode = BoundMode::linear_relax;
  VerifierBudget budget;
  std::filesystem::path properties;  // empty: built-in theta0..theta4
};

struct RunConfig {
  std::string preset = "custom";
  std::uint64_t seed = 1;
  int n_seeds = 3;  // repro trains seeds seed .. seed + n_seeds - 1
  int threads = 1;
  std::filesystem::path out = "runs";
  std::filesystem::path env_dir;
  Regime regime = Regime::tol;
  std::int64_t total_budget = kDeskTotalBudget;
  bool early_advance = false;
  double advance_threshold = 0.9;
  std::int64_t curve_interval = 10'000;
  std::size_t success_window = 100;
  PpoConfig ppo;
  SimParams sim;
  EvalConfig eval;
  VerifyConfig verify;
};

/// desk: 600k steps, 3 seeds, 200 evaluation episodes, verifier depth 14.
/// paper: 6M steps, 3 seeds, 1000 evaluation episodes, verifier depth 20.
RunConfig preset_config(std::string_view name);

/// Applies the keys present in `json_text` on top of `base`. Unknown keys
/// and malformed values raise ConfigError naming the key.
RunConfig merge_config(const RunConfig& base, const std::string& json_text, const std::string& source = "<string>");
RunConfig load_config(const RunConfig& base, const std::filesystem::path& path);

std::string config_to_json(const RunConfig& config);
void write_config(const RunConfig& config, const std::filesystem::path& path);

/// Throws ConfigError on any invalid field.
void validate(const RunConfig& config);

std::vector<std::string> eval_envs(const RunConfig& config);
std::filesystem::path env_dir(const RunConfig& config);

}  // namespace safenav
