#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "safenav/envsuite.hpp"
#include "safenav/neural.hpp"
#include "safenav/sim.hpp"

namespace safenav {

struct EpisodeRecord {
  std::string env;
  std::uint64_t seed = 0;  // spawn seed of this episode
  Terminal outcome = Terminal::timeout;
  double path_length = 0.0;
  double initial_distance = 0.0;
  int steps = 0;
};

struct EvalSummary {
  std::string env;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double mean_deviation = 0.0;  // path_length / initial_distance, successful episodes only; 0 if none
  std::size_t episodes = 0;
  std::vector<std::uint64_t> seeds;
};

/// Greedy action: argmax of the policy logits, ties to the lowest index.
int greedy_action(const MlpNetwork& policy, const Observation& obs);

/// Plays `episodes` greedy episodes per seed. Episode e of seed s spawns
/// from mix_seed(s, e).
std::vector<EpisodeRecord> run_episodes(const MlpNetwork& policy, const EnvironmentSpec& env, const SimParams& sim,
                                        std::size_t episodes, std::span<const std::uint64_t> seeds);

EvalSummary summarize(const std::string& env, std::span<const EpisodeRecord> records,
                      std::span<const std::uint64_t> seeds);

EvalSummary run_eval(const MlpNetwork& policy, const EnvironmentSpec& env, const SimParams& sim,
                     std::size_t episodes, std::span<const std::uint64_t> seeds,
                     std::vector<EpisodeRecord>* records = nullptr);

/// summaries[regime][env] -> collision-rate gains versus "e2e" in
/// percentage points, plus the mean across environments.
struct GainRow {
  std::string regime;
  std::vector<std::pair<std::string, double>> per_env;
  double total = 0.0;
};

std::vector<GainRow> gain_table(const std::map<std::string, std::map<std::string, EvalSummary>>& summaries,
                                std::span<const std::string> envs);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};
MeanStd mean_std(std::span<const double> values);

void write_episodes_csv(std::span<const EpisodeRecord> records, const std::string& label,
                        const std::filesystem::path& path, bool append = false);
void write_gain_csv(std::span<const GainRow> rows, std::span<const std::string> envs,
                    const std::filesystem::path& path);

}  // namespace safenav
