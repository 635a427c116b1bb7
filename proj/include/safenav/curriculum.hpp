#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "safenav/neural.hpp"
#include "safenav/ppo.hpp"
#include "safenav/sim.hpp"

namespace safenav {

enum class Regime { e2e, tol, finetune };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view s);  // throws ContractError

struct Stage {
  std::string env;
  std::int64_t budget = 0;  // environment steps
  int freeze_on_entry = 0;  // leading hidden layers frozen when the stage starts
  friend bool operator==(const Stage&, const Stage&) = default;
};

struct TrainingPlan {
  Regime regime = Regime::tol;
  std::vector<Stage> stages;
  std::int64_t total_budget = 0;
  std::uint64_t seed = 0;
  // Optional: move to the next stage once rolling success reaches the
  // threshold; unused steps and updates carry over.
  bool early_advance = false;
  double advance_threshold = 0.9;
};

inline constexpr std::int64_t kPaperTotalBudget = 6'000'000;
inline constexpr std::int64_t kDeskTotalBudget = 600'000;

/// Curriculum regimes split the budget 1:2:3 over baseEnv, intEnv and
/// finalEnv; ToL freezes k-1 leading hidden layers on entering stage k.
/// E2E spends everything on finalEnv.
TrainingPlan default_plan(Regime regime, std::int64_t total_budget, std::uint64_t seed = 0);

void validate(const TrainingPlan& plan, int hidden_layers);

/// Splits the plan into rollout lengths, one PPO update per entry. The
/// number of updates is ceil(total / horizon) for every regime; each stage
/// receives a share proportional to its budget (largest remainder) and its
/// steps are spread evenly over its updates.
std::vector<std::vector<std::int64_t>> rollout_schedule(const TrainingPlan& plan, int horizon);

struct CurvePoint {
  std::int64_t step = 0;
  int stage = 0;
  double rolling_success = 0.0;
  double mean_reward = 0.0;  // mean episode return over the same window
};

struct UpdateRecord {
  std::int64_t step = 0;
  int stage = 0;
  int rollout_steps = 0;
  int episodes = 0;
  double mean_reward = 0.0;  // per step, this rollout
  double success_rate = 0.0; // rolling
  UpdateStats stats;
};

/// Fraction of the trailing `window` outcomes that reached the goal.
double rolling_success(std::span<const Terminal> outcomes, std::size_t window = 100);

struct Checkpoint {
  MlpNetwork policy;
  MlpNetwork value;
  AdamState policy_adam;
  AdamState value_adam;
  std::int64_t step = 0;
  int stage_index = 0;  // next stage to run
  std::string rng_state;
  std::uint64_t updates_done = 0;
};

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct TrainingOptions {
  PpoConfig ppo;
  SimParams sim;
  std::filesystem::path env_dir;
  std::filesystem::path out_dir;  // empty: no files written
  std::int64_t curve_interval = 10'000;
  std::size_t success_window = 100;
  // Called after every update; returning false stops training early.
  std::function<bool(const UpdateRecord&, const MlpNetwork& policy, const MlpNetwork& value)> on_update;
};

struct TrainingResult {
  Checkpoint final;
  std::vector<CurvePoint> curve;
  std::vector<UpdateRecord> updates;
  std::vector<Checkpoint> stage_checkpoints;  // state at the start of each stage
  std::int64_t episodes = 0;
};

/// Runs the stages in order on the same networks. Checkpoints are written
/// at each stage boundary; `resume` restarts from one of them.
TrainingResult run_training(const TrainingPlan& plan, const TrainingOptions& options,
                            const Checkpoint* resume = nullptr);

void write_curve_csv(std::span<const CurvePoint> curve, const std::filesystem::path& path);
void write_training_log_csv(std::span<const UpdateRecord> updates, const std::filesystem::path& path);

}  // namespace safenav
