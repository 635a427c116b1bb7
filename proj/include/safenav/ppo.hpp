#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "safenav/envsuite.hpp"
#include "safenav/neural.hpp"
#include "safenav/rng.hpp"
#include "safenav/sim.hpp"

namespace safenav {

/// Raised when an update produces non-finite quantities; the message
/// carries a dump of the offending minibatch rows.
class TrainingDiagnosticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AdvantageMode { paper, gae };

struct PpoConfig {
  double gamma = 0.99;
  double clip_epsilon = 0.2;
  double lr = 3e-4;
  int horizon = 6000;
  int epochs = 10;
  int minibatch_size = 600;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  AdvantageMode advantage_mode = AdvantageMode::paper;
  double gae_lambda = 0.95;
  bool normalize_advantages = true;
};

void validate(const PpoConfig& config);

struct Transition {
  Eigen::VectorXd observation;
  int action = 0;
  double log_prob = 0.0;  // under the behaviour policy
  double reward = 0.0;
  double value = 0.0;
  bool terminal = false;   // crashed or reached: no bootstrap
  bool truncated = false;  // timeout: bootstrap from next_value
  double next_value = 0.0; // V(s_{t+1}); used on truncation and at the buffer end
};

class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity) : capacity_(capacity) { records_.reserve(capacity); }

  void append(Transition t);
  void clear() { records_.clear(); }

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return records_.empty(); }
  bool full() const { return records_.size() >= capacity_; }
  void set_capacity(std::size_t capacity);

  const Transition& operator[](std::size_t i) const { return records_[i]; }
  Transition& operator[](std::size_t i) { return records_[i]; }
  const std::vector<Transition>& records() const { return records_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> records_;
};

struct AdvantageResult {
  Eigen::VectorXd advantages;  // before normalization
  Eigen::VectorXd returns;     // value-regression targets
};

/// "paper" mode: A_t = G_t - V(s_t) with discounted returns that restart at
/// episode ends and bootstrap from V on truncation or at the buffer end.
AdvantageResult compute_advantages(const RolloutBuffer& buffer, const PpoConfig& config);

void normalize(Eigen::VectorXd& advantages);

struct Minibatch {
  Eigen::MatrixXd observations;  // obs_dim x n
  std::vector<int> actions;
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

Minibatch make_minibatch(const RolloutBuffer& buffer, const AdvantageResult& adv, std::span<const std::size_t> idx);

struct LossResult {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double max_ratio_deviation = 0.0;  // max |r - 1|
  Gradients policy_grad;
  Gradients value_grad;
};

/// Clipped surrogate + value MSE - entropy bonus, with exact gradients.
LossResult ppo_loss(const MlpNetwork& policy, const MlpNetwork& value_net, const Minibatch& batch,
                    const PpoConfig& config);

/// Per-sample clipped objective min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double epsilon);

struct EpisodeResult {
  Terminal outcome = Terminal::none;
  double total_reward = 0.0;
  int steps = 0;
  std::int64_t end_step = 0;  // global step count after the final step
  double path_length = 0.0;
  double initial_distance = 0.0;
};

/// One environment with automatic episode resets.
class EnvRunner {
 public:
  EnvRunner(EnvironmentSpec spec, SimParams params);

  const EnvironmentSpec& spec() const { return spec_; }
  const SimParams& params() const { return params_; }
  const World& world() const { return world_; }

  // Starts a fresh episode; seed drawn from rng.
  void reset(Rng& rng);
  bool active() const { return episode_.has_value() && !episode_->done(); }
  Episode& episode() { return *episode_; }

 private:
  EnvironmentSpec spec_;
  SimParams params_;
  World world_;
  std::optional<Episode> episode_;
};

Eigen::VectorXd to_vector(const Observation& obs);

/// Samples actions from the policy until `steps` transitions are appended.
/// Returns the episodes that finished during the rollout.
std::vector<EpisodeResult> collect_rollout(EnvRunner& env, const MlpNetwork& policy, const MlpNetwork& value_net,
                                           RolloutBuffer& buffer, Rng& rng, std::size_t steps,
                                           std::int64_t& global_step);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double first_batch_ratio_deviation = 0.0;
  int minibatches = 0;
};

/// Runs `epochs` passes of shuffled minibatches, then clears the buffer.
UpdateStats update(MlpNetwork& policy, MlpNetwork& value_net, RolloutBuffer& buffer, const PpoConfig& config,
                   AdamState& policy_adam, AdamState& value_adam, Rng& rng);

}  // namespace safenav
