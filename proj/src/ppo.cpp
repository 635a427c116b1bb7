#include "safenav/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace safenav {

void validate(const PpoConfig& c) {
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ContractError("gamma must lie in (0, 1]");
  if (!(c.clip_epsilon > 0.0)) throw ContractError("clip_epsilon must be positive");
  if (!(c.lr > 0.0)) throw ContractError("lr must be positive");
  if (c.horizon < 1) throw ContractError("horizon must be at least 1");
  if (c.epochs < 1) throw ContractError("epochs must be at least 1");
  if (c.minibatch_size < 1) throw ContractError("minibatch_size must be at least 1");
  if (c.value_coef < 0.0 || c.entropy_coef < 0.0) throw ContractError("loss coefficients must be non-negative");
  if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0)) throw ContractError("gae_lambda must lie in [0, 1]");
}

void RolloutBuffer::append(Transition t) {
  if (full()) throw ContractError("rollout buffer is full");
  records_.push_back(std::move(t));
}

void RolloutBuffer::set_capacity(std::size_t capacity) {
  if (capacity < records_.size()) throw ContractError("capacity below current size");
  capacity_ = capacity;
  records_.reserve(capacity);
}

AdvantageResult compute_advantages(const RolloutBuffer& buffer, const PpoConfig& config) {
  if (buffer.empty()) throw ContractError("compute_advantages on an empty buffer");
  const std::size_t n = buffer.size();
  AdvantageResult out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  const double gamma = config.gamma;

  if (config.advantage_mode == AdvantageMode::paper) {
    double g = 0.0;
    for (std::size_t k = n; k-- > 0;) {
      const Transition& t = buffer[k];
      if (t.terminal) {
        g = t.reward;
      } else if (t.truncated || k + 1 == n) {
        g = t.reward + gamma * t.next_value;
      } else {
        g = t.reward + gamma * g;
      }
      out.returns(static_cast<Eigen::Index>(k)) = g;
      out.advantages(static_cast<Eigen::Index>(k)) = g - t.value;
    }
  } else {
    double gae = 0.0;
    for (std::size_t k = n; k-- > 0;) {
      const Transition& t = buffer[k];
      const bool last = k + 1 == n;
      double next_v = 0.0;
      if (!t.terminal) next_v = (t.truncated || last) ? t.next_value : buffer[k + 1].value;
      const double delta = t.reward + gamma * next_v - t.value;
      const bool continues = !t.terminal && !t.truncated && !last;
      gae = delta + (continues ? gamma * config.gae_lambda * gae : 0.0);
      out.advantages(static_cast<Eigen::Index>(k)) = gae;
      out.returns(static_cast<Eigen::Index>(k)) = gae + t.value;
    }
  }
  return out;
}

void normalize(Eigen::VectorXd& a) {
  if (a.size() == 0) return;
  const double mean = a.mean();
  a.array() -= mean;
  const double var = a.squaredNorm() / static_cast<double>(a.size());
  a /= std::sqrt(var) + 1e-8;
}

Minibatch make_minibatch(const RolloutBuffer& buffer, const AdvantageResult& adv, std::span<const std::size_t> idx) {
  Minibatch mb;
  const auto n = static_cast<Eigen::Index>(idx.size());
  const auto dim = buffer[idx.front()].observation.size();
  mb.observations.resize(dim, n);
  mb.actions.resize(idx.size());
  mb.old_log_probs.resize(n);
  mb.advantages.resize(n);
  mb.returns.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t k = idx[static_cast<std::size_t>(j)];
    const Transition& t = buffer[k];
    mb.observations.col(j) = t.observation;
    mb.actions[static_cast<std::size_t>(j)] = t.action;
    mb.old_log_probs(j) = t.log_prob;
    mb.advantages(j) = adv.advantages(static_cast<Eigen::Index>(k));
    mb.returns(j) = adv.returns(static_cast<Eigen::Index>(k));
  }
  return mb;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

[[noreturn]] void diagnostic(const Minibatch& batch, const Eigen::MatrixXd& logits, Eigen::Index col,
                             const std::string& what) {
  std::ostringstream os;
  os.precision(17);
  os << "ppo_loss: " << what << " at minibatch row " << col << "\n";
  os << "  action=" << batch.actions[static_cast<std::size_t>(col)] << " old_log_prob=" << batch.old_log_probs(col)
     << " advantage=" << batch.advantages(col) << " return=" << batch.returns(col) << "\n";
  os << "  logits=" << logits.col(col).transpose() << "\n";
  os << "  observation=" << batch.observations.col(col).transpose() << "\n";
  throw TrainingDiagnosticError(os.str());
}

}  // namespace

LossResult ppo_loss(const MlpNetwork& policy, const MlpNetwork& value_net, const Minibatch& batch,
                    const PpoConfig& config) {
  const Eigen::Index n = batch.observations.cols();
  if (n == 0) throw ContractError("ppo_loss on an empty minibatch");
  const double inv_n = 1.0 / static_cast<double>(n);
  const double eps = config.clip_epsilon;

  LossResult res;
  const ForwardCache pc = policy.forward(batch.observations);
  Eigen::MatrixXd dlogits(pc.raw.rows(), n);

  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd z = pc.raw.col(j);
    const Eigen::VectorXd lp = log_softmax(z);
    const Eigen::VectorXd p = lp.array().exp();
    const int a = batch.actions[static_cast<std::size_t>(j)];
    const double log_ratio = lp(a) - batch.old_log_probs(j);
    const double r = std::exp(log_ratio);
    if (!std::isfinite(r) || !lp.allFinite()) diagnostic(batch, pc.raw, j, "non-finite probability ratio");

    const double adv = batch.advantages(j);
    const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
    const bool unclipped_branch = r * adv <= clipped * adv;
    res.policy_loss -= std::min(r * adv, clipped * adv) * inv_n;

    const double entropy = -(p.array() * lp.array()).sum();
    res.entropy += entropy * inv_n;
    res.approx_kl += -log_ratio * inv_n;
    if (std::abs(r - 1.0) > eps) res.clip_fraction += inv_n;
    res.max_ratio_deviation = std::max(res.max_ratio_deviation, std::abs(r - 1.0));

    // d(-surrogate)/dz = -A r (e_a - p) on the unclipped branch.
    Eigen::VectorXd g = Eigen::VectorXd::Zero(z.size());
    if (unclipped_branch) {
      g = adv * r * p;
      g(a) -= adv * r;
    }
    // d(-c_e H)/dz = c_e p (log p + H)
    g.array() += config.entropy_coef * p.array() * (lp.array() + entropy);
    dlogits.col(j) = g * inv_n;
  }

  const ForwardCache vc = value_net.forward(batch.observations);
  const Eigen::RowVectorXd err = vc.raw.row(0) - batch.returns.transpose();
  res.value_loss = err.squaredNorm() * inv_n;
  const Eigen::MatrixXd dvalue = (2.0 * config.value_coef * inv_n) * err;

  res.total = res.policy_loss + config.value_coef * res.value_loss - config.entropy_coef * res.entropy;
  if (!std::isfinite(res.total)) diagnostic(batch, pc.raw, 0, "non-finite loss");
  res.policy_grad = policy.backward(pc, dlogits);
  res.value_grad = value_net.backward(vc, dvalue);
  return res;
}

EnvRunner::EnvRunner(EnvironmentSpec spec, SimParams params)
    : spec_(std::move(spec)), params_(std::move(params)), world_(spec_.geometry) {
  validate(params_);
}

void EnvRunner::reset(Rng& rng) {
  const EpisodeStart start = sample_episode(world_, spec_, params_, rng.next_u64());
  episode_.emplace(world_, params_, start.robot, start.goal);
}

Eigen::VectorXd to_vector(const Observation& obs) {
  return Eigen::Map<const Eigen::VectorXd>(obs.values.data(), static_cast<Eigen::Index>(obs.values.size()));
}

std::vector<EpisodeResult> collect_rollout(EnvRunner& env, const MlpNetwork& policy, const MlpNetwork& value_net,
                                           RolloutBuffer& buffer, Rng& rng, std::size_t steps,
                                           std::int64_t& global_step) {
  if (steps > buffer.capacity()) throw ContractError("rollout longer than buffer capacity");
  std::vector<EpisodeResult> finished;
  while (buffer.size() < steps) {
    if (!env.active()) env.reset(rng);
    Episode& ep = env.episode();

    Transition t;
    t.observation = to_vector(ep.observation());
    const Eigen::VectorXd lp = log_softmax(policy.logits(t.observation));
    const Eigen::VectorXd probs = lp.array().exp();
    t.action = static_cast<int>(rng.categorical(std::span<const double>(probs.data(), probs.size())));
    t.log_prob = lp(t.action);
    t.value = value_net.logits(t.observation)(0);

    const StepOutcome& out = ep.step(t.action);
    ++global_step;
    t.reward = out.reward;
    t.terminal = out.terminal == Terminal::crashed || out.terminal == Terminal::reached;
    t.truncated = out.terminal == Terminal::timeout;
    if (t.truncated) t.next_value = value_net.logits(to_vector(out.observation))(0);
    buffer.append(std::move(t));

    if (ep.done()) {
      finished.push_back({ep.terminal(), ep.total_reward(), ep.steps(), global_step, ep.path_length(),
                          ep.initial_distance()});
    }
  }
  Transition& last = buffer[buffer.size() - 1];
  if (!last.terminal && !last.truncated) last.next_value = value_net.logits(to_vector(env.episode().observation()))(0);
  return finished;
}

UpdateStats update(MlpNetwork& policy, MlpNetwork& value_net, RolloutBuffer& buffer, const PpoConfig& config,
                   AdamState& policy_adam, AdamState& value_adam, Rng& rng) {
  AdvantageResult adv = compute_advantages(buffer, config);
  if (config.normalize_advantages) normalize(adv.advantages);

  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto mb = static_cast<std::size_t>(config.minibatch_size);

  UpdateStats stats;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t len = std::min(mb, order.size() - start);
      const Minibatch batch = make_minibatch(buffer, adv, std::span(order).subspan(start, len));
      LossResult loss = ppo_loss(policy, value_net, batch, config);
      if (stats.minibatches == 0) stats.first_batch_ratio_deviation = loss.max_ratio_deviation;
      adam_step(policy, loss.policy_grad, policy_adam);
      adam_step(value_net, loss.value_grad, value_adam);
      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.entropy += loss.entropy;
      stats.approx_kl += loss.approx_kl;
      stats.clip_fraction += loss.clip_fraction;
      ++stats.minibatches;
    }
  }
  const double inv = 1.0 / stats.minibatches;
  stats.policy_loss *= inv;
  stats.value_loss *= inv;
  stats.entropy *= inv;
  stats.approx_kl *= inv;
  stats.clip_fraction *= inv;
  buffer.clear();
  return stats;
}

}  // namespace safenav
