#include "safenav/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace safenav {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::e2e: return "e2e";
    case Regime::tol: return "tol";
    case Regime::finetune: return "finetune";
  }
  return "unknown";
}

Regime parse_regime(std::string_view s) {
  if (s == "e2e") return Regime::e2e;
  if (s == "tol") return Regime::tol;
  if (s == "finetune") return Regime::finetune;
  throw ContractError("unknown regime '" + std::string(s) + "' (expected e2e, tol or finetune)");
}

TrainingPlan default_plan(Regime regime, std::int64_t total_budget, std::uint64_t seed) {
  if (total_budget < 1) throw ContractError("total budget must be positive");
  TrainingPlan plan;
  plan.regime = regime;
  plan.total_budget = total_budget;
  plan.seed = seed;
  if (regime == Regime::e2e) {
    plan.stages = {{"finalEnv", total_budget, 0}};
    return plan;
  }
  const std::int64_t base = total_budget / 6;
  const std::int64_t inter = total_budget * 2 / 6;
  const std::int64_t final_budget = total_budget - base - inter;
  const bool tol = regime == Regime::tol;
  plan.stages = {{"baseEnv", base, 0}, {"intEnv", inter, tol ? 1 : 0}, {"finalEnv", final_budget, tol ? 2 : 0}};
  return plan;
}

void validate(const TrainingPlan& plan, int hidden_layers) {
  if (plan.stages.empty()) throw ContractError("plan has no stages");
  std::int64_t sum = 0;
  for (const Stage& s : plan.stages) {
    if (s.budget < 1) throw ContractError("stage '" + s.env + "' has a non-positive budget");
    if (s.freeze_on_entry < 0 || s.freeze_on_entry > hidden_layers) {
      throw ContractError("stage '" + s.env + "' freezes more layers than the network has");
    }
    sum += s.budget;
  }
  if (sum != plan.total_budget) throw ContractError("stage budgets do not sum to total_budget");
  if (plan.regime == Regime::e2e && (plan.stages.size() != 1 || plan.stages[0].freeze_on_entry != 0)) {
    throw ContractError("e2e plans have exactly one stage without freezing");
  }
  if (plan.regime == Regime::finetune) {
    for (const Stage& s : plan.stages) {
      if (s.freeze_on_entry != 0) throw ContractError("finetune plans never freeze layers");
    }
  }
  if (plan.regime == Regime::tol) {
    for (std::size_t k = 0; k < plan.stages.size(); ++k) {
      if (plan.stages[k].freeze_on_entry != static_cast<int>(k)) {
        throw ContractError("tol stage k must freeze exactly k-1 leading hidden layers");
      }
    }
  }
}

std::vector<std::vector<std::int64_t>> rollout_schedule(const TrainingPlan& plan, int horizon) {
  const std::int64_t total = plan.total_budget;
  const std::int64_t updates = std::max<std::int64_t>(1, (total + horizon - 1) / horizon);
  const std::size_t n = plan.stages.size();

  std::vector<std::int64_t> share(n);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double quota = static_cast<double>(updates) * static_cast<double>(plan.stages[k].budget) /
                         static_cast<double>(total);
    share[k] = static_cast<std::int64_t>(std::floor(quota));
    assigned += share[k];
    remainders.emplace_back(quota - std::floor(quota), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < updates; ++i, ++assigned) ++share[remainders[i % n].second];
  for (std::size_t k = 0; k < n; ++k) {
    share[k] = std::clamp<std::int64_t>(share[k], 1, plan.stages[k].budget);
  }
  // Stages lifted to one update give it back from the largest share.
  for (std::int64_t excess = std::accumulate(share.begin(), share.end(), std::int64_t{0}) - updates; excess > 0;
       --excess) {
    const auto big = std::max_element(share.begin(), share.end());
    if (*big <= 1) break;
    --*big;
  }

  std::vector<std::vector<std::int64_t>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t b = plan.stages[k].budget;
    const std::int64_t u = share[k];
    for (std::int64_t i = 0; i < u; ++i) out[k].push_back(b / u + (i < b % u ? 1 : 0));
  }
  return out;
}

double rolling_success(std::span<const Terminal> outcomes, std::size_t window) {
  const std::size_t n = std::min(window, outcomes.size());
  if (n == 0) return 0.0;
  const auto tail = outcomes.subspan(outcomes.size() - n);
  const auto hits = std::count(tail.begin(), tail.end(), Terminal::reached);
  return static_cast<double>(hits) / static_cast<double>(n);
}

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_weights(cp.policy, dir / "policy.bin");
  save_weights(cp.value, dir / "value.bin");
  save_adam(cp.policy_adam, dir / "policy_adam.bin");
  save_adam(cp.value_adam, dir / "value_adam.bin");
  nlohmann::json state{{"format_version", 1},
                       {"step", cp.step},
                       {"stage_index", cp.stage_index},
                       {"updates_done", cp.updates_done},
                       {"rng_state", cp.rng_state}};
  std::ofstream(dir / "state.json") << state.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint cp;
  cp.policy = load_weights(dir / "policy.bin");
  cp.value = load_weights(dir / "value.bin");
  cp.policy_adam = load_adam(dir / "policy_adam.bin");
  cp.value_adam = load_adam(dir / "value_adam.bin");
  std::ifstream in(dir / "state.json");
  if (!in) throw FormatError((dir / "state.json").string() + ": cannot open");
  try {
    const auto state = nlohmann::json::parse(in);
    if (state.at("format_version").get<int>() != 1) throw FormatError("unsupported checkpoint version");
    cp.step = state.at("step").get<std::int64_t>();
    cp.stage_index = state.at("stage_index").get<int>();
    cp.updates_done = state.at("updates_done").get<std::uint64_t>();
    cp.rng_state = state.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "state.json").string() + ": " + e.what());
  }
  return cp;
}

// ---- training --------------------------------------------------------------

namespace {

class CurveTracker {
 public:
  CurveTracker(std::int64_t interval, std::size_t window, std::int64_t step)
      : interval_(interval), window_(window), next_((step / interval + 1) * interval) {}

  void reset_window() {
    outcomes_.clear();
    returns_.clear();
  }

  void add(const EpisodeResult& e, int stage, std::vector<CurvePoint>& out) {
    while (next_ < e.end_step) emit(stage, out);
    outcomes_.push_back(e.outcome);
    returns_.push_back(e.total_reward);
    if (outcomes_.size() > window_) {
      outcomes_.pop_front();
      returns_.pop_front();
    }
  }

  void flush(std::int64_t step, int stage, std::vector<CurvePoint>& out) {
    while (next_ <= step) emit(stage, out);
  }

  double success() const {
    const std::vector<Terminal> v(outcomes_.begin(), outcomes_.end());
    return rolling_success(v, window_);
  }
  std::size_t size() const { return outcomes_.size(); }

 private:
  void emit(int stage, std::vector<CurvePoint>& out) {
    const double mean =
        returns_.empty() ? 0.0 : std::accumulate(returns_.begin(), returns_.end(), 0.0) / returns_.size();
    out.push_back({next_, stage, success(), mean});
    next_ += interval_;
  }

  std::int64_t interval_;
  std::size_t window_;
  std::int64_t next_;
  std::deque<Terminal> outcomes_;
  std::deque<double> returns_;
};

}  // namespace

TrainingResult run_training(const TrainingPlan& plan, const TrainingOptions& options, const Checkpoint* resume) {
  validate(options.ppo);
  validate(options.sim);
  validate(plan, 3);

  // Every environment must load before any training happens.
  std::vector<EnvironmentSpec> envs;
  for (const Stage& s : plan.stages) envs.push_back(load_named_environment(options.env_dir, s.env));

  const auto schedule = rollout_schedule(plan, options.ppo.horizon);
  const AdamConfig adam{options.ppo.lr, 0.9, 0.999, 1e-8};
  const int obs = options.sim.observation_size();

  TrainingResult result;
  Rng rng(plan.seed);
  Checkpoint state;
  if (resume) {
    state = *resume;
    rng.set_state(state.rng_state);
    require_architecture(state.policy, MlpNetwork::policy_shape(obs, options.sim.n_actions()), Head::softmax_policy);
    require_architecture(state.value, MlpNetwork::value_shape(obs), Head::scalar_value);
  } else {
    state.policy = MlpNetwork::create(MlpNetwork::policy_shape(obs, options.sim.n_actions()), Head::softmax_policy, rng);
    state.value = MlpNetwork::create(MlpNetwork::value_shape(obs), Head::scalar_value, rng);
    state.policy_adam = AdamState::for_network(state.policy, adam);
    state.value_adam = AdamState::for_network(state.value, adam);
  }

  const bool write = !options.out_dir.empty();
  if (write) std::filesystem::create_directories(options.out_dir);

  CurveTracker curve(options.curve_interval, options.success_window, state.step);
  RolloutBuffer buffer(static_cast<std::size_t>(options.ppo.horizon));
  std::vector<std::int64_t> carried;

  for (int s = state.stage_index; s < static_cast<int>(plan.stages.size()); ++s) {
    const auto us = static_cast<std::size_t>(s);
    state.stage_index = s;
    state.rng_state = rng.state();
    result.stage_checkpoints.push_back(state);
    if (write) save_checkpoint(state, options.out_dir / "checkpoints" / ("stage_" + std::to_string(s)));

    const int k = plan.stages[us].freeze_on_entry;
    freeze_layers(state.policy, k);
    freeze_layers(state.value, k);
    for (int layer = 0; layer < k; ++layer) {
      state.policy_adam.reset_layer(layer);
      state.value_adam.reset_layer(layer);
    }

    EnvRunner runner(envs[us], options.sim);
    curve.reset_window();
    buffer.clear();

    std::vector<std::int64_t> chunks = carried;
    carried.clear();
    chunks.insert(chunks.end(), schedule[us].begin(), schedule[us].end());
    buffer.set_capacity(static_cast<std::size_t>(*std::max_element(chunks.begin(), chunks.end())));

    for (std::size_t c = 0; c < chunks.size(); ++c) {
      const auto episodes = collect_rollout(runner, state.policy, state.value, buffer, rng,
                                            static_cast<std::size_t>(chunks[c]), state.step);
      for (const auto& e : episodes) curve.add(e, s, result.curve);
      curve.flush(state.step, s, result.curve);
      result.episodes += static_cast<std::int64_t>(episodes.size());

      double reward_sum = 0.0;
      for (const auto& t : buffer.records()) reward_sum += t.reward;

      UpdateRecord rec;
      rec.step = state.step;
      rec.stage = s;
      rec.rollout_steps = static_cast<int>(buffer.size());
      rec.episodes = static_cast<int>(episodes.size());
      rec.mean_reward = reward_sum / static_cast<double>(buffer.size());
      rec.stats = update(state.policy, state.value, buffer, options.ppo, state.policy_adam, state.value_adam, rng);
      rec.success_rate = curve.success();
      ++state.updates_done;
      result.updates.push_back(rec);

      if (options.on_update && !options.on_update(rec, state.policy, state.value)) {
        s = static_cast<int>(plan.stages.size());
        break;
      }
      const bool can_advance = plan.early_advance && us + 1 < plan.stages.size();
      if (can_advance && curve.size() >= options.success_window && curve.success() >= plan.advance_threshold) {
        carried.assign(chunks.begin() + static_cast<std::ptrdiff_t>(c) + 1, chunks.end());
        break;
      }
    }
  }

  state.stage_index = static_cast<int>(plan.stages.size());
  state.rng_state = rng.state();
  result.final = state;
  if (write) {
    save_checkpoint(state, options.out_dir / "final");
    write_curve_csv(result.curve, options.out_dir / "curve.csv");
    write_training_log_csv(result.updates, options.out_dir / "training_log.csv");
  }
  return result;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void write_curve_csv(std::span<const CurvePoint> curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,stage,rolling_success,mean_reward\n";
  for (const auto& p : curve) {
    out << p.step << ',' << p.stage << ',' << fmt(p.rolling_success) << ',' << fmt(p.mean_reward) << '\n';
  }
}

void write_training_log_csv(std::span<const UpdateRecord> updates, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,stage,rollout_steps,episodes,mean_reward,success_rate,policy_loss,value_loss,entropy,approx_kl,"
         "clip_fraction\n";
  for (const auto& u : updates) {
    out << u.step << ',' << u.stage << ',' << u.rollout_steps << ',' << u.episodes << ',' << fmt(u.mean_reward)
        << ',' << fmt(u.success_rate) << ',' << fmt(u.stats.policy_loss) << ',' << fmt(u.stats.value_loss) << ','
        << fmt(u.stats.entropy) << ',' << fmt(u.stats.approx_kl) << ',' << fmt(u.stats.clip_fraction) << '\n';
  }
}

}  // namespace safenav
