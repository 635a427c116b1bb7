#include "safenav/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "safenav/envsuite.hpp"

namespace safenav {

using nlohmann::json;

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  if (name == "desk") {
    c.total_budget = kDeskTotalBudget;
    c.eval.episodes = 200;
    c.verify.budget.max_depth = 14;
  } else if (name == "paper") {
    c.total_budget = kPaperTotalBudget;
    c.eval.episodes = 1000;
    c.verify.budget.max_depth = 20;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (desk|paper)");
  }
  c.preset = std::string(name);
  c.n_seeds = 3;
  return c;
}

namespace {

json to_json(const RunConfig& c) {
  const auto& p = c.ppo;
  const auto& s = c.sim;
  const auto& b = c.verify.budget;
  return json{
      {"preset", c.preset},
      {"seed", c.seed},
      {"n_seeds", c.n_seeds},
      {"threads", c.threads},
      {"out", c.out.string()},
      {"env_dir", c.env_dir.string()},
      {"regime", std::string(to_string(c.regime))},
      {"total_budget", c.total_budget},
      {"early_advance", c.early_advance},
      {"advance_threshold", c.advance_threshold},
      {"curve_interval", c.curve_interval},
      {"success_window", c.success_window},
      {"ppo",
       {{"gamma", p.gamma},
        {"clip_epsilon", p.clip_epsilon},
        {"lr", p.lr},
        {"horizon", p.horizon},
        {"epochs", p.epochs},
        {"minibatch_size", p.minibatch_size},
        {"value_coef", p.value_coef},
        {"entropy_coef", p.entropy_coef},
        {"advantage_mode", p.advantage_mode == AdvantageMode::paper ? "paper" : "gae"},
        {"gae_lambda", p.gae_lambda},
        {"normalize_advantages", p.normalize_advantages}}},
      {"sim",
       {{"step_length", s.step_length},
        {"turn_angle_deg", s.turn_angle_deg},
        {"goal_radius", s.goal_radius},
        {"robot_radius", s.robot_radius},
        {"max_range", s.max_range},
        {"max_steps", s.max_steps},
        {"n_rays", s.n_rays},
        {"reward_crash", s.reward_crash},
        {"reward_reach", s.reward_reach},
        {"progress_gain", s.progress_gain},
        {"translate_angles_deg", s.translate_angles_deg}}},
      {"eval", {{"episodes", c.eval.episodes}, {"seeds", c.eval.seeds}, {"envs", c.eval.envs}}},
      {"verify",
       {{"mode", std::string(to_string(c.verify.mode))},
        {"max_depth", b.max_depth},
        {"max_regions", b.max_regions},
        {"resolution", b.resolution},
        {"properties", c.verify.properties.string()}}},
  };
}

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  if (!given.is_object()) throw ConfigError(prefix.empty() ? "config must be a JSON object" : prefix + ": expected an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (known[key].is_object()) reject_unknown(value, known[key], path);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& prefix) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + prefix + key + "': " + e.what());
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  std::string regime, out, env_dir, mode, adv, properties;
  read(j, "preset", c.preset, "");
  read(j, "seed", c.seed, "");
  read(j, "n_seeds", c.n_seeds, "");
  read(j, "threads", c.threads, "");
  read(j, "out", out, "");
  read(j, "env_dir", env_dir, "");
  read(j, "regime", regime, "");
  read(j, "total_budget", c.total_budget, "");
  read(j, "early_advance", c.early_advance, "");
  read(j, "advance_threshold", c.advance_threshold, "");
  read(j, "curve_interval", c.curve_interval, "");
  read(j, "success_window", c.success_window, "");
  const json& p = j.at("ppo");
  read(p, "gamma", c.ppo.gamma, "ppo.");
  read(p, "clip_epsilon", c.ppo.clip_epsilon, "ppo.");
  read(p, "lr", c.ppo.lr, "ppo.");
  read(p, "horizon", c.ppo.horizon, "ppo.");
  read(p, "epochs", c.ppo.epochs, "ppo.");
  read(p, "minibatch_size", c.ppo.minibatch_size, "ppo.");
  read(p, "value_coef", c.ppo.value_coef, "ppo.");
  read(p, "entropy_coef", c.ppo.entropy_coef, "ppo.");
  read(p, "advantage_mode", adv, "ppo.");
  read(p, "gae_lambda", c.ppo.gae_lambda, "ppo.");
  read(p, "normalize_advantages", c.ppo.normalize_advantages, "ppo.");
  const json& s = j.at("sim");
  read(s, "step_length", c.sim.step_length, "sim.");
  read(s, "turn_angle_deg", c.sim.turn_angle_deg, "sim.");
  read(s, "goal_radius", c.sim.goal_radius, "sim.");
  read(s, "robot_radius", c.sim.robot_radius, "sim.");
  read(s, "max_range", c.sim.max_range, "sim.");
  read(s, "max_steps", c.sim.max_steps, "sim.");
  read(s, "n_rays", c.sim.n_rays, "sim.");
  read(s, "reward_crash", c.sim.reward_crash, "sim.");
  read(s, "reward_reach", c.sim.reward_reach, "sim.");
  read(s, "progress_gain", c.sim.progress_gain, "sim.");
  read(s, "translate_angles_deg", c.sim.translate_angles_deg, "sim.");
  const json& e = j.at("eval");
  read(e, "episodes", c.eval.episodes, "eval.");
  read(e, "seeds", c.eval.seeds, "eval.");
  read(e, "envs", c.eval.envs, "eval.");
  const json& v = j.at("verify");
  read(v, "mode", mode, "verify.");
  read(v, "max_depth", c.verify.budget.max_depth, "verify.");
  read(v, "max_regions", c.verify.budget.max_regions, "verify.");
  read(v, "resolution", c.verify.budget.resolution, "verify.");
  read(v, "properties", properties, "verify.");

  c.out = out;
  c.env_dir = env_dir;
  c.verify.properties = properties;
  try {
    c.regime = parse_regime(regime);
    c.verify.mode = parse_bound_mode(mode);
  } catch (const ContractError& err) {
    throw ConfigError(err.what());
  }
  if (adv == "paper") {
    c.ppo.advantage_mode = AdvantageMode::paper;
  } else if (adv == "gae") {
    c.ppo.advantage_mode = AdvantageMode::gae;
  } else {
    throw ConfigError("config key 'ppo.advantage_mode': expected paper or gae");
  }
  return c;
}

}  // namespace

RunConfig merge_config(const RunConfig& base, const std::string& json_text, const std::string& source) {
  json given;
  try {
    given = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  json merged = to_json(base);
  reject_unknown(given, merged, "");
  merged.merge_patch(given);
  RunConfig c = from_json(merged);
  validate(c);
  return c;
}

RunConfig load_config(const RunConfig& base, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return merge_config(base, ss.str(), path.string());
}

std::string config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

void write_config(const RunConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << config_to_json(config);
}

void validate(const RunConfig& c) {
  try {
    validate(c.ppo);
    validate(c.sim);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (c.n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  if (c.total_budget < 1) throw ConfigError("total_budget must be positive");
  if (c.curve_interval < 1) throw ConfigError("curve_interval must be positive");
  if (c.success_window < 1) throw ConfigError("success_window must be positive");
  if (!(c.advance_threshold > 0.0 && c.advance_threshold <= 1.0)) throw ConfigError("advance_threshold must be in (0, 1]");
  if (c.eval.episodes < 1) throw ConfigError("eval.episodes must be positive");
  if (c.eval.seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  const auto& b = c.verify.budget;
  if (b.max_depth < 0 || b.max_depth > 60) throw ConfigError("verify.max_depth must be in [0, 60]");
  if (b.max_regions < 1) throw ConfigError("verify.max_regions must be positive");
  if (!(b.resolution >= 0.0)) throw ConfigError("verify.resolution must be non-negative");
}

std::vector<std::string> eval_envs(const RunConfig& config) {
  if (!config.eval.envs.empty()) return config.eval.envs;
  const auto names = test_env_names();
  return {names.begin(), names.end()};
}

std::filesystem::path env_dir(const RunConfig& config) {
  return config.env_dir.empty() ? default_env_dir() : config.env_dir;
}

}  // namespace safenav
