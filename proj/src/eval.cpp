#include "safenav/eval.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "safenav/ppo.hpp"
#include "safenav/rng.hpp"

namespace safenav {

int greedy_action(const MlpNetwork& policy, const Observation& obs) {
  const Eigen::VectorXd z = policy.logits(to_vector(obs));
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (z(i) > z(best)) best = i;
  }
  return static_cast<int>(best);
}

std::vector<EpisodeRecord> run_episodes(const MlpNetwork& policy, const EnvironmentSpec& env, const SimParams& sim,
                                        std::size_t episodes, std::span<const std::uint64_t> seeds) {
  const World world(env.geometry);
  std::vector<EpisodeRecord> out;
  out.reserve(episodes * seeds.size());
  for (std::uint64_t seed : seeds) {
    for (std::size_t e = 0; e < episodes; ++e) {
      const std::uint64_t spawn = mix_seed(seed, e);
      const EpisodeStart start = sample_episode(world, env, sim, spawn);
      Episode ep(world, sim, start.robot, start.goal);
      while (!ep.done()) ep.step(greedy_action(policy, ep.observation()));
      out.push_back({env.name, spawn, ep.terminal(), ep.path_length(), ep.initial_distance(), ep.steps()});
    }
  }
  return out;
}

EvalSummary summarize(const std::string& env, std::span<const EpisodeRecord> records,
                      std::span<const std::uint64_t> seeds) {
  EvalSummary s;
  s.env = env;
  s.episodes = records.size();
  s.seeds.assign(seeds.begin(), seeds.end());
  if (records.empty()) return s;
  std::size_t reached = 0, crashed = 0, timeout = 0;
  double deviation = 0.0;
  for (const auto& r : records) {
    switch (r.outcome) {
      case Terminal::reached:
        ++reached;
        deviation += r.path_length / r.initial_distance;
        break;
      case Terminal::crashed: ++crashed; break;
      default: ++timeout; break;
    }
  }
  const double n = static_cast<double>(records.size());
  s.success_rate = static_cast<double>(reached) / n;
  s.collision_rate = static_cast<double>(crashed) / n;
  s.timeout_rate = static_cast<double>(timeout) / n;
  s.mean_deviation = reached ? deviation / static_cast<double>(reached) : 0.0;
  return s;
}

EvalSummary run_eval(const MlpNetwork& policy, const EnvironmentSpec& env, const SimParams& sim,
                     std::size_t episodes, std::span<const std::uint64_t> seeds, std::vector<EpisodeRecord>* records) {
  auto recs = run_episodes(policy, env, sim, episodes, seeds);
  EvalSummary s = summarize(env.name, recs, seeds);
  if (records) *records = std::move(recs);
  return s;
}

std::vector<GainRow> gain_table(const std::map<std::string, std::map<std::string, EvalSummary>>& summaries,
                                std::span<const std::string> envs) {
  const auto base = summaries.find("e2e");
  if (base == summaries.end()) throw ContractError("gain_table needs e2e summaries");
  std::vector<GainRow> rows;
  for (const auto& [regime, by_env] : summaries) {
    if (regime == "e2e") continue;
    GainRow row;
    row.regime = regime;
    for (const std::string& env : envs) {
      const double gain = 100.0 * (base->second.at(env).collision_rate - by_env.at(env).collision_rate);
      row.per_env.emplace_back(env, gain);
      row.total += gain;
    }
    if (!envs.empty()) row.total /= static_cast<double>(envs.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(values.size()));
  return m;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void write_episodes_csv(std::span<const EpisodeRecord> records, const std::string& label,
                        const std::filesystem::path& path, bool append) {
  const bool header = !append || !std::filesystem::exists(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (header) out << "model,env,seed,outcome,path_length,initial_distance,steps\n";
  for (const auto& r : records) {
    out << label << ',' << r.env << ',' << r.seed << ',' << to_string(r.outcome) << ',' << fmt(r.path_length) << ','
        << fmt(r.initial_distance) << ',' << r.steps << '\n';
  }
}

void write_gain_csv(std::span<const GainRow> rows, std::span<const std::string> envs,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method";
  for (const auto& e : envs) out << ',' << e;
  out << ",tot_avg_gain\n";
  for (const auto& row : rows) {
    out << row.regime;
    for (const auto& [env, g] : row.per_env) out << ',' << fmt(g);
    out << ',' << fmt(row.total) << '\n';
  }
}

}  // namespace safenav
