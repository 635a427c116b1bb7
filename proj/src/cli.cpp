#include "safenav/cli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "safenav/envsuite.hpp"

namespace safenav {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

TrainingPlan plan_for(const RunConfig& c) {
  TrainingPlan plan = default_plan(c.regime, c.total_budget, c.seed);
  plan.early_advance = c.early_advance;
  plan.advance_threshold = c.advance_threshold;
  return plan;
}

MlpNetwork load_policy(const RunConfig& c, const std::filesystem::path& path) {
  MlpNetwork net = load_weights(path);
  require_architecture(net, MlpNetwork::policy_shape(c.sim.observation_size(), c.sim.n_actions()), Head::softmax_policy);
  return net;
}

// Runs jobs on up to `threads` workers; the first failure is rethrown.
void run_jobs(std::vector<std::function<void()>>& jobs, int threads) {
  if (threads <= 1 || jobs.size() <= 1) {
    for (auto& job : jobs) job();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> workers;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(threads), jobs.size());
  for (std::size_t w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        try {
          jobs[i]();
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::string> groups_of(const std::vector<ModelEntry>& models) {
  std::vector<std::string> groups;
  for (const auto& m : models) {
    if (std::find(groups.begin(), groups.end(), m.group) == groups.end()) groups.push_back(m.group);
  }
  return groups;
}

}  // namespace

ModelEntry parse_model_arg(const std::string& arg) {
  ModelEntry m;
  const auto eq = arg.find('=');
  if (eq == std::string::npos) {
    m.weights = arg;
    m.group = m.weights.stem().string();
  } else {
    m.group = arg.substr(0, eq);
    m.weights = arg.substr(eq + 1);
    if (m.group.empty()) throw ConfigError("empty group in weight argument '" + arg + "'");
  }
  if (m.weights.empty()) throw ConfigError("empty weight path in '" + arg + "'");
  m.label = m.weights.string();
  return m;
}

TrainOutput cmd_train(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* log) {
  validate(config);
  TrainingOptions opt;
  opt.ppo = config.ppo;
  opt.sim = config.sim;
  opt.env_dir = env_dir(config);
  opt.out_dir = out_dir;
  opt.curve_interval = config.curve_interval;
  opt.success_window = config.success_window;
  const TrainingPlan plan = plan_for(config);
  if (log) {
    const std::int64_t every = std::max<std::int64_t>(config.total_budget / 10, 1);
    auto next = std::make_shared<std::int64_t>(every);
    const std::string tag = std::string(to_string(config.regime)) + " seed " + std::to_string(config.seed);
    opt.on_update = [log, every, next, tag](const UpdateRecord& r, const MlpNetwork&, const MlpNetwork&) {
      if (r.step >= *next) {
        *log << tag << ": step " << r.step << " stage " << r.stage << " rolling success " << r.success_rate << '\n';
        while (*next <= r.step) *next += every;
      }
      return true;
    };
  }
  std::filesystem::create_directories(out_dir);
  write_config(config, out_dir / "config.json");
  TrainOutput out;
  out.dir = out_dir;
  out.result = run_training(plan, opt);
  return out;
}

std::vector<ModelSummaries> cmd_eval(const RunConfig& config, const std::vector<ModelEntry>& models,
                                     const std::filesystem::path& out_dir, std::ostream* log) {
  validate(config);
  if (models.empty()) throw ConfigError("eval needs at least one weight file");
  const std::vector<std::string> envs = eval_envs(config);
  std::vector<EnvironmentSpec> specs;
  for (const auto& e : envs) specs.push_back(load_named_environment(env_dir(config), e));

  std::vector<MlpNetwork> nets;
  for (const auto& m : models) nets.push_back(load_policy(config, m.weights));

  std::vector<ModelSummaries> results(models.size());
  std::vector<std::vector<std::vector<EpisodeRecord>>> records(models.size(),
                                                               std::vector<std::vector<EpisodeRecord>>(envs.size()));
  std::vector<std::function<void()>> jobs;
  for (std::size_t m = 0; m < models.size(); ++m) {
    results[m].model = models[m];
    results[m].per_env.resize(envs.size());
    for (std::size_t e = 0; e < envs.size(); ++e) {
      jobs.emplace_back([&, m, e] {
        results[m].per_env[e] =
            run_eval(nets[m], specs[e], config.sim, config.eval.episodes, config.eval.seeds, &records[m][e]);
      });
    }
  }
  run_jobs(jobs, config.threads);

  std::filesystem::create_directories(out_dir);
  write_config(config, out_dir / "config.json");
  const auto episodes_path = out_dir / "episodes.csv";
  std::filesystem::remove(episodes_path);
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t e = 0; e < envs.size(); ++e) write_episodes_csv(records[m][e], models[m].label, episodes_path, true);
  }

  {
    std::ofstream out(out_dir / "summary.csv");
    out << "group,model,env,episodes,success_rate,collision_rate,timeout_rate,mean_deviation\n";
    for (const auto& r : results) {
      for (const auto& s : r.per_env) {
        out << r.model.group << ',' << r.model.label << ',' << s.env << ',' << s.episodes << ',' << fmt(s.success_rate)
            << ',' << fmt(s.collision_rate) << ',' << fmt(s.timeout_rate) << ',' << fmt(s.mean_deviation) << '\n';
      }
    }
  }

  // Group means over models (seeds).
  std::map<std::string, std::map<std::string, EvalSummary>> by_group;
  {
    std::ofstream out(out_dir / "group_summary.csv");
    out << "group,env,models,success_mean,success_std,collision_mean,collision_std,deviation_mean,deviation_std\n";
    for (const auto& g : groups_of(models)) {
      for (std::size_t e = 0; e < envs.size(); ++e) {
        std::vector<double> succ, coll, dev;
        for (const auto& r : results) {
          if (r.model.group != g) continue;
          succ.push_back(r.per_env[e].success_rate);
          coll.push_back(r.per_env[e].collision_rate);
          dev.push_back(r.per_env[e].mean_deviation);
        }
        const MeanStd s = mean_std(succ), c = mean_std(coll), d = mean_std(dev);
        out << g << ',' << envs[e] << ',' << succ.size() << ',' << fmt(s.mean) << ',' << fmt(s.std) << ','
            << fmt(c.mean) << ',' << fmt(c.std) << ',' << fmt(d.mean) << ',' << fmt(d.std) << '\n';
        EvalSummary agg;
        agg.env = envs[e];
        agg.success_rate = s.mean;
        agg.collision_rate = c.mean;
        agg.mean_deviation = d.mean;
        by_group[g][envs[e]] = agg;
      }
    }
  }
  if (by_group.count("e2e")) write_gain_csv(gain_table(by_group, envs), envs, out_dir / "gains.csv");
  if (log) *log << "eval: " << models.size() << " model(s) x " << envs.size() << " env(s) -> " << out_dir.string() << '\n';
  return results;
}

SuiteResult cmd_verify(const RunConfig& config, const std::vector<ModelEntry>& models,
                       const std::filesystem::path& out_dir, std::ostream* log) {
  validate(config);
  if (models.empty()) throw ConfigError("verify needs at least one weight file");
  std::vector<SafetyProperty> props;
  if (config.verify.properties.empty()) {
    props = builtin_properties(config.sim);
  } else {
    props = load_properties(config.verify.properties);
  }
  for (const auto& m : models) load_policy(config, m.weights);

  // One job per model; results merged in input order.
  std::vector<SuiteResult> parts(models.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t m = 0; m < models.size(); ++m) {
    jobs.emplace_back([&, m] {
      parts[m] = verify_suite(std::span(&models[m], 1), props, config.verify.budget, config.verify.mode);
    });
  }
  run_jobs(jobs, config.threads);
  SuiteResult suite;
  suite.groups = groups_of(models);
  for (const auto& p : props) suite.properties.push_back(p.name);
  for (auto& part : parts) {
    suite.models.push_back(part.models.front());
    suite.reports.push_back(std::move(part.reports.front()));
  }

  std::filesystem::create_directories(out_dir);
  write_config(config, out_dir / "config.json");
  write_verdicts_csv(suite, out_dir / "verdicts.csv");
  write_violation_table_csv(suite, out_dir / "violation_table.csv");
  if (log) {
    for (const auto& g : suite.groups) {
      const auto [mean, std] = suite_stat(suite, g, -1);
      *log << "verify: " << g << " mean violation " << 100.0 * mean << "% +- " << 100.0 * std << '\n';
    }
  }
  return suite;
}

ReproOutput cmd_repro(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* log) {
  validate(config);
  ReproOutput out;
  out.root = out_dir;
  std::filesystem::create_directories(out_dir);
  write_config(config, out_dir / "config.json");

  struct Job {
    RunConfig config;
    std::filesystem::path dir;
  };
  std::vector<Job> train;
  for (Regime regime : {Regime::e2e, Regime::tol, Regime::finetune}) {
    for (int i = 0; i < config.n_seeds; ++i) {
      RunConfig c = config;
      c.regime = regime;
      c.seed = config.seed + static_cast<std::uint64_t>(i);
      const auto dir = out_dir / "train" / std::string(to_string(regime)) / ("seed_" + std::to_string(c.seed));
      train.push_back({c, dir});
      out.models.push_back({std::string(to_string(regime)), std::string(to_string(regime)) + "/seed_" +
                                                               std::to_string(c.seed),
                            dir / "final" / "policy.bin"});
    }
  }
  std::mutex log_mu;
  std::vector<std::function<void()>> jobs;
  for (const Job& j : train) {
    jobs.emplace_back([&, j] {
      cmd_train(j.config, j.dir);
      if (log) {
        std::lock_guard lock(log_mu);
        *log << "train: " << to_string(j.config.regime) << " seed " << j.config.seed << " done\n";
      }
    });
  }
  run_jobs(jobs, config.threads);

  out.eval = cmd_eval(config, out.models, out_dir / "eval", log);
  out.verify = cmd_verify(config, out.models, out_dir / "verify", log);
  return out;
}

std::vector<std::filesystem::path> list_csv_files(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(std::filesystem::relative(entry.path(), root));
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string regime;
  std::string mode;
  std::size_t episodes = 0;
  int budget_depth = -1;
  int threads = 0;
  std::int64_t budget = 0;
  std::string env_dir;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--env-dir", f.env_dir, "Environment directory");
}

RunConfig resolve(RunConfig base, const Flags& f, const CLI::App* cmd) {
  if (!f.config.empty()) base = load_config(base, f.config);
  auto given = [cmd](const char* name) { return cmd->get_option_no_throw(name) && cmd->count(name) > 0; };
  if (given("--seed")) base.seed = f.seed;
  if (given("--out")) base.out = f.out;
  if (given("--threads")) base.threads = f.threads;
  if (given("--env-dir")) base.env_dir = f.env_dir;
  if (given("--regime")) {
    try {
      base.regime = parse_regime(f.regime);
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }
  if (given("--mode")) {
    try {
      base.verify.mode = parse_bound_mode(f.mode);
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }
  if (given("--episodes")) base.eval.episodes = f.episodes;
  if (given("--budget-depth")) base.verify.budget.max_depth = f.budget_depth;
  if (given("--budget")) base.total_budget = f.budget;
  validate(base);
  return base;
}

EnvironmentSpec load_env_arg(const std::string& arg, const RunConfig& c) {
  if (std::filesystem::exists(arg) || std::filesystem::path(arg).extension() == ".json") return load_environment(arg);
  return load_named_environment(env_dir(c), arg);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Safe navigation: environments, PPO curriculum training, evaluation and verification"};
  app.require_subcommand(1);
  Flags f;

  std::string env_action, env_arg;
  auto* env = app.add_subcommand("env", "Inspect, validate or measure an environment spec");
  env->add_option("action", env_action, "inspect|validate|metrics")->required()->check(
      CLI::IsMember({"inspect", "validate", "metrics"}));
  env->add_option("spec", env_arg, "Spec file or environment name")->required();
  add_common(env, f);

  auto* train = app.add_subcommand("train", "Train one regime");
  add_common(train, f);
  train->add_option("--regime", f.regime, "e2e|tol|finetune");
  train->add_option("--budget", f.budget, "Total environment steps")->check(CLI::PositiveNumber);

  std::vector<std::string> weights, envs;
  std::vector<std::uint64_t> eval_seeds;
  auto* eval = app.add_subcommand("eval", "Evaluate policies on environments");
  add_common(eval, f);
  eval->add_option("--weights", weights, "[group=]policy.bin")->required();
  eval->add_option("--envs", envs, "Environment names")->delimiter(',');
  eval->add_option("--eval-seeds", eval_seeds, "Evaluation seeds")->delimiter(',');
  eval->add_option("--episodes", f.episodes, "Episodes per seed")->check(CLI::PositiveNumber);

  std::string properties;
  auto* verify = app.add_subcommand("verify", "Verify safety properties of policies");
  add_common(verify, f);
  verify->add_option("--weights", weights, "[group=]policy.bin")->required();
  verify->add_option("--properties", properties, "Property JSON file")->check(CLI::ExistingFile);
  verify->add_option("--mode", f.mode, "interval|linear_relax");
  verify->add_option("--budget-depth", f.budget_depth, "Maximum bisection depth");

  std::string preset;
  auto* repro = app.add_subcommand("repro", "Train, evaluate and verify all regimes");
  repro->add_option("preset", preset, "desk|paper")->required()->check(CLI::IsMember({"desk", "paper"}));
  add_common(repro, f);
  repro->add_option("--episodes", f.episodes, "Episodes per seed")->check(CLI::PositiveNumber);
  repro->add_option("--budget-depth", f.budget_depth, "Maximum bisection depth");
  repro->add_option("--mode", f.mode, "interval|linear_relax");
  repro->add_option("--budget", f.budget, "Total environment steps per run")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (env->parsed()) {
      const RunConfig c = resolve(RunConfig{}, f, env);
      EnvironmentSpec spec;
      try {
        spec = load_env_arg(env_arg, c);
      } catch (const std::exception& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kExitConfig;
      }
      const DifficultyMetrics d = compute_difficulty(spec);
      if (env_action == "validate") {
        std::cout << spec.name << ": valid\n";
      } else if (env_action == "metrics") {
        std::cout << "name,occupied_area,min_obstacle_gap\n"
                  << spec.name << ',' << fmt(d.occupied_area) << ',' << fmt(d.min_obstacle_gap) << '\n';
      } else {
        const Rect& b = spec.geometry.bounds;
        std::size_t parts = 0;
        for (const auto& o : spec.geometry.obstacles) parts += o.parts.size();
        std::cout << "name: " << spec.name << "\nbounds: [" << b.min.x << ", " << b.min.y << "] - [" << b.max.x << ", "
                  << b.max.y << "]\nobstacles: " << spec.geometry.obstacles.size() << " (" << parts
                  << " convex parts)\nspawn regions: " << spec.spawn_region.size()
                  << "\ngoal regions: " << spec.goal_region.size() << "\noccupied_area: " << fmt(d.occupied_area)
                  << "\nmin_obstacle_gap: " << fmt(d.min_obstacle_gap) << '\n';
      }
      return kExitOk;
    }
    if (train->parsed()) {
      const RunConfig c = resolve(RunConfig{}, f, train);
      cmd_train(c, c.out, &std::cout);
      std::cout << "wrote " << c.out.string() << '\n';
      return kExitOk;
    }
    if (eval->parsed()) {
      RunConfig c = resolve(RunConfig{}, f, eval);
      if (!envs.empty()) c.eval.envs = envs;
      if (!eval_seeds.empty()) c.eval.seeds = eval_seeds;
      std::vector<ModelEntry> models;
      for (const auto& w : weights) models.push_back(parse_model_arg(w));
      const auto results = cmd_eval(c, models, c.out, &std::cout);
      for (const auto& r : results) {
        for (const auto& s : r.per_env) {
          std::cout << r.model.label << ' ' << s.env << ": success " << s.success_rate << " collision "
                    << s.collision_rate << " deviation " << s.mean_deviation << '\n';
        }
      }
      return kExitOk;
    }
    if (verify->parsed()) {
      RunConfig c = resolve(RunConfig{}, f, verify);
      if (!properties.empty()) c.verify.properties = properties;
      std::vector<ModelEntry> models;
      for (const auto& w : weights) models.push_back(parse_model_arg(w));
      cmd_verify(c, models, c.out, &std::cout);
      return kExitOk;
    }
    if (repro->parsed()) {
      RunConfig c = resolve(preset_config(preset), f, repro);
      if (repro->count("--out") == 0 && f.config.empty()) c.out = std::filesystem::path("runs") / preset;
      cmd_repro(c, c.out, &std::cout);
      std::cout << "wrote " << c.out.string() << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace safenav
