#include <fstream>
#include <sstream>

#include "doctest.h"
#include "safenav/cli.hpp"
#include "support.hpp"

using namespace safenav;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "safenav");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("presets") {
  const RunConfig desk = preset_config("desk");
  CHECK(desk.total_budget == 600'000);
  CHECK(desk.n_seeds == 3);
  CHECK(desk.eval.episodes == 200);
  CHECK(desk.verify.budget.max_depth == 14);
  const RunConfig paper = preset_config("paper");
  CHECK(paper.total_budget == 6'000'000);
  CHECK(paper.eval.episodes == 1000);
  CHECK(paper.verify.budget.max_depth == 20);
  CHECK(paper.ppo.horizon == 6000);
  CHECK(paper.ppo.minibatch_size == 600);
  CHECK_THROWS_AS(preset_config("laptop"), ConfigError);
}

TEST_CASE("config merging") {
  const RunConfig base = preset_config("desk");
  const RunConfig c = merge_config(base, R"({"seed": 7, "ppo": {"lr": 0.001}, "verify": {"mode": "interval"}})");
  CHECK(c.seed == 7);
  CHECK(c.ppo.lr == 0.001);
  CHECK(c.ppo.gamma == base.ppo.gamma);
  CHECK(c.verify.mode == BoundMode::interval);
  CHECK(c.total_budget == base.total_budget);

  CHECK(merge_config(base, config_to_json(c)).seed == 7);
  CHECK_THROWS_AS(merge_config(base, R"({"sede": 7})"), ConfigError);
  CHECK_THROWS_AS(merge_config(base, R"({"ppo": {"lrr": 1}})"), ConfigError);
  CHECK_THROWS_AS(merge_config(base, R"({"seed": "seven"})"), ConfigError);
  CHECK_THROWS_AS(merge_config(base, R"({"regime": "sideways"})"), ConfigError);
  CHECK_THROWS_AS(merge_config(base, R"({"ppo": {"clip_epsilon": -1}})"), ConfigError);
  CHECK_THROWS_AS(merge_config(base, "[1, 2"), ConfigError);
  try {
    merge_config(base, R"({"eval": {"episodez": 3}})");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("eval.episodez") != std::string::npos);
  }
}

TEST_CASE("weight arguments") {
  const ModelEntry a = parse_model_arg("tol=runs/x/policy.bin");
  CHECK(a.group == "tol");
  CHECK(a.weights == "runs/x/policy.bin");
  const ModelEntry b = parse_model_arg("dir/e2e.bin");
  CHECK(b.group == "e2e");
  CHECK_THROWS_AS(parse_model_arg("=x.bin"), ConfigError);
  CHECK_THROWS_AS(parse_model_arg("g="), ConfigError);
}

TEST_CASE("exit codes") {
  const auto dir = testing::temp_dir("cli_exit");
  const std::string envs = default_env_dir().string();
  CHECK(run({"env", "validate", "baseEnv", "--env-dir", envs}) == kExitOk);
  CHECK(run({"env", "metrics", (default_env_dir() / "testEnv2.json").string()}) == kExitOk);
  CHECK(run({"env", "validate", (dir / "missing.json").string()}) == kExitConfig);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"name": "b", "geometry": {"obstacles": []}})";
  }
  CHECK(run({"env", "validate", (dir / "bad.json").string()}) == kExitConfig);
  CHECK(run({"env", "explode", "baseEnv"}) == kExitConfig);
  CHECK(run({"train", "--no-such-flag"}) == kExitConfig);
  CHECK(run({"train", "--regime", "sideways", "--out", (dir / "t").string()}) == kExitConfig);
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"unknown": 1})";
  }
  CHECK(run({"train", "--config", (dir / "cfg.json").string()}) == kExitConfig);
  CHECK(run({"eval", "--weights", (dir / "nothing.bin").string(), "--out", (dir / "e").string()}) == kExitRuntime);
  CHECK(run({}) == kExitConfig);
}

TEST_CASE("small repro writes the full tree") {
  const auto dir = testing::temp_dir("cli_repro");
  RunConfig c = merge_config(preset_config("desk"), R"({
    "total_budget": 1200, "n_seeds": 1, "threads": 2, "curve_interval": 600,
    "ppo": {"horizon": 600, "minibatch_size": 200, "epochs": 1},
    "eval": {"episodes": 3, "envs": ["testEnv1", "testEnv2"]},
    "verify": {"max_depth": 3}
  })");
  std::ostringstream log;
  const ReproOutput out = cmd_repro(c, dir / "r", &log);
  CHECK(out.models.size() == 3);
  CHECK(out.verify.reports.size() == 3);
  CHECK(out.verify.reports[0].size() == 5);
  for (const char* f : {"config.json", "eval/summary.csv", "eval/episodes.csv", "eval/group_summary.csv",
                        "eval/gains.csv", "verify/verdicts.csv", "verify/violation_table.csv",
                        "train/tol/seed_1/checkpoints/stage_2/policy.bin", "train/e2e/seed_1/final/policy.bin",
                        "train/finetune/seed_1/curve.csv"}) {
    CAPTURE(f);
    CHECK(std::filesystem::exists(dir / "r" / f));
  }
  CHECK(merge_config(RunConfig{}, slurp(dir / "r" / "config.json")).total_budget == 1200);
  const auto csvs = list_csv_files(dir / "r");
  CHECK(std::is_sorted(csvs.begin(), csvs.end()));
  CHECK(std::find(csvs.begin(), csvs.end(), std::filesystem::path("eval/gains.csv")) != csvs.end());

  // Same config, same bytes.
  cmd_repro(c, dir / "again", nullptr);
  for (const auto& f : csvs) {
    CAPTURE(f);
    CHECK(slurp(dir / "r" / f) == slurp(dir / "again" / f));
  }
}
