// Acceptance run: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "CLI11.hpp"
#include "safenav/cli.hpp"
#include "support.hpp"

using namespace safenav;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// 1 -------------------------------------------------------------------------

double max_gradient_error(MlpNetwork net, Rng& rng, int coords) {
  const int batch = 8;
  MatrixXd x(net.input_size(), batch), c(net.output_size(), batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1, 1);
  auto loss = [&](const MlpNetwork& n) { return (n.forward(x).raw.array() * c.array()).sum(); };
  const Gradients g = net.backward(net.forward(x), c);
  std::vector<double> flat;
  for (const auto& l : g.layers) {
    flat.insert(flat.end(), l.weights.data(), l.weights.data() + l.weights.size());
    flat.insert(flat.end(), l.biases.data(), l.biases.data() + l.biases.size());
  }
  const double h = 1e-5;
  double worst = 0.0;
  for (int s = 0; s < coords; ++s) {
    const std::size_t k = rng.below(net.parameter_count());
    const double saved = net.parameter(k);
    net.parameter(k) = saved + h;
    const double up = loss(net);
    net.parameter(k) = saved - h;
    const double down = loss(net);
    net.parameter(k) = saved;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - flat[k]) / std::max({std::abs(fd), std::abs(flat[k]), 1e-7}));
  }
  return worst;
}

Outcome gradients() {
  Rng rng(101);
  const MlpNetwork policy = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
  const MlpNetwork value = MlpNetwork::create(MlpNetwork::value_shape(53), Head::scalar_value, rng);
  const double ep = max_gradient_error(policy, rng, 1000);
  const double ev = max_gradient_error(value, rng, 1000);
  return {ep < 1e-4 && ev < 1e-4, "max rel err policy " + num(ep) + ", value " + num(ev) + " (<1e-4)"};
}

// 2 -------------------------------------------------------------------------

Outcome rewards() {
  SimParams p;
  const World w(WorldGeometry{{{0, 0}, {50, 50}}, {}});
  const Vec2 goal{25, 25};
  double worst = 0.0;
  int steps = 0;
  bool ok = true;

  // Independent model: translate by step_length along heading + offset, rotate by turn angle.
  auto run = [&](RobotState start, const std::vector<int>& actions, const std::vector<Terminal>& expected_end) {
    Episode ep(w, p, start, goal);
    double x = start.position.x, y = start.position.y, th = start.heading;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const int a = actions[i];
      double nx = x, ny = y, nth = th;
      if (a < 5) {
        const double dir = th + p.translate_angles_deg[static_cast<std::size_t>(a)] * std::acos(-1.0) / 180.0;
        nx = x + p.step_length * std::cos(dir);
        ny = y + p.step_length * std::sin(dir);
      } else {
        nth = th + (a == 5 ? 1 : -1) * p.turn_angle_deg * std::acos(-1.0) / 180.0;
      }
      const bool crash = nx - p.robot_radius <= 0.0 || ny - p.robot_radius <= 0.0 || nx + p.robot_radius >= 50.0 ||
                         ny + p.robot_radius >= 50.0;
      const double d0 = std::hypot(x - goal.x, y - goal.y), d1 = std::hypot(nx - goal.x, ny - goal.y);
      double expected;
      if (crash) {
        expected = -100.0;
      } else if (d1 < p.goal_radius) {
        expected = 300.0;
      } else {
        expected = p.progress_gain * (d0 - d1);
      }
      const StepOutcome& out = ep.step(a);
      ++steps;
      worst = std::max(worst, std::abs(out.reward - expected));
      const Terminal want = expected_end[i];
      ok = ok && out.terminal == want;
      if (!crash) {
        x = nx;
        y = ny;
        th = nth;
      }
      ok = ok && std::abs(ep.robot().position.x - x) < 1e-9 && std::abs(ep.robot().position.y - y) < 1e-9;
    }
  };
  using T = Terminal;
  // Progress, rotations, sideways moves, then into the goal.
  run({{20.2, 25}, 0.0, p.robot_radius}, {2, 5, 6, 4, 0, 1, 3, 2, 2, 2, 2, 2, 2},
      {T::none, T::none, T::none, T::none, T::none, T::none, T::none, T::none, T::none, T::none, T::none, T::none,
       T::reached});
  // Backing away from the goal into the west wall.
  run({{2.0, 25}, std::acos(-1.0), p.robot_radius}, {2, 2, 2, 2}, {T::none, T::none, T::none, T::crashed});
  return {ok && worst < 1e-9, std::to_string(steps) + " scripted steps, max |reward error| " + num(worst) +
                                  (ok ? "" : ", terminal or state mismatch")};
}

// 3 -------------------------------------------------------------------------

Outcome raycasts() {
  Rng rng(103);
  double worst = 0.0;
  int n = 0;
  for (const auto& name : {"baseEnv", "finalEnv", "testEnv5"}) {
    const EnvironmentSpec spec = load_named_environment(default_env_dir(), name);
    const World w(spec.geometry);
    const Rect& b = spec.geometry.bounds;
    const int count = n == 0 ? 3334 : 3333;
    for (int i = 0; i < count; ++i) {
      const Vec2 o{rng.uniform(b.min.x, b.max.x), rng.uniform(b.min.y, b.max.y)};
      const double angle = rng.uniform(-std::acos(-1.0), std::acos(-1.0));
      const double range = rng.uniform(1.0, 30.0);
      worst = std::max(worst, std::abs(w.raycast(o, angle, range) - testing::brute_raycast(spec.geometry, o, angle, range)));
      ++n;
    }
  }
  return {n == 10000 && worst < 1e-6, std::to_string(n) + " rays, max error " + num(worst)};
}

// 4 -------------------------------------------------------------------------

Outcome freeze(const ReproOutput& repro, const RunConfig& config) {
  int checked = 0;
  bool ok = true;
  for (int s = 0; s < config.n_seeds; ++s) {
    const auto dir = repro.root / "train" / "tol" / ("seed_" + std::to_string(config.seed + static_cast<std::uint64_t>(s)));
    const Checkpoint s1 = load_checkpoint(dir / "checkpoints" / "stage_1");
    const Checkpoint s2 = load_checkpoint(dir / "checkpoints" / "stage_2");
    const Checkpoint fin = load_checkpoint(dir / "final");
    for (auto net : {&Checkpoint::policy, &Checkpoint::value}) {
      const MlpNetwork &a = s1.*net, &b = s2.*net, &c = fin.*net;
      for (const MlpNetwork* m : {&b, &c}) {
        ok = ok && m->layer(0).weights == a.layer(0).weights && m->layer(0).biases == a.layer(0).biases;
      }
      ok = ok && c.layer(1).weights == b.layer(1).weights && c.layer(1).biases == b.layer(1).biases;
      // Unfrozen layers must still move.
      ok = ok && c.layer(2).weights != b.layer(2).weights;
      ++checked;
    }
    ok = ok && s1.step == config.total_budget / 6 && s2.step == config.total_budget / 2;
  }
  return {ok, std::to_string(checked) + " networks checked across stage_1, stage_2 and final"};
}

// 5 -------------------------------------------------------------------------

Outcome learning(const std::filesystem::path& work) {
  int hits = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainingPlan plan = default_plan(Regime::e2e, 300'000, seed);
    plan.stages[0].env = "baseEnv";
    TrainingOptions o;
    o.env_dir = default_env_dir();
    o.out_dir = work / "base_learning" / ("seed_" + std::to_string(seed));
    double best = 0.0;
    std::int64_t at = -1;
    o.on_update = [&](const UpdateRecord& u, const MlpNetwork&, const MlpNetwork&) {
      if (u.success_rate > best) best = u.success_rate;
      if (u.success_rate >= 0.9 && at < 0) at = u.step;
      return at < 0;
    };
    run_training(plan, o);
    if (at >= 0) ++hits;
    detail += " seed " + std::to_string(seed) + ": " + (at >= 0 ? "0.9 at " + std::to_string(at) : "best " + num(best, 3)) + ";";
  }
  return {hits >= 2, std::to_string(hits) + "/3 seeds reached rolling success 0.9 within 300k;" + detail};
}

// 6 -------------------------------------------------------------------------

std::map<std::string, double> mean_collision(const ReproOutput& repro, const std::string& group) {
  std::map<std::string, std::vector<double>> by_env;
  for (const auto& m : repro.eval) {
    if (m.model.group != group) continue;
    for (const auto& s : m.per_env) by_env[s.env].push_back(s.collision_rate);
  }
  std::map<std::string, double> out;
  for (const auto& [env, v] : by_env) out[env] = mean_std(v).mean;
  return out;
}

Outcome collisions(const ReproOutput& repro) {
  const auto tol = mean_collision(repro, "tol"), e2e = mean_collision(repro, "e2e");
  int wins = 0;
  std::string detail;
  for (const auto& [env, c] : e2e) {
    const double t = tol.at(env);
    wins += t <= c;
    detail += " " + env + " tol " + num(t, 3) + " e2e " + num(c, 3) + ";";
  }
  return {wins >= 3 && e2e.size() == 5, std::to_string(wins) + "/" + std::to_string(e2e.size()) +
                                            " test environments with ToL collision <= E2E;" + detail};
}

// 7 -------------------------------------------------------------------------

Outcome soundness() {
  Rng rng(107);
  std::size_t safe_samples = 0, bad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const MlpNetwork net = testing::random_net({4, 8, 8, 3}, Head::softmax_policy, rng, 1.5);
    SafetyProperty p;
    p.name = "toy";
    p.box.lower = VectorXd::Zero(4);
    p.box.upper = VectorXd::Ones(4);
    const int f = trial % 3;
    p.forbidden = {f};
    for (int a = 0; a < 3; ++a) {
      if (a != f) p.allowed.push_back(a);
    }
    VerifierBudget budget;
    budget.collect_leaves = true;
    budget.max_depth = 16;
    const VerdictReport r = violation_rate(net, p, budget, trial % 2 ? BoundMode::interval : BoundMode::linear_relax);
    std::unordered_map<std::uint64_t, const VerifiedLeaf*> leaves;
    for (const auto& l : r.leaves) leaves[l.box.id] = &l;
    for (int s = 0; s < 10000; ++s) {
      VectorXd x(4);
      for (int k = 0; k < 4; ++k) x(k) = rng.uniform();
      BoxRegion box = p.box;
      auto it = leaves.find(box.id);
      while (it == leaves.end() && box.depth < 64) {
        auto [lo, hi] = bisect(box, split_dimension(box));
        box = lo.contains(x) ? lo : hi;
        it = leaves.find(box.id);
      }
      if (it == leaves.end() || it->second->estimated || it->second->verdict != RegionVerdict::safe) continue;
      ++safe_samples;
      bad += argmax(net.logits(x)) == f;
    }
  }

  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const MlpNetwork net = testing::random_net({2, 8, 8, 3}, Head::softmax_policy, rng, 2.0);
    SafetyProperty p;
    p.name = "toy2";
    p.box.lower = VectorXd::Zero(2);
    p.box.upper = VectorXd::Ones(2);
    p.forbidden = {0};
    p.allowed = {1, 2};
    const int n = 1000;
    long viol = 0;
    MatrixXd pts(2, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) pts.col(j) << (i + 0.5) / n, (j + 0.5) / n;
      const MatrixXd z = net.forward(pts).raw;
      for (int j = 0; j < n; ++j) {
        int a = 0;
        for (int k = 1; k < 3; ++k) {
          if (z(k, j) > z(a, j)) a = k;
        }
        viol += a == 0;
      }
    }
    VerifierBudget budget;
    budget.resolution = 1.0 / 1024;
    const double rate = violation_rate(net, p, budget).violation_rate;
    worst = std::max(worst, std::abs(rate - static_cast<double>(viol) / (n * static_cast<double>(n))));
  }
  return {bad == 0 && safe_samples > 0 && worst <= 0.02,
          std::to_string(bad) + " violations among " + std::to_string(safe_samples) +
              " samples in proven-safe leaves (20 nets); max |rate - grid| " + num(worst) + " over 5 2-input nets"};
}

// 8 -------------------------------------------------------------------------

Outcome containment() {
  Rng rng(108);
  std::size_t escapes = 0, looser = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const bool big = pair % 2 == 0;
    const MlpNetwork net = big ? MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng)
                               : testing::random_net({4, 8, 8, 3}, Head::softmax_policy, rng, 1.5);
    const int d = net.input_size();
    BoxRegion box;
    box.lower.resize(d);
    box.upper.resize(d);
    const double width = std::pow(10.0, rng.uniform(-3.0, 0.0));
    for (int i = 0; i < d; ++i) {
      box.lower(i) = rng.uniform(0.0, 1.0 - width);
      box.upper(i) = box.lower(i) + width * rng.uniform();
    }
    const OutputBounds ib = propagate_bounds(net, box, BoundMode::interval);
    const OutputBounds lb = propagate_bounds(net, box, BoundMode::linear_relax);
    looser += (lb.lower.array() < ib.lower.array()).count() + (lb.upper.array() > ib.upper.array()).count();
    MatrixXd xs(d, 10000);
    for (int j = 0; j < 10000; ++j) {
      for (int i = 0; i < d; ++i) xs(i, j) = rng.uniform(box.lower(i), box.upper(i));
    }
    const MatrixXd z = net.forward(xs).raw;
    for (const OutputBounds* b : {&ib, &lb}) {
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        escapes += (z.col(j).array() < b->lower.array()).count() + (z.col(j).array() > b->upper.array()).count();
      }
    }
  }
  return {escapes == 0 && looser == 0, std::to_string(escapes) + " samples outside bounds, " + std::to_string(looser) +
                                           " linear_relax bounds looser than interval (100 pairs x 10^4 samples)"};
}

// 9 -------------------------------------------------------------------------

Outcome violation_trend(const ReproOutput& repro) {
  const double tol = suite_stat(repro.verify, "tol", -1).first;
  const double e2e = suite_stat(repro.verify, "e2e", -1).first;
  const double ft = suite_stat(repro.verify, "finetune", -1).first;
  return {tol <= e2e, "mean violation ToL " + num(100 * tol) + "%, finetune " + num(100 * ft) + "%, E2E " +
                          num(100 * e2e) + "%"};
}

// 10 ------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducible(const ReproOutput& a, const ReproOutput& b) {
  const auto fa = list_csv_files(a.root), fb = list_csv_files(b.root);
  std::size_t differing = 0;
  for (const auto& f : fa) {
    if (std::find(fb.begin(), fb.end(), f) == fb.end() || slurp(a.root / f) != slurp(b.root / f)) ++differing;
  }
  return {fa == fb && differing == 0 && !fa.empty(),
          std::to_string(fa.size()) + " CSV files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::filesystem::path work = "acceptance_runs";
  std::vector<int> only;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--work-dir", work, "Directory for training runs");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  std::filesystem::create_directories(work);

  RunConfig desk = preset_config("desk");
  desk.threads = threads;
  std::optional<ReproOutput> repro_a, repro_b;
  auto need_repro = [&]() -> const ReproOutput& {
    if (!repro_a) {
      std::cerr << "desk repro (first run) in " << (work / "desk_a").string() << '\n';
      std::filesystem::remove_all(work / "desk_a");
      repro_a = cmd_repro(desk, work / "desk_a", &std::cerr);
    }
    return *repro_a;
  };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradients},
      {2, rewards},
      {3, raycasts},
      {4, [&] { return freeze(need_repro(), desk); }},
      {5, [&] { return learning(work); }},
      {6, [&] { return collisions(need_repro()); }},
      {7, soundness},
      {8, containment},
      {9, [&] { return violation_trend(need_repro()); }},
      {10,
       [&] {
         const ReproOutput& a = need_repro();
         std::cerr << "desk repro (second run) in " << (work / "desk_b").string() << '\n';
         std::filesystem::remove_all(work / "desk_b");
         repro_b = cmd_repro(desk, work / "desk_b", &std::cerr);
         return reproducible(a, *repro_b);
       }},
  };

  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !r.pass;
    std::cout << "criterion " << id << ": " << (r.pass ? "PASS" : "FAIL") << " - " << r.detail << " [" << num(secs, 3)
              << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
