#include "safenav/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "safenav/envsuite.hpp"
#include "safenav/geometry.hpp"

namespace safenav {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

std::string_view to_string(BoundMode m) { return m == BoundMode::interval ? "interval" : "linear_relax"; }

BoundMode parse_bound_mode(std::string_view s) {
  if (s == "interval") return BoundMode::interval;
  if (s == "linear_relax") return BoundMode::linear_relax;
  throw ContractError("unknown bound mode '" + std::string(s) + "' (interval|linear_relax)");
}

std::string_view to_string(RegionVerdict v) {
  switch (v) {
    case RegionVerdict::safe: return "safe";
    case RegionVerdict::violating: return "violating";
    default: return "undecided";
  }
}

bool BoxRegion::contains(const VectorXd& x) const {
  if (x.size() != lower.size()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

void validate(const SafetyProperty& p, int inputs, int outputs) {
  const std::string where = "property '" + p.name + "': ";
  if (p.box.lower.size() != inputs || p.box.upper.size() != inputs) {
    throw ContractError(where + "box has " + std::to_string(p.box.lower.size()) + " dimensions, network takes " +
                        std::to_string(inputs));
  }
  for (Eigen::Index i = 0; i < inputs; ++i) {
    if (!std::isfinite(p.box.lower(i)) || !std::isfinite(p.box.upper(i)) || p.box.lower(i) > p.box.upper(i)) {
      throw ContractError(where + "bad bounds on dimension " + std::to_string(i));
    }
  }
  if (p.forbidden.empty() || p.allowed.empty()) throw ContractError(where + "forbidden and allowed must be non-empty");
  std::vector<int> seen(static_cast<std::size_t>(outputs), 0);
  for (const auto* set : {&p.forbidden, &p.allowed}) {
    for (int a : *set) {
      if (a < 0 || a >= outputs) throw ContractError(where + "action " + std::to_string(a) + " out of range");
      if (seen[static_cast<std::size_t>(a)]++) throw ContractError(where + "action " + std::to_string(a) + " listed twice");
    }
  }
  if (p.forbidden.size() + p.allowed.size() != static_cast<std::size_t>(outputs)) {
    throw ContractError(where + "forbidden and allowed must partition the actions");
  }
}

std::vector<int> sector_rays(int n_rays, double lo_deg, double hi_deg) {
  // Compare 360*i against deg*n to stay exact for integral degrees.
  std::vector<int> rays;
  const double n = n_rays;
  for (int i = 0; i < n_rays; ++i) {
    double a = 360.0 * i;
    if (a > 180.0 * n) a -= 360.0 * n;
    if (a > lo_deg * n && a < hi_deg * n) rays.push_back(i);
  }
  return rays;
}

namespace {

SafetyProperty near_property(const std::string& name, const SimParams& sim,
                             const std::vector<std::pair<double, double>>& sectors, const std::vector<int>& allowed) {
  SafetyProperty p;
  p.name = name;
  const int n = sim.observation_size();
  p.box.lower = VectorXd::Zero(n);
  p.box.upper = VectorXd::Ones(n);
  for (const auto& [lo, hi] : sectors) {
    for (int r : sector_rays(sim.n_rays, lo, hi)) p.box.upper(r) = kNearThreshold;
  }
  p.allowed = allowed;
  for (int a = 0; a < sim.n_actions(); ++a) {
    if (std::find(allowed.begin(), allowed.end(), a) == allowed.end()) p.forbidden.push_back(a);
  }
  return p;
}

}  // namespace

std::vector<SafetyProperty> builtin_properties(const SimParams& sim) {
  validate(sim);
  std::vector<int> left, right, straight;
  for (int i = 0; i < static_cast<int>(sim.translate_angles_deg.size()); ++i) {
    const double a = sim.translate_angles_deg[static_cast<std::size_t>(i)];
    (a > 0 ? left : a < 0 ? right : straight).push_back(i);
  }
  left.push_back(sim.rotate_left_action());
  right.push_back(sim.rotate_right_action());
  if (straight.empty()) throw ContractError("theta4 needs a straight translation action");

  auto join = [](std::vector<int> a, const std::vector<int>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    return a;
  };
  const std::pair<double, double> kLeft{30.0, 120.0}, kRight{-120.0, -30.0}, kFront{-30.0, 30.0};
  std::vector<SafetyProperty> out;
  out.push_back(near_property("theta0", sim, {kLeft}, join(right, straight)));
  out.push_back(near_property("theta1", sim, {kRight}, join(left, straight)));
  out.push_back(near_property("theta2", sim, {kLeft, kFront}, join(right, {})));
  out.push_back(near_property("theta3", sim, {kRight, kFront}, join(left, {})));
  out.push_back(near_property("theta4", sim, {kLeft, kRight}, join(straight, {})));
  return out;
}

namespace {

constexpr double kSlack = 1e-12;

double tanh_scalar(double x) { return 1.0 - 2.0 / (std::exp(2.0 * x) + 1.0); }

struct PreparedLayer {
  const DenseLayer* layer;
  MatrixXd pos;
  MatrixXd neg;
  MatrixXd abs;
};

std::vector<PreparedLayer> prepare(const MlpNetwork& net) {
  std::vector<PreparedLayer> out;
  for (const DenseLayer& l : net.layers()) {
    out.push_back({&l, l.weights.cwiseMax(0.0), l.weights.cwiseMin(0.0), l.weights.cwiseAbs()});
  }
  return out;
}

// Rounding allowance for c.x + d over a box whose entries are at most m in
// magnitude; zero when the row has no products to round.
VectorXd rounding(const MatrixXd& abs_coef, double m, const VectorXd& d) {
  const VectorXd terms = abs_coef.rowwise().sum();
  VectorXd pad(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) pad(i) = terms(i) > 0.0 ? kSlack * (terms(i) * m + std::abs(d(i))) : 0.0;
  return pad;
}

double magnitude(const VectorXd& lo, const VectorXd& hi) {
  return std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff());
}

struct Interval {
  VectorXd lo;
  VectorXd hi;
};

// Pre-activation interval of every layer.
std::vector<Interval> interval_pass(const std::vector<PreparedLayer>& layers, const VectorXd& lo, const VectorXd& hi) {
  std::vector<Interval> pre;
  VectorXd l = lo, h = hi;
  for (const PreparedLayer& p : layers) {
    const VectorXd& b = p.layer->biases;
    const VectorXd pad = rounding(p.abs, magnitude(l, h), b);
    VectorXd pl = p.pos * l + p.neg * h + b - pad;
    VectorXd ph = p.pos * h + p.neg * l + b + pad;
    if (p.layer->activation == Activation::tanh) {
      l = pl.unaryExpr([](double x) { return std::max(-1.0, tanh_scalar(x) - kSlack); });
      h = ph.unaryExpr([](double x) { return std::min(1.0, tanh_scalar(x) + kSlack); });
    } else {
      l = pl;
      h = ph;
    }
    pre.push_back({std::move(pl), std::move(ph)});
  }
  return pre;
}

// Lower (or upper) linear bound of tanh on [l, u]: slope, intercept.
struct Line {
  double slope;
  double intercept;
};

std::pair<Line, Line> tanh_relaxation(double l, double u) {
  const double tl = tanh_scalar(l), tu = tanh_scalar(u);
  if (u - l < 1e-9) return {{0.0, tl - kSlack}, {0.0, tu + kSlack}};
  const double chord = (tu - tl) / (u - l);
  const double tangent = std::min(1.0 - tl * tl, 1.0 - tu * tu);
  Line lower, upper;
  if (l >= 0.0) {
    lower = {chord, tl - chord * l};
    upper = {tangent, tu - tangent * u};
  } else if (u <= 0.0) {
    lower = {tangent, tl - tangent * l};
    upper = {chord, tu - chord * u};
  } else {
    lower = {tangent, tl - tangent * l};
    upper = {tangent, tu - tangent * u};
  }
  lower.intercept -= kSlack * (1.0 + std::abs(lower.slope * l) + std::abs(lower.intercept));
  upper.intercept += kSlack * (1.0 + std::abs(upper.slope * u) + std::abs(upper.intercept));
  return {lower, upper};
}

VectorXd concretize_lower(const MatrixXd& c, const VectorXd& d, const VectorXd& lo, const VectorXd& hi, double m) {
  return c.cwiseMax(0.0) * lo + c.cwiseMin(0.0) * hi + d - rounding(c.cwiseAbs(), m, d);
}

VectorXd concretize_upper(const MatrixXd& c, const VectorXd& d, const VectorXd& lo, const VectorXd& hi, double m) {
  return c.cwiseMax(0.0) * hi + c.cwiseMin(0.0) * lo + d + rounding(c.cwiseAbs(), m, d);
}

OutputBounds propagate(const std::vector<PreparedLayer>& layers, const BoxRegion& box, BoundMode mode) {
  const std::vector<Interval> pre = interval_pass(layers, box.lower, box.upper);
  OutputBounds out;
  if (mode == BoundMode::interval) {
    out.lower = pre.back().lo;
    out.upper = pre.back().hi;
    return out;
  }
  const double m = magnitude(box.lower, box.upper);
  MatrixXd lc, uc;
  VectorXd ld, ud;
  VectorXd l, u;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const PreparedLayer& p = layers[i];
    const VectorXd& b = p.layer->biases;
    if (i == 0) {
      lc = p.layer->weights;
      uc = p.layer->weights;
      ld = b;
      ud = b;
    } else {
      MatrixXd nlc = p.pos * lc + p.neg * uc;
      MatrixXd nuc = p.pos * uc + p.neg * lc;
      VectorXd nld = p.pos * ld + p.neg * ud + b;
      VectorXd nud = p.pos * ud + p.neg * ld + b;
      lc = std::move(nlc);
      uc = std::move(nuc);
      ld = std::move(nld);
      ud = std::move(nud);
    }
    l = concretize_lower(lc, ld, box.lower, box.upper, m).cwiseMax(pre[i].lo);
    u = concretize_upper(uc, ud, box.lower, box.upper, m).cwiseMin(pre[i].hi);
    if (p.layer->activation != Activation::tanh) continue;
    for (Eigen::Index j = 0; j < l.size(); ++j) {
      const auto [lo_line, up_line] = tanh_relaxation(l(j), std::max(l(j), u(j)));
      lc.row(j) *= lo_line.slope;
      ld(j) = lo_line.slope * ld(j) + lo_line.intercept;
      uc.row(j) *= up_line.slope;
      ud(j) = up_line.slope * ud(j) + up_line.intercept;
    }
  }
  out.lower = l;
  out.upper = u;
  out.symbolic = true;
  out.lower_coef = std::move(lc);
  out.lower_const = std::move(ld);
  out.upper_coef = std::move(uc);
  out.upper_const = std::move(ud);
  return out;
}

// Lower bound of y_a - y_b over the box.
double difference_lower(const OutputBounds& b, const BoxRegion& box, int a, int c) {
  double v = b.lower(a) - b.upper(c);
  if (b.symbolic) {
    const VectorXd coef = b.lower_coef.row(a) - b.upper_coef.row(c);
    const double d = b.lower_const(a) - b.upper_const(c);
    double s = d;
    double mag = std::abs(d);
    for (Eigen::Index k = 0; k < coef.size(); ++k) {
      s += coef(k) * (coef(k) > 0 ? box.lower(k) : box.upper(k));
      mag += std::abs(coef(k)) * std::max(std::abs(box.lower(k)), std::abs(box.upper(k)));
    }
    v = std::max(v, s - kSlack * mag);
  }
  return v;
}

bool dominates(const OutputBounds& b, const BoxRegion& box, int winner, const std::vector<int>& others) {
  for (int o : others) {
    if (!(difference_lower(b, box, winner, o) > 0.0)) return false;
  }
  return true;
}

RegionVerdict decide(const MlpNetwork& net, const std::vector<PreparedLayer>& layers, const SafetyProperty& prop,
                     const BoxRegion& box, BoundMode mode) {
  auto forbidden = [&](int a) { return std::find(prop.forbidden.begin(), prop.forbidden.end(), a) != prop.forbidden.end(); };
  if (box.is_point()) return forbidden(argmax(net.logits(box.lower))) ? RegionVerdict::violating : RegionVerdict::safe;
  const OutputBounds b = propagate(layers, box, mode);
  for (int a : prop.allowed) {
    if (dominates(b, box, a, prop.forbidden)) return RegionVerdict::safe;
  }
  for (int f : prop.forbidden) {
    if (dominates(b, box, f, prop.allowed)) return RegionVerdict::violating;
  }
  return RegionVerdict::undecided;
}

void require_policy_input(const MlpNetwork& net, const BoxRegion& box) {
  if (box.lower.size() != net.input_size() || box.upper.size() != net.input_size()) {
    throw ContractError("box dimension does not match the network input");
  }
}

}  // namespace

int argmax(const VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

OutputBounds propagate_bounds(const MlpNetwork& net, const BoxRegion& box, BoundMode mode) {
  require_policy_input(net, box);
  return propagate(prepare(net), box, mode);
}

RegionVerdict decide_region(const MlpNetwork& net, const SafetyProperty& property, const BoxRegion& box,
                            BoundMode mode) {
  require_policy_input(net, box);
  return decide(net, prepare(net), property, box, mode);
}

Eigen::Index split_dimension(const BoxRegion& box) {
  Eigen::Index best = 0;
  double width = -1.0;
  for (Eigen::Index i = 0; i < box.dims(); ++i) {
    const double w = box.upper(i) - box.lower(i);
    if (w > width) {
      width = w;
      best = i;
    }
  }
  return best;
}

std::pair<BoxRegion, BoxRegion> bisect(const BoxRegion& box, Eigen::Index dim) {
  const double mid = 0.5 * (box.lower(dim) + box.upper(dim));
  BoxRegion a = box, b = box;
  a.upper(dim) = mid;
  b.lower(dim) = mid;
  a.volume = b.volume = 0.5 * box.volume;
  a.depth = b.depth = box.depth + 1;
  a.id = 2 * box.id;
  b.id = 2 * box.id + 1;
  return {std::move(a), std::move(b)};
}

VerdictReport violation_rate(const MlpNetwork& net, const SafetyProperty& property, const VerifierBudget& budget,
                             BoundMode mode) {
  if (net.head() != Head::softmax_policy) throw ContractError("verification needs a policy network");
  validate(property, net.input_size(), net.output_size());
  if (budget.max_depth < 0 || budget.max_depth > 60) throw ContractError("max_depth must be in [0, 60]");
  if (budget.max_regions < 1) throw ContractError("max_regions must be positive");
  if (!(budget.resolution >= 0.0)) throw ContractError("resolution must be non-negative");

  const auto layers = prepare(net);
  VerdictReport report;
  report.property = property.name;

  BoxRegion root = property.box;
  root.volume = 1.0;
  root.depth = 0;
  root.id = 1;
  std::vector<BoxRegion> stack;
  stack.push_back(std::move(root));

  auto leaf = [&](const BoxRegion& box, RegionVerdict v, bool estimated) {
    if (budget.collect_leaves) report.leaves.push_back({box, v, estimated});
  };

  while (!stack.empty()) {
    if (report.regions >= budget.max_regions) {
      report.partial = true;
      for (const BoxRegion& box : stack) {
        report.undecided_volume += box.volume;
        leaf(box, RegionVerdict::undecided, false);
      }
      break;
    }
    BoxRegion box = std::move(stack.back());
    stack.pop_back();
    ++report.regions;
    report.max_depth_reached = std::max(report.max_depth_reached, box.depth);

    const RegionVerdict v = decide(net, layers, property, box, mode);
    if (v == RegionVerdict::safe) {
      report.proven_safe_volume += box.volume;
      leaf(box, v, false);
      continue;
    }
    if (v == RegionVerdict::violating) {
      report.proven_violating_volume += box.volume;
      leaf(box, v, false);
      continue;
    }
    const Eigen::Index dim = split_dimension(box);
    if (box.upper(dim) - box.lower(dim) <= budget.resolution || box.depth >= budget.max_depth) {
      const int a = argmax(net.logits(box.center()));
      const bool bad = std::find(property.forbidden.begin(), property.forbidden.end(), a) != property.forbidden.end();
      if (bad) {
        report.estimated_violating_volume += box.volume;
      } else {
        report.estimated_safe_volume += box.volume;
      }
      leaf(box, bad ? RegionVerdict::violating : RegionVerdict::safe, true);
      continue;
    }
    auto [lo, hi] = bisect(box, dim);
    stack.push_back(std::move(hi));
    stack.push_back(std::move(lo));
  }
  report.violation_rate = report.violating_volume();
  return report;
}

std::vector<SafetyProperty> load_properties(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
  if (!doc.contains("properties") || !doc["properties"].is_array()) throw ParseError("properties", "missing array");
  std::vector<SafetyProperty> out;
  std::size_t idx = 0;
  for (const json& p : doc["properties"]) {
    const std::string where = "properties[" + std::to_string(idx++) + "]";
    for (const char* key : {"name", "bounds", "forbidden", "allowed"}) {
      if (!p.contains(key)) throw ParseError(where + "." + key, "missing field");
    }
    SafetyProperty sp;
    try {
      sp.name = p["name"].get<std::string>();
      const auto& bounds = p["bounds"];
      sp.box.lower.resize(static_cast<Eigen::Index>(bounds.size()));
      sp.box.upper.resize(static_cast<Eigen::Index>(bounds.size()));
      for (std::size_t i = 0; i < bounds.size(); ++i) {
        if (bounds[i].size() != 2) throw ParseError(where + ".bounds[" + std::to_string(i) + "]", "expected [lo, hi]");
        sp.box.lower(static_cast<Eigen::Index>(i)) = bounds[i][0].get<double>();
        sp.box.upper(static_cast<Eigen::Index>(i)) = bounds[i][1].get<double>();
      }
      sp.forbidden = p["forbidden"].get<std::vector<int>>();
      sp.allowed = p["allowed"].get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw ParseError(where, e.what());
    }
    out.push_back(std::move(sp));
  }
  return out;
}

void save_properties(std::span<const SafetyProperty> properties, const std::filesystem::path& path) {
  json arr = json::array();
  for (const SafetyProperty& p : properties) {
    json bounds = json::array();
    for (Eigen::Index i = 0; i < p.box.lower.size(); ++i) bounds.push_back({p.box.lower(i), p.box.upper(i)});
    arr.push_back({{"name", p.name}, {"bounds", bounds}, {"forbidden", p.forbidden}, {"allowed", p.allowed}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json{{"properties", arr}}.dump(2) << '\n';
}

SuiteResult verify_suite(std::span<const ModelEntry> models, std::span<const SafetyProperty> properties,
                         const VerifierBudget& budget, BoundMode mode) {
  SuiteResult suite;
  for (const SafetyProperty& p : properties) suite.properties.push_back(p.name);
  for (const ModelEntry& m : models) {
    if (std::find(suite.groups.begin(), suite.groups.end(), m.group) == suite.groups.end()) {
      suite.groups.push_back(m.group);
    }
    const MlpNetwork net = load_weights(m.weights);
    std::vector<VerdictReport> row;
    for (const SafetyProperty& p : properties) row.push_back(violation_rate(net, p, budget, mode));
    suite.models.push_back(m);
    suite.reports.push_back(std::move(row));
  }
  return suite;
}

std::pair<double, double> suite_stat(const SuiteResult& suite, const std::string& group, int property) {
  std::vector<double> values;
  for (std::size_t m = 0; m < suite.models.size(); ++m) {
    if (suite.models[m].group != group) continue;
    const auto& row = suite.reports[m];
    if (property >= 0) {
      values.push_back(row.at(static_cast<std::size_t>(property)).violation_rate);
    } else {
      double s = 0.0;
      for (const auto& r : row) s += r.violation_rate;
      values.push_back(row.empty() ? 0.0 : s / static_cast<double>(row.size()));
    }
  }
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void write_verdicts_csv(const SuiteResult& suite, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "group,model,property,violation_rate,proven_safe,proven_violating,estimated_safe,estimated_violating,"
         "undecided,regions,max_depth,partial\n";
  for (std::size_t m = 0; m < suite.models.size(); ++m) {
    for (const VerdictReport& r : suite.reports[m]) {
      out << suite.models[m].group << ',' << suite.models[m].label << ',' << r.property << ','
          << fmt(r.violation_rate) << ',' << fmt(r.proven_safe_volume) << ',' << fmt(r.proven_violating_volume) << ','
          << fmt(r.estimated_safe_volume) << ',' << fmt(r.estimated_violating_volume) << ','
          << fmt(r.undecided_volume) << ',' << r.regions << ',' << r.max_depth_reached << ','
          << (r.partial ? "true" : "false") << '\n';
    }
  }
}

void write_violation_table_csv(const SuiteResult& suite, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "property";
  for (const auto& g : suite.groups) out << ',' << g << "_mean_pct," << g << "_std_pct";
  out << '\n';
  auto row = [&](const std::string& label, int p) {
    out << label;
    for (const auto& g : suite.groups) {
      const auto [mean, std] = suite_stat(suite, g, p);
      out << ',' << fmt(100.0 * mean) << ',' << fmt(100.0 * std);
    }
    out << '\n';
  };
  for (std::size_t p = 0; p < suite.properties.size(); ++p) row(suite.properties[p], static_cast<int>(p));
  row("mean", -1);
}

}  // namespace safenav
