#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "safenav/neural.hpp"
#include "safenav/sim.hpp"

namespace safenav {

enum class BoundMode { interval, linear_relax };

std::string_view to_string(BoundMode m);
BoundMode parse_bound_mode(std::string_view s);

/// Axis-aligned input box. `volume` is the fraction of the owning
/// property's root box; dimensions of zero width do not count.
struct BoxRegion {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double volume = 1.0;
  int depth = 0;
  std::uint64_t id = 1;  // children of id are 2*id and 2*id+1

  Eigen::Index dims() const { return lower.size(); }
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  bool is_point() const { return (upper - lower).maxCoeff() <= 0.0; }
  bool contains(const Eigen::VectorXd& x) const;
};

/// "If input in box then no forbidden output attains the argmax."
struct SafetyProperty {
  std::string name;
  BoxRegion box;
  std::vector<int> forbidden;
  std::vector<int> allowed;
};

void validate(const SafetyProperty& property, int inputs, int outputs);

/// Scan threshold under which an obstacle counts as near.
inline constexpr double kNearThreshold = 0.25;

/// Ray indices whose angle lies strictly inside (lo_deg, hi_deg), angles
/// measured counterclockwise from the heading in (-180, 180].
std::vector<int> sector_rays(int n_rays, double lo_deg, double hi_deg);

/// The five behavioural properties theta0..theta4 for the given action layout.
std::vector<SafetyProperty> builtin_properties(const SimParams& sim);

/// Sound per-logit enclosure over a box. In linear_relax mode the symbolic
/// output bounds (lower_coef x + lower_const <= y <= upper_coef x + upper_const)
/// are kept so that logit differences can be bounded directly.
struct OutputBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  bool symbolic = false;
  Eigen::MatrixXd lower_coef;
  Eigen::VectorXd lower_const;
  Eigen::MatrixXd upper_coef;
  Eigen::VectorXd upper_const;
};

OutputBounds propagate_bounds(const MlpNetwork& net, const BoxRegion& box, BoundMode mode);

enum class RegionVerdict { safe, violating, undecided };
std::string_view to_string(RegionVerdict v);

/// Lowest-index argmax.
int argmax(const Eigen::VectorXd& v);

/// safe: some allowed logit provably exceeds every forbidden one on the box;
/// violating: some forbidden logit provably exceeds every allowed one, or the
/// box is a point whose argmax is forbidden.
RegionVerdict decide_region(const MlpNetwork& net, const SafetyProperty& property, const BoxRegion& box,
                            BoundMode mode);

struct VerifierBudget {
  int max_depth = 20;
  std::size_t max_regions = 1'000'000;
  double resolution = 1.0 / 64.0;  // leaf width per dimension
  bool collect_leaves = false;
};

struct VerifiedLeaf {
  BoxRegion box;
  RegionVerdict verdict = RegionVerdict::undecided;
  bool estimated = false;  // classified by its centre point
};

struct VerdictReport {
  std::string property;
  double violation_rate = 0.0;  // proven + estimated violating volume
  double proven_safe_volume = 0.0;
  double proven_violating_volume = 0.0;
  double estimated_safe_volume = 0.0;
  double estimated_violating_volume = 0.0;
  double undecided_volume = 0.0;  // left unexamined when max_regions ran out
  std::size_t regions = 0;
  int max_depth_reached = 0;
  bool partial = false;
  std::vector<VerifiedLeaf> leaves;

  double safe_volume() const { return proven_safe_volume + estimated_safe_volume; }
  double violating_volume() const { return proven_violating_volume + estimated_violating_volume; }
};

/// Depth-first bisection on the widest dimension (ties to the lowest
/// index). Undecided leaves that reach the resolution or the depth cap are
/// classified by the argmax at their centre and reported as estimated.
VerdictReport violation_rate(const MlpNetwork& net, const SafetyProperty& property, const VerifierBudget& budget,
                             BoundMode mode = BoundMode::linear_relax);

/// The two halves of `box` split along `dim`.
std::pair<BoxRegion, BoxRegion> bisect(const BoxRegion& box, Eigen::Index dim);
Eigen::Index split_dimension(const BoxRegion& box);

// Property files: {"properties": [{"name", "bounds": [[lo, hi], ...], "forbidden": [...], "allowed": [...]}]}
std::vector<SafetyProperty> load_properties(const std::filesystem::path& path);
void save_properties(std::span<const SafetyProperty> properties, const std::filesystem::path& path);

struct ModelEntry {
  std::string group;  // e.g. regime name
  std::string label;  // e.g. weight file
  std::filesystem::path weights;
};

struct SuiteResult {
  std::vector<std::string> groups;
  std::vector<std::string> properties;
  // reports[m][p] for models[m], properties[p]
  std::vector<ModelEntry> models;
  std::vector<std::vector<VerdictReport>> reports;
};

SuiteResult verify_suite(std::span<const ModelEntry> models, std::span<const SafetyProperty> properties,
                         const VerifierBudget& budget, BoundMode mode);

/// Group mean and std (population) of the violation rate for one property,
/// or across all properties when property < 0.
std::pair<double, double> suite_stat(const SuiteResult& suite, const std::string& group, int property);

void write_verdicts_csv(const SuiteResult& suite, const std::filesystem::path& path);
/// Rows theta0..theta4 + mean, columns mean/std per group, in percent.
void write_violation_table_csv(const SuiteResult& suite, const std::filesystem::path& path);

}  // namespace safenav
