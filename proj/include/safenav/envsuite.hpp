#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "safenav/sim.hpp"

namespace safenav {

/// Malformed environment, config or property file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

class UnsatisfiableRegionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DifficultyMetrics {
  double occupied_area = 0.0;     // m^2
  double min_obstacle_gap = 0.0;  // m; room diagonal when fewer than 2 obstacles
  friend bool operator==(const DifficultyMetrics&, const DifficultyMetrics&) = default;
};

struct EnvironmentSpec {
  std::string name;
  WorldGeometry geometry;
  std::vector<Rect> spawn_region;
  std::vector<Rect> goal_region;
  DifficultyMetrics difficulty;
  friend bool operator==(const EnvironmentSpec&, const EnvironmentSpec&) = default;
};

DifficultyMetrics compute_difficulty(const EnvironmentSpec& spec);

/// Checks geometry invariants and that every region lies inside the room.
void validate(const EnvironmentSpec& spec);

struct EpisodeStart {
  RobotState robot;
  Vec2 goal;
};

/// Rejection-samples a collision-free start and goal (robot radius
/// inflation) whose separation exceeds the goal radius.
EpisodeStart sample_episode(const World& world, const EnvironmentSpec& spec, const SimParams& params,
                            std::uint64_t seed);

EnvironmentSpec load_environment(const std::filesystem::path& path);
EnvironmentSpec parse_environment(const std::string& text, const std::string& source = "<string>");
void save_environment(const EnvironmentSpec& spec, const std::filesystem::path& path);
std::string serialize_environment(const EnvironmentSpec& spec);

/// Names of the shipped environments.
inline const std::vector<std::string>& curriculum_env_names() {
  static const std::vector<std::string> names{"baseEnv", "intEnv", "finalEnv"};
  return names;
}
inline const std::vector<std::string>& test_env_names() {
  static const std::vector<std::string> names{"testEnv1", "testEnv2", "testEnv3", "testEnv4", "testEnv5"};
  return names;
}

std::filesystem::path default_env_dir();

/// Loads `<dir>/<name>.json`.
EnvironmentSpec load_named_environment(const std::filesystem::path& dir, const std::string& name);

}  // namespace safenav
