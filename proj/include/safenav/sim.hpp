#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "safenav/geometry.hpp"

namespace safenav {

/// One obstacle. Non-convex shapes such as U-walls are unions of
/// non-overlapping convex parts; difficulty metrics treat the parts of one
/// obstacle as a single body.
struct Obstacle {
  std::vector<Polygon> parts;
  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

struct WorldGeometry {
  Rect bounds;
  std::vector<Obstacle> obstacles;
  friend bool operator==(const WorldGeometry&, const WorldGeometry&) = default;
};

// Throws ContractError naming the first broken invariant.
void validate(const WorldGeometry& geometry);

struct RobotState {
  Vec2 position;
  double heading = 0.0;  // [-pi, pi)
  double radius = 0.4;
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct SimParams {
  double step_length = 0.5;
  double turn_angle_deg = 30.0;
  double goal_radius = 1.0;
  double robot_radius = 0.4;
  double max_range = 10.0;
  int max_steps = 500;
  int n_rays = 51;
  double reward_crash = -100.0;
  double reward_reach = 300.0;
  double progress_gain = 10.0;
  // Translation directions relative to heading, degrees; positive = left.
  std::vector<double> translate_angles_deg{-90.0, -45.0, 0.0, 45.0, 90.0};

  int n_actions() const { return static_cast<int>(translate_angles_deg.size()) + 2; }
  int rotate_left_action() const { return static_cast<int>(translate_angles_deg.size()); }
  int rotate_right_action() const { return rotate_left_action() + 1; }
  int observation_size() const { return n_rays + 2; }
};

void validate(const SimParams& params);

/// Normalized network input: n_rays scans, then goal distance and bearing.
struct Observation {
  std::vector<double> values;

  std::size_t n_rays() const { return values.size() - 2; }
  double scan(std::size_t i) const { return values[i]; }
  double goal_distance() const { return values[values.size() - 2]; }
  double goal_bearing() const { return values.back(); }
};

enum class Terminal { none, crashed, reached, timeout };

std::string_view to_string(Terminal t);

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  Terminal terminal = Terminal::none;
};

/// Validated, immutable world with precomputed edges for fast queries.
class World {
 public:
  explicit World(WorldGeometry geometry);

  const WorldGeometry& geometry() const { return geometry_; }
  const Rect& bounds() const { return geometry_.bounds; }

  // Nearest hit along the ray, capped at max_range.
  double raycast(Vec2 origin, double angle, double max_range) const;

  // True when a disc of `radius` centred anywhere on the segment overlaps
  // an obstacle or leaves the room.
  bool sweep_collides(Vec2 from, Vec2 to, double radius) const;
  bool disc_collides(Vec2 center, double radius) const { return sweep_collides(center, center, radius); }

 private:
  struct Part {
    Polygon vertices;
    Rect box;
  };

  WorldGeometry geometry_;
  std::vector<Part> parts_;
};

double raycast(const World& world, Vec2 origin, double angle, double max_range);

Observation observe(const World& world, const RobotState& robot, Vec2 goal, const SimParams& params);

/// Pure single-step transition: motion, collision, goal test and reward.
/// Never reports a timeout; Episode owns the step counter.
std::pair<RobotState, StepOutcome> step(const World& world, const RobotState& robot, Vec2 goal,
                                        int action, const SimParams& params);

/// Stateful episode on a shared world. The world must outlive the episode.
class Episode {
 public:
  Episode(const World& world, const SimParams& params, RobotState start, Vec2 goal);

  const StepOutcome& step(int action);

  const Observation& observation() const { return last_.observation; }
  const RobotState& robot() const { return robot_; }
  Vec2 goal() const { return goal_; }
  int steps() const { return steps_; }
  bool done() const { return last_.terminal != Terminal::none; }
  Terminal terminal() const { return last_.terminal; }
  double path_length() const { return path_length_; }
  double initial_distance() const { return initial_distance_; }
  double total_reward() const { return total_reward_; }

 private:
  const World* world_;
  SimParams params_;
  RobotState robot_;
  Vec2 goal_;
  StepOutcome last_;
  int steps_ = 0;
  double path_length_ = 0.0;
  double initial_distance_ = 0.0;
  double total_reward_ = 0.0;
};

}  // namespace safenav
