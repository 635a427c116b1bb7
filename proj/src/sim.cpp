#include "safenav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace safenav {

namespace {

constexpr double kPi = std::numbers::pi;

double deg2rad(double deg) { return deg * kPi / 180.0; }

}  // namespace

std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::none: return "none";
    case Terminal::crashed: return "crashed";
    case Terminal::reached: return "reached";
    case Terminal::timeout: return "timeout";
  }
  return "unknown";
}

void validate(const WorldGeometry& geometry) {
  const Rect& b = geometry.bounds;
  if (!(b.width() > 0.0 && b.height() > 0.0)) {
    throw ContractError("world bounds must have positive width and height");
  }
  for (std::size_t i = 0; i < geometry.obstacles.size(); ++i) {
    const auto& parts = geometry.obstacles[i].parts;
    if (parts.empty()) throw ContractError("obstacle " + std::to_string(i) + " has no parts");
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const std::string where = "obstacle " + std::to_string(i) + " part " + std::to_string(j);
      if (parts[j].size() < 3) throw ContractError(where + " has fewer than 3 vertices");
      if (!is_convex_ccw(parts[j])) {
        throw ContractError(where + " is not a simple convex counterclockwise polygon");
      }
      for (Vec2 v : parts[j]) {
        if (!b.strictly_contains(v)) throw ContractError(where + " has a vertex outside the bounds");
      }
    }
  }
}

void validate(const SimParams& p) {
  if (!(p.step_length > 0.0)) throw ContractError("step_length must be positive");
  if (!(p.turn_angle_deg > 0.0)) throw ContractError("turn_angle_deg must be positive");
  if (!(p.goal_radius > 0.0)) throw ContractError("goal_radius must be positive");
  if (!(p.robot_radius > 0.0)) throw ContractError("robot_radius must be positive");
  if (!(p.max_range > 0.0)) throw ContractError("max_range must be positive");
  if (p.max_steps < 1) throw ContractError("max_steps must be at least 1");
  if (p.n_rays < 1) throw ContractError("n_rays must be at least 1");
  if (p.translate_angles_deg.empty()) throw ContractError("at least one translation direction is required");
}

World::World(WorldGeometry geometry) : geometry_(std::move(geometry)) {
  validate(geometry_);
  for (const Obstacle& o : geometry_.obstacles) {
    for (const Polygon& poly : o.parts) {
      parts_.push_back({poly, bounding_box(poly)});
    }
  }
}

double World::raycast(Vec2 origin, double angle, double max_range) const {
  if (!bounds().contains(origin)) throw ContractError("raycast origin outside world bounds");
  const Vec2 dir{std::cos(angle), std::sin(angle)};
  double best = max_range;

  const Rect& b = bounds();
  const Segment walls[4] = {{{b.min.x, b.min.y}, {b.max.x, b.min.y}},
                            {{b.max.x, b.min.y}, {b.max.x, b.max.y}},
                            {{b.max.x, b.max.y}, {b.min.x, b.max.y}},
                            {{b.min.x, b.max.y}, {b.min.x, b.min.y}}};
  for (const Segment& w : walls) {
    if (auto t = ray_segment_hit(origin, dir, w); t && *t < best) best = *t;
  }
  for (const Part& part : parts_) {
    if (rect_point_distance(part.box, origin) >= best) continue;
    const std::size_t n = part.vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Segment e{part.vertices[i], part.vertices[(i + 1) % n]};
      if (auto t = ray_segment_hit(origin, dir, e); t && *t < best) best = *t;
    }
  }
  return best;
}

bool World::sweep_collides(Vec2 from, Vec2 to, double radius) const {
  const Rect& b = bounds();
  // The room is convex, so checking both endpoints covers the whole sweep.
  for (Vec2 p : {from, to}) {
    if (p.x - radius < b.min.x || p.x + radius > b.max.x || p.y - radius < b.min.y ||
        p.y + radius > b.max.y) {
      return true;
    }
  }
  const Segment sweep{from, to};
  const double reach = distance(from, to) + radius;
  for (const Part& part : parts_) {
    if (rect_point_distance(part.box, from) >= reach) continue;
    if (segment_polygon_distance(sweep, part.vertices) < radius) return true;
  }
  return false;
}

double raycast(const World& world, Vec2 origin, double angle, double max_range) {
  return world.raycast(origin, angle, max_range);
}

Observation observe(const World& world, const RobotState& robot, Vec2 goal, const SimParams& params) {
  if (!world.bounds().contains(robot.position)) throw ContractError("robot outside world bounds");
  if (!world.bounds().contains(goal)) throw ContractError("goal outside world bounds");

  Observation obs;
  obs.values.resize(static_cast<std::size_t>(params.n_rays) + 2);
  const double spacing = 2.0 * kPi / params.n_rays;
  for (int i = 0; i < params.n_rays; ++i) {
    const double r = world.raycast(robot.position, robot.heading + spacing * i, params.max_range);
    obs.values[static_cast<std::size_t>(i)] = std::min(r, params.max_range) / params.max_range;
  }
  const Vec2 to_goal = goal - robot.position;
  const double dist = norm(to_goal);
  obs.values[obs.values.size() - 2] = std::min(1.0, dist / world.bounds().diagonal());
  const double bearing = dist == 0.0 ? 0.0 : wrap_angle(std::atan2(to_goal.y, to_goal.x) - robot.heading);
  obs.values.back() = std::clamp((bearing + kPi) / (2.0 * kPi), 0.0, 1.0);
  return obs;
}

std::pair<RobotState, StepOutcome> step(const World& world, const RobotState& robot, Vec2 goal,
                                        int action, const SimParams& params) {
  if (action < 0 || action >= params.n_actions()) throw ContractError("action index out of range");

  RobotState next = robot;
  StepOutcome out;
  const double d_prev = distance(robot.position, goal);

  const int n_translate = static_cast<int>(params.translate_angles_deg.size());
  if (action < n_translate) {
    const double dir =
        robot.heading + deg2rad(params.translate_angles_deg[static_cast<std::size_t>(action)]);
    const Vec2 target = robot.position + params.step_length * Vec2{std::cos(dir), std::sin(dir)};
    if (world.sweep_collides(robot.position, target, robot.radius)) {
      out.reward = params.reward_crash;
      out.terminal = Terminal::crashed;
      out.observation = observe(world, robot, goal, params);
      return {robot, out};
    }
    next.position = target;
  } else {
    const double turn = deg2rad(params.turn_angle_deg);
    next.heading = wrap_angle(robot.heading + (action == params.rotate_left_action() ? turn : -turn));
  }

  const double d_now = distance(next.position, goal);
  if (d_now < params.goal_radius) {
    out.reward = params.reward_reach;
    out.terminal = Terminal::reached;
  } else {
    out.reward = params.progress_gain * (d_prev - d_now);
  }
  out.observation = observe(world, next, goal, params);
  return {next, out};
}

Episode::Episode(const World& world, const SimParams& params, RobotState start, Vec2 goal)
    : world_(&world), params_(params), robot_(start), goal_(goal) {
  if (world.disc_collides(start.position, start.radius)) throw ContractError("episode starts in collision");
  last_.observation = observe(world, robot_, goal_, params_);
  initial_distance_ = distance(start.position, goal);
}

const StepOutcome& Episode::step(int action) {
  if (done()) throw ContractError("step called on a terminated episode");
  auto [next, outcome] = safenav::step(*world_, robot_, goal_, action, params_);
  path_length_ += distance(robot_.position, next.position);
  robot_ = next;
  ++steps_;
  if (outcome.terminal == Terminal::none && steps_ >= params_.max_steps) outcome.terminal = Terminal::timeout;
  total_reward_ += outcome.reward;
  last_ = std::move(outcome);
  return last_;
}

}  // namespace safenav
