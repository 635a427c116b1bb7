#include "safenav/envsuite.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "safenav/rng.hpp"

namespace safenav {

using nlohmann::json;

DifficultyMetrics compute_difficulty(const EnvironmentSpec& spec) {
  DifficultyMetrics m;
  const auto& obstacles = spec.geometry.obstacles;
  for (const Obstacle& o : obstacles) {
    for (const Polygon& p : o.parts) m.occupied_area += std::abs(signed_area(p));
  }
  if (obstacles.size() < 2) {
    m.min_obstacle_gap = spec.geometry.bounds.diagonal();
    return m;
  }
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    for (std::size_t j = i + 1; j < obstacles.size(); ++j) {
      for (const Polygon& p : obstacles[i].parts) {
        for (const Polygon& q : obstacles[j].parts) gap = std::min(gap, polygon_distance(p, q));
      }
    }
  }
  m.min_obstacle_gap = gap;
  return m;
}

void validate(const EnvironmentSpec& spec) {
  validate(spec.geometry);
  if (spec.spawn_region.empty()) throw ContractError(spec.name + ": spawn_region is empty");
  if (spec.goal_region.empty()) throw ContractError(spec.name + ": goal_region is empty");
  for (const auto* regions : {&spec.spawn_region, &spec.goal_region}) {
    for (const Rect& r : *regions) {
      if (!(r.width() >= 0.0 && r.height() >= 0.0) || !spec.geometry.bounds.contains(r.min) ||
          !spec.geometry.bounds.contains(r.max)) {
        throw ContractError(spec.name + ": region outside the room or inverted");
      }
    }
  }
}

namespace {

constexpr int kMaxRejections = 10'000;

Vec2 sample_point(Rng& rng, const std::vector<Rect>& regions) {
  std::vector<double> areas;
  areas.reserve(regions.size());
  for (const Rect& r : regions) areas.push_back(r.area());
  const Rect& r = regions[rng.categorical(areas)];
  return {rng.uniform(r.min.x, r.max.x), rng.uniform(r.min.y, r.max.y)};
}

}  // namespace

EpisodeStart sample_episode(const World& world, const EnvironmentSpec& spec, const SimParams& params,
                            std::uint64_t seed) {
  if (spec.spawn_region.empty() || spec.goal_region.empty()) {
    throw ContractError("sample_episode needs non-empty spawn and goal regions");
  }
  Rng rng(seed);
  EpisodeStart out;
  out.robot.radius = params.robot_radius;

  int rejections = 0;
  for (;;) {
    const Vec2 p = sample_point(rng, spec.spawn_region);
    if (!world.disc_collides(p, params.robot_radius)) {
      out.robot.position = p;
      break;
    }
    if (++rejections >= kMaxRejections) {
      throw UnsatisfiableRegionError(spec.name + ": no collision-free start in spawn_region");
    }
  }
  out.robot.heading = rng.uniform(-std::numbers::pi, std::numbers::pi);

  rejections = 0;
  for (;;) {
    const Vec2 g = sample_point(rng, spec.goal_region);
    if (!world.disc_collides(g, params.robot_radius) && distance(g, out.robot.position) > params.goal_radius) {
      out.goal = g;
      break;
    }
    if (++rejections >= kMaxRejections) {
      throw UnsatisfiableRegionError(spec.name + ": no collision-free goal in goal_region");
    }
  }
  return out;
}

// ---- serialization --------------------------------------------------------

namespace {

const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path.empty() ? key : path + "." + key, "missing required field");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path, "expected a number");
  return v.get<double>();
}

Vec2 parse_point(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw ParseError(path, "expected [x, y]");
  return {number(v[0], path + "[0]"), number(v[1], path + "[1]")};
}

Rect parse_rect(const json& v, const std::string& path) {
  return {parse_point(field(v, "min", path), path + ".min"), parse_point(field(v, "max", path), path + ".max")};
}

std::vector<Rect> parse_rects(const json& v, const std::string& path) {
  if (!v.is_array()) throw ParseError(path, "expected an array of rectangles");
  std::vector<Rect> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(parse_rect(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

json point_json(Vec2 p) { return json::array({p.x, p.y}); }
json rect_json(const Rect& r) { return {{"min", point_json(r.min)}, {"max", point_json(r.max)}}; }

}  // namespace

EnvironmentSpec parse_environment(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "line L, column C" inside the message.
    throw ParseError(source, e.what());
  }

  EnvironmentSpec spec;
  const json& name = field(doc, "name", "");
  if (!name.is_string()) throw ParseError("name", "expected a string");
  spec.name = name.get<std::string>();

  const json& geo = field(doc, "geometry", "");
  spec.geometry.bounds = parse_rect(field(geo, "bounds", "geometry"), "geometry.bounds");
  const json& obstacles = field(geo, "obstacles", "geometry");
  if (!obstacles.is_array()) throw ParseError("geometry.obstacles", "expected an array");
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const std::string opath = "geometry.obstacles[" + std::to_string(i) + "]";
    const json& parts = field(obstacles[i], "parts", opath);
    if (!parts.is_array()) throw ParseError(opath + ".parts", "expected an array of polygons");
    Obstacle o;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const std::string ppath = opath + ".parts[" + std::to_string(j) + "]";
      if (!parts[j].is_array()) throw ParseError(ppath, "expected an array of [x, y] vertices");
      Polygon poly;
      for (std::size_t k = 0; k < parts[j].size(); ++k) {
        poly.push_back(parse_point(parts[j][k], ppath + "[" + std::to_string(k) + "]"));
      }
      o.parts.push_back(std::move(poly));
    }
    spec.geometry.obstacles.push_back(std::move(o));
  }
  spec.spawn_region = parse_rects(field(doc, "spawn_region", ""), "spawn_region");
  spec.goal_region = parse_rects(field(doc, "goal_region", ""), "goal_region");

  try {
    validate(spec);
  } catch (const ContractError& e) {
    throw ParseError(source, e.what());
  }
  spec.difficulty = compute_difficulty(spec);
  return spec;
}

std::string serialize_environment(const EnvironmentSpec& spec) {
  json obstacles = json::array();
  for (const Obstacle& o : spec.geometry.obstacles) {
    json parts = json::array();
    for (const Polygon& p : o.parts) {
      json verts = json::array();
      for (Vec2 v : p) verts.push_back(point_json(v));
      parts.push_back(std::move(verts));
    }
    obstacles.push_back({{"parts", std::move(parts)}});
  }
  json spawn = json::array();
  for (const Rect& r : spec.spawn_region) spawn.push_back(rect_json(r));
  json goal = json::array();
  for (const Rect& r : spec.goal_region) goal.push_back(rect_json(r));

  json doc;
  doc["name"] = spec.name;
  doc["geometry"] = {{"bounds", rect_json(spec.geometry.bounds)}, {"obstacles", std::move(obstacles)}};
  doc["spawn_region"] = std::move(spawn);
  doc["goal_region"] = std::move(goal);
  // Informational only; recomputed on load.
  doc["difficulty"] = {{"occupied_area", spec.difficulty.occupied_area},
                       {"min_obstacle_gap", spec.difficulty.min_obstacle_gap}};
  return doc.dump(2) + "\n";
}

EnvironmentSpec load_environment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_environment(buf.str(), path.string());
}

void save_environment(const EnvironmentSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_environment(spec);
}

std::filesystem::path default_env_dir() { return std::filesystem::path(SAFENAV_DATA_DIR) / "envs"; }

EnvironmentSpec load_named_environment(const std::filesystem::path& dir, const std::string& name) {
  return load_environment(dir / (name + ".json"));
}

}  // namespace safenav
