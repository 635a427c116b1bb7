#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "safenav/envsuite.hpp"
#include "safenav/neural.hpp"
#include "safenav/rng.hpp"
#include "safenav/sim.hpp"

namespace safenav::testing {

inline std::vector<Segment> all_edges(const WorldGeometry& g) {
  const Rect& b = g.bounds;
  std::vector<Segment> edges{{{b.min.x, b.min.y}, {b.max.x, b.min.y}},
                             {{b.max.x, b.min.y}, {b.max.x, b.max.y}},
                             {{b.max.x, b.max.y}, {b.min.x, b.max.y}},
                             {{b.min.x, b.max.y}, {b.min.x, b.min.y}}};
  for (const auto& o : g.obstacles) {
    for (const auto& p : o.parts) {
      for (std::size_t i = 0; i < p.size(); ++i) edges.push_back({p[i], p[(i + 1) % p.size()]});
    }
  }
  return edges;
}

// Solves origin + t*d = a + s*(b - a) for every edge with Cramer's rule.
inline double brute_raycast(const WorldGeometry& g, Vec2 origin, double angle, double max_range) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  double best = max_range;
  for (const Segment& e : all_edges(g)) {
    const double ex = e.b.x - e.a.x, ey = e.b.y - e.a.y;
    const double det = -dx * ey + dy * ex;
    if (std::abs(det) < 1e-14) continue;
    const double rx = e.a.x - origin.x, ry = e.a.y - origin.y;
    const double t = (-rx * ey + ry * ex) / det;
    const double s = (dx * ry - dy * rx) / det;
    if (t >= 0.0 && s >= -1e-12 && s <= 1.0 + 1e-12) best = std::min(best, t);
  }
  return best;
}

inline MlpNetwork random_net(const std::vector<int>& sizes, Head head, Rng& rng, double scale = 1.0) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer l;
    l.weights = Eigen::MatrixXd(sizes[i + 1], sizes[i]);
    l.biases = Eigen::VectorXd(sizes[i + 1]);
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = rng.uniform(-scale, scale);
      l.biases(r) = rng.uniform(-scale, scale);
    }
    l.activation = i + 2 == sizes.size() ? Activation::identity : Activation::tanh;
    layers.push_back(std::move(l));
  }
  return MlpNetwork(std::move(layers), head);
}

// Plain loops and std::tanh; independent of the library forward pass.
inline std::vector<double> naive_logits(const MlpNetwork& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (const DenseLayer& l : net.layers()) {
    std::vector<double> z(static_cast<std::size_t>(l.outputs()));
    for (int r = 0; r < l.outputs(); ++r) {
      double s = l.biases(r);
      for (int c = 0; c < l.inputs(); ++c) s += l.weights(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = l.activation == Activation::tanh ? std::tanh(s) : s;
    }
    a = std::move(z);
  }
  return a;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "safenav_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Polygon square(double x, double y, double side) {
  return {{x, y}, {x + side, y}, {x + side, y + side}, {x, y + side}};
}

inline EnvironmentSpec room(std::vector<Obstacle> obstacles = {}, double size = 50.0) {
  EnvironmentSpec s;
  s.name = "room";
  s.geometry.bounds = {{0.0, 0.0}, {size, size}};
  s.geometry.obstacles = std::move(obstacles);
  s.spawn_region = {{{1.0, 1.0}, {size - 1.0, size - 1.0}}};
  s.goal_region = s.spawn_region;
  s.difficulty = compute_difficulty(s);
  return s;
}

}  // namespace safenav::testing
