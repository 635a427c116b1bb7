#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace safenav {

/// Raised when a caller breaks an operation's precondition.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Axis-aligned rectangle, min corner inclusive.
struct Rect {
  Vec2 min;
  Vec2 max;

  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  double area() const { return width() * height(); }
  double diagonal() const { return std::hypot(width(), height()); }
  bool contains(Vec2 p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
  bool strictly_contains(Vec2 p) const {
    return p.x > min.x && p.x < max.x && p.y > min.y && p.y < max.y;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Convex polygon, vertices counterclockwise.
using Polygon = std::vector<Vec2>;

struct Segment {
  Vec2 a;
  Vec2 b;
};

double wrap_angle(double radians);  // into [-pi, pi)

double signed_area(std::span<const Vec2> poly);
Rect bounding_box(std::span<const Vec2> poly);

bool is_simple(std::span<const Vec2> poly);
bool is_convex_ccw(std::span<const Vec2> poly);

// Closed test: boundary points count as inside.
bool point_in_convex(std::span<const Vec2> poly, Vec2 p);

double point_segment_distance(Vec2 p, const Segment& s);
bool segments_intersect(const Segment& s, const Segment& t);
double segment_segment_distance(const Segment& s, const Segment& t);

// Zero when the segment touches or enters the polygon.
double segment_polygon_distance(const Segment& s, std::span<const Vec2> poly);
double polygon_distance(std::span<const Vec2> p, std::span<const Vec2> q);

double rect_point_distance(const Rect& r, Vec2 p);

/// Ray parameter t >= 0 where origin + t*dir meets the segment, if any.
/// `dir` must be a unit vector for t to be a distance.
std::optional<double> ray_segment_hit(Vec2 origin, Vec2 dir, const Segment& s);

}  // namespace safenav
