#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace travlearn {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

/// Planar rigid transform: translation (x, y) in meters, heading in radians.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  bool operator==(const Pose2&) const = default;

  Vec2 translation() const { return {x, y}; }

  /// Maps a point expressed in this frame into the parent frame.
  Vec2 apply(Vec2 p) const {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
  }

  /// Maps a parent-frame point into this frame.
  Vec2 inverse_apply(Vec2 p) const {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double dx = p.x - x;
    const double dy = p.y - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }

  Pose2 compose(const Pose2& child) const {
    const Vec2 t = apply({child.x, child.y});
    return {t.x, t.y, theta + child.theta};
  }

  double distance_to(const Pose2& o) const { return std::hypot(x - o.x, y - o.y); }
};

double wrap_angle(double a);

using Polygon = std::vector<Vec2>;

/// Shoelace area, always non-negative.
double polygon_area(std::span<const Vec2> poly);

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
Polygon convex_hull(std::vector<Vec2> points);

/// Inclusive test against a counter-clockwise convex polygon.
bool point_in_convex(std::span<const Vec2> ccw_poly, Vec2 p);

struct Aabb {
  Vec2 lo{INFINITY, INFINITY};
  Vec2 hi{-INFINITY, -INFINITY};

  void expand(Vec2 p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  void expand(const Aabb& o) {
    expand(o.lo);
    expand(o.hi);
  }
  bool contains(Vec2 p) const { return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y; }
  bool empty() const { return lo.x > hi.x; }
};

Aabb bounds_of(std::span<const Vec2> pts);

/// SplitMix64 finaliser, used to derive independent RNG streams from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double logistic(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace travlearn
