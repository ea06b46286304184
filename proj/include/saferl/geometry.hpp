#pragma once

#include <cmath>
#include <variant>
#include <vector>

namespace saferl::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

struct Circle {
  Vec2 center;
  double radius = 0.0;
};

// Axis-angle rectangle: half extents along its local axes, rotated by yaw.
struct Rect {
  Vec2 center;
  double half_x = 0.0;
  double half_y = 0.0;
  double yaw = 0.0;
};

using Obstacle = std::variant<Circle, Rect>;

// Signed distance to the obstacle surface: positive outside, negative inside.
double signed_distance(const Obstacle& obs, const Vec2& p);

// Distance along a ray from `origin` in direction `dir` (unit) to the first
// obstacle hit, or +inf when the ray misses.
double ray_hit(const Obstacle& obs, const Vec2& origin, const Vec2& dir);

// Distance to the boundary of the square room [0, side] x [0, side] along a
// ray starting inside.
double ray_hit_room_walls(double side, const Vec2& origin, const Vec2& dir);

// Maximum circumradius of the obstacle around its center.
double bounding_radius(const Obstacle& obs);

}  // namespace saferl::env
