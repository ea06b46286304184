#include "saferl/geometry.hpp"

#include <algorithm>
#include <limits>

namespace saferl::env {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.283185307179586476925287;
}  // namespace

double wrap_angle(double theta) {
  theta = std::fmod(theta, kTwoPi);
  if (theta <= -3.141592653589793238462643) theta += kTwoPi;
  if (theta > 3.141592653589793238462643) theta -= kTwoPi;
  return theta;
}

double signed_distance(const Obstacle& obs, const Vec2& p) {
  if (const auto* c = std::get_if<Circle>(&obs)) {
    return dist(p, c->center) - c->radius;
  }
  const auto& r = std::get<Rect>(obs);
  // Transform into the box frame.
  const double ct = std::cos(r.yaw), st = std::sin(r.yaw);
  const double dx = p.x - r.center.x, dy = p.y - r.center.y;
  const double lx = ct * dx + st * dy;
  const double ly = -st * dx + ct * dy;
  const double qx = std::abs(lx) - r.half_x;
  const double qy = std::abs(ly) - r.half_y;
  const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(qx, qy), 0.0);
}

namespace {

double ray_circle(const Circle& c, const Vec2& o, const Vec2& d) {
  const double mx = o.x - c.center.x, my = o.y - c.center.y;
  const double b = mx * d.x + my * d.y;
  const double cc = mx * mx + my * my - c.radius * c.radius;
  if (cc <= 0.0) return 0.0;  // starting inside
  const double disc = b * b - cc;
  if (disc < 0.0) return kInf;
  const double t = -b - std::sqrt(disc);
  return t >= 0.0 ? t : kInf;
}

// Slab test in the box frame.
double ray_rect(const Rect& r, const Vec2& o, const Vec2& d) {
  const double ct = std::cos(r.yaw), st = std::sin(r.yaw);
  const double px = ct * (o.x - r.center.x) + st * (o.y - r.center.y);
  const double py = -st * (o.x - r.center.x) + ct * (o.y - r.center.y);
  const double dx = ct * d.x + st * d.y;
  const double dy = -st * d.x + ct * d.y;

  double tmin = 0.0, tmax = kInf;
  const double half[2] = {r.half_x, r.half_y};
  const double pos[2] = {px, py};
  const double dir[2] = {dx, dy};
  for (int i = 0; i < 2; ++i) {
    if (std::abs(dir[i]) < 1e-15) {
      if (std::abs(pos[i]) > half[i]) return kInf;
    } else {
      double t1 = (-half[i] - pos[i]) / dir[i];
      double t2 = (half[i] - pos[i]) / dir[i];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
      if (tmin > tmax) return kInf;
    }
  }
  return tmin;
}

}  // namespace

double ray_hit(const Obstacle& obs, const Vec2& origin, const Vec2& dir) {
  if (const auto* c = std::get_if<Circle>(&obs)) return ray_circle(*c, origin, dir);
  return ray_rect(std::get<Rect>(obs), origin, dir);
}

double ray_hit_room_walls(double side, const Vec2& origin, const Vec2& dir) {
  double t = kInf;
  if (dir.x > 1e-15) t = std::min(t, (side - origin.x) / dir.x);
  if (dir.x < -1e-15) t = std::min(t, -origin.x / dir.x);
  if (dir.y > 1e-15) t = std::min(t, (side - origin.y) / dir.y);
  if (dir.y < -1e-15) t = std::min(t, -origin.y / dir.y);
  return std::max(t, 0.0);
}

double bounding_radius(const Obstacle& obs) {
  if (const auto* c = std::get_if<Circle>(&obs)) return c->radius;
  const auto& r = std::get<Rect>(obs);
  return std::hypot(r.half_x, r.half_y);
}

}  // namespace saferl::env
