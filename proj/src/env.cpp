#include "saferl/env.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace saferl::env {

double safety_margin(const EnvironmentSpec& env, const RobotState& state) {
  const Vec2 p{state.x, state.y};
  const double side = env.side();
  double closest = std::min(std::min(p.x, side - p.x), std::min(p.y, side - p.y));
  for (const auto& obs : env.obstacles) closest = std::min(closest, signed_distance(obs, p));
  return -closest;
}

double target_margin(const EnvironmentSpec& env, const RobotState& state) {
  return dist({state.x, state.y}, env.goal_center) - env.goal_radius;
}

Observation observe(const EnvironmentSpec& env, const RobotState& state) {
  Observation out;
  const Vec2 p{state.x, state.y};
  for (int i = 0; i < kNumRays; ++i) {
    // Fan over the frontal cone with an exact forward ray at i = kNumRays/2.
    const double bearing = state.theta - 0.5 * kRayFov + i * (kRayFov / kNumRays);
    const Vec2 dir{std::cos(bearing), std::sin(bearing)};
    double hit = ray_hit_room_walls(env.side(), p, dir);
    for (const auto& obs : env.obstacles) hit = std::min(hit, ray_hit(obs, p, dir));
    out.rays[i] = std::min(hit, kRayMaxRange) / kRayMaxRange;
  }
  out.goal_distance = dist(p, env.goal_center);
  out.goal_bearing =
      wrap_angle(std::atan2(env.goal_center.y - p.y, env.goal_center.x - p.x) - state.theta);
  return out;
}

double proxy_reward(const EnvironmentSpec& env, const RobotState& prev, const RobotState& next) {
  const double d0 = dist({env.start_pose.x, env.start_pose.y}, env.goal_center);
  const double d_prev = dist({prev.x, prev.y}, env.goal_center);
  const double d_next = dist({next.x, next.y}, env.goal_center);
  return std::clamp((d_prev - d_next) / d0, -0.1, 0.1);
}

StepResult step(const EnvironmentSpec& env, const RobotState& state, const Action& action) {
  StepResult res;
  const double v = std::clamp(action.v, kVelocityMin, kVelocityMax);
  const double w = std::clamp(action.w, -kAngularMax, kAngularMax);
  res.action_clamped = v != action.v || w != action.w;

  res.next_state.x = state.x + v * std::cos(state.theta) * kDt;
  res.next_state.y = state.y + v * std::sin(state.theta) * kDt;
  res.next_state.theta = wrap_angle(state.theta + w * kDt);

  res.g_margin = safety_margin(env, res.next_state);
  res.l_margin = target_margin(env, res.next_state);
  res.reward = proxy_reward(env, state, res.next_state);
  res.observation = observe(env, res.next_state);
  if (res.g_margin >= 0.0)
    res.done = DoneKind::kCollided;
  else if (res.l_margin <= 0.0)
    res.done = DoneKind::kReachedTarget;
  return res;
}

namespace {

// Breadth-first feasibility search over cell centers with the requested
// clearance; 8-connected.
bool path_exists(const EnvironmentSpec& spec, double clearance, int n_cells) {
  const double side = spec.side();
  const double cell = side / (n_cells - 1);
  auto idx_of = [&](double v) {
    return std::clamp(static_cast<int>(std::lround(v / cell)), 0, n_cells - 1);
  };
  auto free_cell = [&](int ix, int iy) {
    RobotState s{ix * cell, iy * cell, 0.0};
    return safety_margin(spec, s) <= -clearance;
  };

  const int sx = idx_of(spec.start_pose.x), sy = idx_of(spec.start_pose.y);
  if (!free_cell(sx, sy)) return false;

  std::vector<char> visited(static_cast<std::size_t>(n_cells) * n_cells, 0);
  std::queue<std::pair<int, int>> frontier;
  frontier.push({sx, sy});
  visited[sy * n_cells + sx] = 1;
  while (!frontier.empty()) {
    auto [ix, iy] = frontier.front();
    frontier.pop();
    const double gd = dist({ix * cell, iy * cell}, spec.goal_center);
    if (gd <= spec.goal_radius) return true;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = ix + dx, ny = iy + dy;
        if (nx < 0 || ny < 0 || nx >= n_cells || ny >= n_cells) continue;
        if (visited[ny * n_cells + nx]) continue;
        visited[ny * n_cells + nx] = 1;
        if (free_cell(nx, ny)) frontier.push({nx, ny});
      }
    }
  }
  return false;
}

}  // namespace

EnvironmentSpec generate_environment(std::uint64_t seed, const GenConfig& cfg) {
  if (cfg.n_obstacles_min < 0 || cfg.n_obstacles_max < cfg.n_obstacles_min)
    throw GenerationError("invalid obstacle count range");
  RngStream rng(seed);
  const double side = 2.0 * cfg.room_half_extent;

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    EnvironmentSpec spec;
    spec.room_half_extent = cfg.room_half_extent;
    spec.goal_radius = cfg.goal_radius;
    spec.rng_seed = seed;

    const int n_obs =
        cfg.n_obstacles_min + rng.uniform_int(cfg.n_obstacles_max - cfg.n_obstacles_min + 1);
    bool placement_ok = true;
    for (int i = 0; i < n_obs; ++i) {
      Obstacle obs;
      if (rng.bernoulli(0.5)) {
        Circle c;
        c.radius = rng.uniform(cfg.circle_radius_min, cfg.circle_radius_max);
        const double m = c.radius;
        if (2.0 * m >= side) {
          placement_ok = false;
          break;
        }
        c.center = {rng.uniform(m, side - m), rng.uniform(m, side - m)};
        obs = c;
      } else {
        Rect r;
        r.half_x = rng.uniform(cfg.rect_half_extent_min, cfg.rect_half_extent_max);
        r.half_y = rng.uniform(cfg.rect_half_extent_min, cfg.rect_half_extent_max);
        r.yaw = rng.uniform(-3.141592653589793, 3.141592653589793);
        const double m = std::hypot(r.half_x, r.half_y);
        if (2.0 * m >= side) {
          placement_ok = false;
          break;
        }
        r.center = {rng.uniform(m, side - m), rng.uniform(m, side - m)};
        obs = r;
      }
      spec.obstacles.push_back(obs);
    }
    if (!placement_ok) continue;

    // Obstacle layouts are kept while the goal and start resample; a fresh
    // layout is drawn only when no feasible pair shows up.
    bool goal_ok = false;
    for (int t = 0; t < 50 && !goal_ok; ++t) {
      spec.goal_center = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
      RobotState goal_probe{spec.goal_center.x, spec.goal_center.y, 0.0};
      goal_ok = safety_margin(spec, goal_probe) <= -cfg.min_clearance;
    }
    if (!goal_ok) continue;

    bool start_ok = false;
    for (int t = 0; t < 50 && !start_ok; ++t) {
      spec.start_pose.x = rng.uniform(0.0, side);
      spec.start_pose.y = rng.uniform(0.0, side);
      spec.start_pose.theta = rng.uniform(-3.141592653589793, 3.141592653589793);
      start_ok = safety_margin(spec, spec.start_pose) <= -cfg.min_clearance &&
                 dist({spec.start_pose.x, spec.start_pose.y}, spec.goal_center) >=
                     cfg.min_start_goal_dist &&
                 target_margin(spec, spec.start_pose) > 0.0;
    }
    if (!start_ok) continue;

    if (!path_exists(spec, cfg.path_margin, cfg.path_grid)) continue;
    return spec;
  }
  throw GenerationError("environment generation failed after max_attempts; "
                        "the generator config is over-constrained");
}

std::vector<std::string> validate_environment(const EnvironmentSpec& spec, const GenConfig& cfg) {
  std::vector<std::string> bad;
  const double side = spec.side();

  for (std::size_t i = 0; i < spec.obstacles.size(); ++i) {
    const auto& obs = spec.obstacles[i];
    bool inside = true;
    if (const auto* c = std::get_if<Circle>(&obs)) {
      if (c->radius <= 0.0) bad.push_back("obstacle " + std::to_string(i) + ": radius <= 0");
      inside = c->center.x - c->radius >= 0.0 && c->center.x + c->radius <= side &&
               c->center.y - c->radius >= 0.0 && c->center.y + c->radius <= side;
    } else {
      const auto& r = std::get<Rect>(obs);
      if (r.half_x <= 0.0 || r.half_y <= 0.0)
        bad.push_back("obstacle " + std::to_string(i) + ": half extent <= 0");
      const double ct = std::cos(r.yaw), st = std::sin(r.yaw);
      for (int sx = -1; sx <= 1; sx += 2) {
        for (int sy = -1; sy <= 1; sy += 2) {
          const double cx = r.center.x + sx * r.half_x * ct - sy * r.half_y * st;
          const double cy = r.center.y + sx * r.half_x * st + sy * r.half_y * ct;
          if (cx < 0.0 || cx > side || cy < 0.0 || cy > side) inside = false;
        }
      }
    }
    if (!inside) bad.push_back("obstacle " + std::to_string(i) + ": extends outside the room");
  }

  RobotState goal_probe{spec.goal_center.x, spec.goal_center.y, 0.0};
  if (safety_margin(spec, goal_probe) > -cfg.min_clearance)
    bad.push_back("goal center clearance below min_clearance");
  if (safety_margin(spec, spec.start_pose) > -cfg.min_clearance)
    bad.push_back("start pose clearance below min_clearance");
  if (spec.start_pose.theta <= -3.14159265358979324 || spec.start_pose.theta > 3.14159265358979324)
    bad.push_back("start theta not wrapped");

  // Independent resolution from the generator's search.
  if (!path_exists(spec, cfg.path_margin, 2 * cfg.path_grid - 1))
    bad.push_back("no collision-free start-to-goal path found");
  return bad;
}

EpisodeRecord rollout(const EnvironmentSpec& env, const Controller& controller, int max_steps,
                      bool keep_steps) {
  EpisodeRecord rec;
  RobotState state = env.start_pose;

  if (safety_margin(env, state) >= 0.0) {
    rec.done = DoneKind::kCollided;
    rec.safe = false;
    return rec;
  }
  if (target_margin(env, state) <= 0.0) {
    rec.done = DoneKind::kReachedTarget;
    rec.success = true;
    return rec;
  }

  for (int t = 0; t < max_steps; ++t) {
    const Observation obs = observe(env, state);
    const ControlDecision decision = controller(obs);
    const StepResult res = step(env, state, decision.executed);

    rec.sum_reward += res.reward;
    if (decision.overridden) ++rec.override_count;
    if (res.action_clamped) ++rec.clamp_count;
    if (keep_steps) {
      EpisodeStep es;
      es.state = state;
      es.proposed = decision.proposed;
      es.executed = decision.executed;
      es.overridden = decision.overridden;
      es.backup_chosen = decision.backup_chosen;
      es.reward = res.reward;
      es.g_margin = res.g_margin;
      es.l_margin = res.l_margin;
      rec.steps.push_back(es);
    }

    state = res.next_state;
    if (res.done == DoneKind::kCollided) {
      rec.done = DoneKind::kCollided;
      rec.safe = false;
      return rec;
    }
    if (res.done == DoneKind::kReachedTarget) {
      rec.done = DoneKind::kReachedTarget;
      rec.success = true;
      return rec;
    }
  }
  rec.done = DoneKind::kTimeout;
  return rec;
}

void obs_to_row(const Observation& obs, double* out) {
  for (int i = 0; i < kNumRays; ++i) out[i] = obs.rays[i];
  out[kNumRays] = obs.goal_distance;
  out[kNumRays + 1] = obs.goal_bearing;
}

}  // namespace saferl::env
