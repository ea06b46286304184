#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "saferl/geometry.hpp"
#include "saferl/rng.hpp"

namespace saferl::env {

inline constexpr double kDt = 0.1;  // 10 Hz control loop
inline constexpr int kNumRays = 32;
inline constexpr double kRayFov = 4.1887902047863909846;  // 240 degrees
inline constexpr double kRayMaxRange = 2.0;
inline constexpr int kObsDim = kNumRays + 2;  // rays + goal distance + goal bearing

// Physical actuation envelope; per-agent bounds are narrower and enforced by
// the policy heads.
inline constexpr double kVelocityMin = 0.0;
inline constexpr double kVelocityMax = 1.0;
inline constexpr double kAngularMax = 1.0;

struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // always wrapped to (-pi, pi]

  bool operator==(const RobotState&) const = default;
};

struct Action {
  double v = 0.0;  // forward velocity, m/s
  double w = 0.0;  // angular velocity, rad/s

  bool operator==(const Action&) const = default;
};

struct GenConfig {
  double room_half_extent = 1.0;  // room is [0, 2h] x [0, 2h]
  int n_obstacles_min = 2;
  int n_obstacles_max = 4;
  double circle_radius_min = 0.1;
  double circle_radius_max = 0.3;
  double rect_half_extent_min = 0.1;
  double rect_half_extent_max = 0.3;
  double goal_radius = 0.3;
  double min_clearance = 0.3;
  double min_start_goal_dist = 0.8;
  double path_margin = 0.05;  // clearance required of the feasibility path
  int path_grid = 41;
  int max_attempts = 200;
};

struct EnvironmentSpec {
  double room_half_extent = 1.0;
  std::vector<Obstacle> obstacles;
  Vec2 goal_center;
  double goal_radius = 0.3;
  RobotState start_pose;
  int env_id = 0;
  std::uint64_t rng_seed = 0;

  double side() const { return 2.0 * room_half_extent; }
};

struct Observation {
  std::array<double, kNumRays> rays{};  // normalized to [0, 1]
  double goal_distance = 0.0;           // meters to goal center
  double goal_bearing = 0.0;            // radians, wrapped

  bool operator==(const Observation&) const = default;
};

enum class DoneKind { kNone, kReachedTarget, kCollided, kTimeout };

struct StepResult {
  RobotState next_state;
  Observation observation;
  double reward = 0.0;
  double g_margin = 0.0;  // safety margin at the next state
  double l_margin = 0.0;  // target margin at the next state
  DoneKind done = DoneKind::kNone;
  bool action_clamped = false;
};

// g(s): positive inside any obstacle or outside the room, 1-Lipschitz in
// position. Walls count against the margin.
double safety_margin(const EnvironmentSpec& env, const RobotState& state);

// l(s) = distance to goal center minus goal radius; target is its zero
// sublevel set.
double target_margin(const EnvironmentSpec& env, const RobotState& state);

Observation observe(const EnvironmentSpec& env, const RobotState& state);

// Dense reward: fraction of the start-to-goal distance gained this step,
// clipped to +-0.1.
double proxy_reward(const EnvironmentSpec& env, const RobotState& prev, const RobotState& next);

// One Euler step at kDt; margins, reward and done flags refer to the next
// state. Out-of-envelope actions are clamped and flagged.
StepResult step(const EnvironmentSpec& env, const RobotState& state, const Action& action);

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rejection sampling; deterministic in seed. Throws GenerationError when the
// config cannot be satisfied within max_attempts.
EnvironmentSpec generate_environment(std::uint64_t seed, const GenConfig& config);

// First-principles invariant check: obstacles inside the room, start/goal
// clearances, and path feasibility on its own grid. Returns human-readable
// violations, empty when the spec is valid.
std::vector<std::string> validate_environment(const EnvironmentSpec& spec, const GenConfig& config);

// What the controller decided at one step; proposed and executed may differ
// when a shield overrides or the backup policy was sampled.
struct ControlDecision {
  Action proposed;
  Action executed;
  bool overridden = false;
  bool backup_chosen = false;
};

using Controller = std::function<ControlDecision(const Observation&)>;

struct EpisodeStep {
  RobotState state;  // state the action was taken from
  Action proposed;
  Action executed;
  bool overridden = false;
  bool backup_chosen = false;
  double reward = 0.0;
  double g_margin = 0.0;
  double l_margin = 0.0;

  bool operator==(const EpisodeStep&) const = default;
};

struct EpisodeRecord {
  std::vector<EpisodeStep> steps;
  DoneKind done = DoneKind::kNone;
  bool success = false;  // reached the target with zero safety violations
  bool safe = true;      // no safety violation over the whole episode
  double sum_reward = 0.0;
  int override_count = 0;
  int clamp_count = 0;

  bool operator==(const EpisodeRecord&) const = default;
};

EpisodeRecord rollout(const EnvironmentSpec& env, const Controller& controller, int max_steps,
                      bool keep_steps = true);

void obs_to_row(const Observation& obs, double* out);

// Environment-set JSON document (versioned, full precision coordinates).
struct EnvSet {
  GenConfig gen_config;
  std::vector<EnvironmentSpec> specs;
};

std::string env_set_to_json(const EnvSet& set);
EnvSet env_set_from_json(const std::string& text);
void save_env_set(const EnvSet& set, const std::string& path);
EnvSet load_env_set(const std::string& path);

}  // namespace saferl::env
