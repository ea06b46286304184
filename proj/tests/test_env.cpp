#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <memory>

#include "doctest.h"
#include "saferl/env.hpp"

using namespace saferl;
using env::Action;
using env::EnvironmentSpec;
using env::RobotState;

namespace {

EnvironmentSpec empty_room(double goal_x = 1.7, double goal_y = 1.0) {
  EnvironmentSpec e;
  e.room_half_extent = 1.0;
  e.goal_center = {goal_x, goal_y};
  e.goal_radius = 0.3;
  e.start_pose = {0.3, 1.0, 0.0};
  return e;
}

// Independent inside/outside test, no signed distances involved.
bool independently_unsafe(const EnvironmentSpec& e, const RobotState& s) {
  const double side = e.side();
  if (s.x <= 0.0 || s.x >= side || s.y <= 0.0 || s.y >= side) return true;
  for (const auto& obs : e.obstacles) {
    if (const auto* c = std::get_if<env::Circle>(&obs)) {
      if (env::dist({s.x, s.y}, c->center) <= c->radius) return true;
    } else {
      const auto& r = std::get<env::Rect>(obs);
      const double ct = std::cos(r.yaw), st = std::sin(r.yaw);
      const double lx = ct * (s.x - r.center.x) + st * (s.y - r.center.y);
      const double ly = -st * (s.x - r.center.x) + ct * (s.y - r.center.y);
      if (std::abs(lx) <= r.half_x && std::abs(ly) <= r.half_y) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  env::GenConfig cfg;
  const auto a = env::generate_environment(7, cfg);
  const auto b = env::generate_environment(7, cfg);
  env::EnvSet sa{cfg, {a}}, sb{cfg, {b}};
  CHECK(env::env_set_to_json(sa) == env::env_set_to_json(sb));
}

TEST_CASE("generation with zero obstacles still passes the feasibility check") {
  env::GenConfig cfg;
  cfg.n_obstacles_min = 0;
  cfg.n_obstacles_max = 0;
  const auto e = env::generate_environment(3, cfg);
  CHECK(e.obstacles.empty());
  CHECK(env::validate_environment(e, cfg).empty());
}

TEST_CASE("generated environments satisfy every invariant over many seeds") {
  env::GenConfig cfg;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto e = env::generate_environment(seed, cfg);
    const auto violations = env::validate_environment(e, cfg);
    if (!violations.empty()) {
      CAPTURE(seed);
      CAPTURE(violations.front());
      CHECK(violations.empty());
    }
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("step: Euler arithmetic") {
  const auto e = empty_room();
  const auto fwd = env::step(e, {1.0, 1.0, 0.0}, {1.0, 0.0});
  CHECK(fwd.next_state.x == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(fwd.next_state.y == 1.0);
  CHECK(fwd.next_state.theta == 0.0);

  const auto spin = env::step(e, {1.0, 1.0, 0.0}, {0.0, 1.0});
  CHECK(spin.next_state.x == 1.0);
  CHECK(spin.next_state.y == 1.0);
  CHECK(spin.next_state.theta == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("step: out-of-envelope actions are clamped and flagged") {
  const auto e = empty_room();
  const auto r = env::step(e, {1.0, 1.0, 0.0}, {2.0, -3.0});
  CHECK(r.action_clamped);
  CHECK(r.next_state.x == doctest::Approx(1.1));
  CHECK(r.next_state.theta == doctest::Approx(-0.1));
  CHECK_FALSE(env::step(e, {1.0, 1.0, 0.0}, {0.5, 0.5}).action_clamped);
}

TEST_CASE("step: circling in an empty room never collides") {
  EnvironmentSpec e = empty_room();
  RobotState s{1.0, 1.0, 0.0};
  for (int t = 0; t < 200; ++t) {
    const auto r = env::step(e, s, {0.5, 1.0});
    s = r.next_state;
    const double excursion = env::dist({s.x, s.y}, {1.0, 1.0});
    CHECK(r.done != env::DoneKind::kCollided);
    CHECK(r.g_margin <= -(1.0 - excursion) + 1e-12);
    CHECK(s.theta > -3.141592653589793238);
    CHECK(s.theta <= 3.141592653589793238);
  }
}

TEST_CASE("safety margin: walls, boundaries, circle geometry") {
  EnvironmentSpec e = empty_room();
  CHECK(env::safety_margin(e, {1.0, 1.0, 0.0}) == doctest::Approx(-1.0));

  env::Circle c{{1.0, 1.0}, 0.2};
  e.obstacles.push_back(c);
  CHECK(env::safety_margin(e, {1.2, 1.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(env::safety_margin(e, {0.5, 1.0, 0.0}) == doctest::Approx(-0.3));
}

TEST_CASE("target margin: center, boundary, outside") {
  const auto e = empty_room(1.0, 1.0);
  CHECK(env::target_margin(e, {1.0, 1.0, 0.0}) == doctest::Approx(-0.3));
  CHECK(env::target_margin(e, {1.3, 1.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(env::target_margin(e, {2.0, 1.0, 0.0}) == doctest::Approx(0.7));
}

TEST_CASE("observe: exact forward ray, clipping, goal bearing") {
  const auto e = empty_room(1.7, 1.0);
  const auto obs = env::observe(e, {1.0, 1.0, 0.0});
  CHECK(obs.rays[env::kNumRays / 2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(obs.goal_bearing == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(obs.goal_distance == doctest::Approx(0.7).epsilon(1e-12));

  RngStream rng(4);
  env::GenConfig cfg;
  const auto er = env::generate_environment(42, cfg);
  for (int i = 0; i < 10000; ++i) {
    RobotState s{rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(-3.1, 3.1)};
    const auto o = env::observe(er, s);
    for (double ray : o.rays) {
      CHECK(ray >= 0.0);
      CHECK(ray <= 1.0);
    }
    CHECK(o.goal_bearing > -3.14159265358979324);
    CHECK(o.goal_bearing <= 3.14159265358979324);
  }
}

TEST_CASE("proxy reward: fraction of start-goal distance, clipped") {
  EnvironmentSpec e = empty_room(1.3, 1.0);
  e.start_pose = {0.3, 1.0, 0.0};  // start-to-goal distance 1.0
  CHECK(env::proxy_reward(e, {0.3, 1.0, 0.0}, {0.4, 1.0, 0.0}) == doctest::Approx(0.1));
  CHECK(env::proxy_reward(e, {0.5, 1.0, 0.0}, {0.5, 1.0, 0.0}) == 0.0);
  CHECK(env::proxy_reward(e, {0.5, 1.0, 0.0}, {0.45, 1.0, 0.0}) == doctest::Approx(-0.05));
  // Large jumps clip at +-0.1 of the start-goal distance per step.
  CHECK(env::proxy_reward(e, {0.3, 1.0, 0.0}, {1.0, 1.0, 0.0}) == doctest::Approx(0.1));
}

TEST_CASE("rollout: wall crash fails, start in goal succeeds immediately") {
  EnvironmentSpec e = empty_room(0.5, 1.5);
  e.start_pose = {1.9, 1.0, 0.0};  // facing the right wall from 0.1 m away
  env::Controller crash = [](const env::Observation&) {
    return env::ControlDecision{{1.0, 0.0}, {1.0, 0.0}, false, false};
  };
  const auto rec = env::rollout(e, crash, 200);
  CHECK_FALSE(rec.success);
  CHECK_FALSE(rec.safe);
  CHECK(rec.done == env::DoneKind::kCollided);

  EnvironmentSpec g = empty_room(1.0, 1.0);
  g.start_pose = {1.1, 1.0, 0.0};
  const auto rec2 = env::rollout(g, crash, 200);
  CHECK(rec2.success);
  CHECK(rec2.steps.empty());
}

TEST_CASE("rollout: seeded records are bit-identical across runs") {
  env::GenConfig cfg;
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    const auto e = env::generate_environment(seed, cfg);
    auto make_controller = [&]() {
      auto rng = std::make_shared<RngStream>(seed * 97);
      return env::Controller([rng](const env::Observation&) {
        env::Action a{rng->uniform(0.2, 1.0), rng->uniform(-1.0, 1.0)};
        return env::ControlDecision{a, a, false, false};
      });
    };
    const auto r1 = env::rollout(e, make_controller(), 200);
    const auto r2 = env::rollout(e, make_controller(), 200);
    CHECK(r1 == r2);
  }
}

TEST_CASE("margin sign agrees with an independent inside test") {
  env::GenConfig cfg;
  RngStream rng(99);
  int agree = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto e = env::generate_environment(seed, cfg);
    for (int i = 0; i < 5000; ++i) {
      RobotState s{rng.uniform(-0.2, 2.2), rng.uniform(-0.2, 2.2), 0.0};
      const bool unsafe = env::safety_margin(e, s) >= 0.0;
      if (unsafe == independently_unsafe(e, s)) ++agree;
      ++total;
    }
  }
  CHECK(agree == total);
}

TEST_CASE("margin is 1-Lipschitz in position") {
  env::GenConfig cfg;
  RngStream rng(123);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto e = env::generate_environment(seed, cfg);
    for (int i = 0; i < 2000; ++i) {
      RobotState s{rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), 0.0};
      const double dx = rng.uniform(-0.05, 0.05), dy = rng.uniform(-0.05, 0.05);
      RobotState s2{s.x + dx, s.y + dy, 0.0};
      const double lhs = std::abs(env::safety_margin(e, s) - env::safety_margin(e, s2));
      CHECK(lhs <= std::hypot(dx, dy) + 1e-12);
    }
  }
}

TEST_CASE("theta stays wrapped under long action sequences") {
  const auto e = empty_room();
  RngStream rng(5);
  RobotState s{1.0, 1.0, 3.0};
  for (int t = 0; t < 500; ++t) {
    const auto r = env::step(e, s, {0.0, rng.uniform(-1.0, 1.0)});
    s = r.next_state;
    CHECK(s.theta > -3.14159265358979324);
    CHECK(s.theta <= 3.14159265358979324);
  }
}

TEST_CASE("shrinking an obstacle never decreases a ray reading") {
  RngStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    EnvironmentSpec big = empty_room();
    EnvironmentSpec small = empty_room();
    if (trial % 2 == 0) {
      env::Circle c{{rng.uniform(0.4, 1.6), rng.uniform(0.4, 1.6)}, 0.3};
      big.obstacles.push_back(c);
      c.radius = 0.15;
      small.obstacles.push_back(c);
    } else {
      env::Rect r{{rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)}, 0.25, 0.2,
                  rng.uniform(-3.0, 3.0)};
      big.obstacles.push_back(r);
      r.half_x = 0.12;
      r.half_y = 0.1;
      small.obstacles.push_back(r);
    }
    RobotState s{rng.uniform(0.1, 1.9), rng.uniform(0.1, 1.9), rng.uniform(-3.1, 3.1)};
    if (env::safety_margin(big, s) >= 0.0) continue;
    const auto ob = env::observe(big, s);
    const auto os = env::observe(small, s);
    for (int i = 0; i < env::kNumRays; ++i) CHECK(os.rays[i] >= ob.rays[i] - 1e-12);
  }
}

TEST_CASE("environment set JSON round-trips exactly") {
  env::GenConfig cfg;
  env::EnvSet set;
  set.gen_config = cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto e = env::generate_environment(seed, cfg);
    e.env_id = static_cast<int>(seed);
    set.specs.push_back(e);
  }
  const std::string a = env::env_set_to_json(set);
  const auto parsed = env::env_set_from_json(a);
  CHECK(env::env_set_to_json(parsed) == a);
  CHECK(parsed.specs.size() == 5);
}

TEST_CASE("generation failure reports an over-constrained config") {
  env::GenConfig cfg;
  cfg.min_clearance = 2.5;  // impossible in a 2 m room
  cfg.max_attempts = 25;
  CHECK_THROWS_AS(env::generate_environment(1, cfg), env::GenerationError);
}
