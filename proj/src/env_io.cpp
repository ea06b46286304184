#include <fstream>
#include <sstream>

#include "json.hpp"
#include "saferl/env.hpp"

namespace saferl::env {

namespace {

using nlohmann::json;

constexpr int kEnvSetVersion = 1;

json gen_config_to_json(const GenConfig& c) {
  return json{{"room_half_extent", c.room_half_extent},
              {"n_obstacles_min", c.n_obstacles_min},
              {"n_obstacles_max", c.n_obstacles_max},
              {"circle_radius_min", c.circle_radius_min},
              {"circle_radius_max", c.circle_radius_max},
              {"rect_half_extent_min", c.rect_half_extent_min},
              {"rect_half_extent_max", c.rect_half_extent_max},
              {"goal_radius", c.goal_radius},
              {"min_clearance", c.min_clearance},
              {"min_start_goal_dist", c.min_start_goal_dist},
              {"path_margin", c.path_margin},
              {"path_grid", c.path_grid},
              {"max_attempts", c.max_attempts}};
}

GenConfig gen_config_from_json(const json& j) {
  GenConfig c;
  c.room_half_extent = j.at("room_half_extent");
  c.n_obstacles_min = j.at("n_obstacles_min");
  c.n_obstacles_max = j.at("n_obstacles_max");
  c.circle_radius_min = j.at("circle_radius_min");
  c.circle_radius_max = j.at("circle_radius_max");
  c.rect_half_extent_min = j.at("rect_half_extent_min");
  c.rect_half_extent_max = j.at("rect_half_extent_max");
  c.goal_radius = j.at("goal_radius");
  c.min_clearance = j.at("min_clearance");
  c.min_start_goal_dist = j.at("min_start_goal_dist");
  c.path_margin = j.at("path_margin");
  c.path_grid = j.at("path_grid");
  c.max_attempts = j.at("max_attempts");
  return c;
}

json obstacle_to_json(const Obstacle& o) {
  if (const auto* c = std::get_if<Circle>(&o)) {
    return json{{"kind", "circle"},
                {"cx", c->center.x},
                {"cy", c->center.y},
                {"radius", c->radius}};
  }
  const auto& r = std::get<Rect>(o);
  return json{{"kind", "rect"},   {"cx", r.center.x}, {"cy", r.center.y},
              {"half_x", r.half_x}, {"half_y", r.half_y}, {"yaw", r.yaw}};
}

Obstacle obstacle_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "circle") {
    Circle c;
    c.center = {j.at("cx"), j.at("cy")};
    c.radius = j.at("radius");
    return c;
  }
  if (kind != "rect") throw std::runtime_error("unknown obstacle kind: " + kind);
  Rect r;
  r.center = {j.at("cx"), j.at("cy")};
  r.half_x = j.at("half_x");
  r.half_y = j.at("half_y");
  r.yaw = j.at("yaw");
  return r;
}

}  // namespace

std::string env_set_to_json(const EnvSet& set) {
  json j;
  j["version"] = kEnvSetVersion;
  j["gen_config"] = gen_config_to_json(set.gen_config);
  json specs = json::array();
  for (const auto& s : set.specs) {
    json obstacles = json::array();
    for (const auto& o : s.obstacles) obstacles.push_back(obstacle_to_json(o));
    specs.push_back(json{{"env_id", s.env_id},
                         {"rng_seed", s.rng_seed},
                         {"room_half_extent", s.room_half_extent},
                         {"goal_cx", s.goal_center.x},
                         {"goal_cy", s.goal_center.y},
                         {"goal_radius", s.goal_radius},
                         {"start_x", s.start_pose.x},
                         {"start_y", s.start_pose.y},
                         {"start_theta", s.start_pose.theta},
                         {"obstacles", obstacles}});
  }
  j["specs"] = specs;
  return j.dump(2);
}

EnvSet env_set_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != kEnvSetVersion)
    throw std::runtime_error("unsupported environment set version");
  EnvSet set;
  set.gen_config = gen_config_from_json(j.at("gen_config"));
  for (const auto& js : j.at("specs")) {
    EnvironmentSpec s;
    s.env_id = js.at("env_id");
    s.rng_seed = js.at("rng_seed");
    s.room_half_extent = js.at("room_half_extent");
    s.goal_center = {js.at("goal_cx"), js.at("goal_cy")};
    s.goal_radius = js.at("goal_radius");
    s.start_pose = {js.at("start_x"), js.at("start_y"), js.at("start_theta")};
    for (const auto& jo : js.at("obstacles")) s.obstacles.push_back(obstacle_from_json(jo));
    set.specs.push_back(std::move(s));
  }
  return set;
}

void save_env_set(const EnvSet& set, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << env_set_to_json(set) << '\n';
}

EnvSet load_env_set(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return env_set_from_json(ss.str());
}

}  // namespace saferl::env
