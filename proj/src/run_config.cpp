#include "saferl/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "saferl/manifest.hpp"
#include "saferl/shield.hpp"

namespace saferl::io {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key))
      throw std::invalid_argument("unknown config key '" + where + key + "'");
  }
}

json gen_to_json(const env::GenConfig& c) {
  return {{"room_half_extent", c.room_half_extent},
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

env::GenConfig gen_from_json(const json& j) {
  reject_unknown(j,
                 {"room_half_extent", "n_obstacles_min", "n_obstacles_max", "circle_radius_min",
                  "circle_radius_max", "rect_half_extent_min", "rect_half_extent_max",
                  "goal_radius", "min_clearance", "min_start_goal_dist", "path_margin",
                  "path_grid", "max_attempts"},
                 "env_gen.");
  env::GenConfig c;
  c.room_half_extent = j.value("room_half_extent", c.room_half_extent);
  c.n_obstacles_min = j.value("n_obstacles_min", c.n_obstacles_min);
  c.n_obstacles_max = j.value("n_obstacles_max", c.n_obstacles_max);
  c.circle_radius_min = j.value("circle_radius_min", c.circle_radius_min);
  c.circle_radius_max = j.value("circle_radius_max", c.circle_radius_max);
  c.rect_half_extent_min = j.value("rect_half_extent_min", c.rect_half_extent_min);
  c.rect_half_extent_max = j.value("rect_half_extent_max", c.rect_half_extent_max);
  c.goal_radius = j.value("goal_radius", c.goal_radius);
  c.min_clearance = j.value("min_clearance", c.min_clearance);
  c.min_start_goal_dist = j.value("min_start_goal_dist", c.min_start_goal_dist);
  c.path_margin = j.value("path_margin", c.path_margin);
  c.path_grid = j.value("path_grid", c.path_grid);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  return c;
}

json agent_to_json(const agents::AgentConfig& c) {
  return {{"hidden", c.hidden},
          {"activation", c.activation == nn::Activation::kRelu ? "relu" : "tanh"},
          {"n_z", c.n_z},
          {"prior_sigma", c.prior_sigma},
          {"condition_perf_on_latent", c.condition_perf_on_latent},
          {"condition_backup_on_latent", c.condition_backup_on_latent},
          {"lr", c.lr},
          {"lr_alpha", c.lr_alpha},
          {"alpha_init", c.alpha_init},
          {"target_entropy_perf", c.target_entropy_perf},
          {"target_entropy_backup", c.target_entropy_backup},
          {"tau", c.tau},
          {"nu", c.nu},
          {"n_marginal_samples", c.n_marginal_samples},
          {"grad_clip", c.grad_clip},
          {"gamma_perf", c.gamma_perf},
          {"perf_v_min", c.perf_v_min},
          {"perf_v_max", c.perf_v_max},
          {"backup_v_min", c.backup_v_min},
          {"backup_v_max", c.backup_v_max},
          {"w_max", c.w_max}};
}

agents::AgentConfig agent_from_json(const json& j) {
  reject_unknown(j,
                 {"hidden", "activation", "n_z", "prior_sigma", "condition_perf_on_latent",
                  "condition_backup_on_latent", "lr", "lr_alpha", "alpha_init",
                  "target_entropy_perf", "target_entropy_backup",
                  "tau", "nu", "n_marginal_samples", "grad_clip", "gamma_perf", "perf_v_min",
                  "perf_v_max", "backup_v_min", "backup_v_max", "w_max"},
                 "agent.");
  agents::AgentConfig c;
  c.hidden = j.value("hidden", c.hidden);
  const std::string act = j.value("activation", std::string("relu"));
  if (act != "relu" && act != "tanh") throw std::invalid_argument("unknown activation: " + act);
  c.activation = act == "relu" ? nn::Activation::kRelu : nn::Activation::kTanh;
  c.n_z = j.value("n_z", c.n_z);
  c.prior_sigma = j.value("prior_sigma", c.prior_sigma);
  c.condition_perf_on_latent = j.value("condition_perf_on_latent", c.condition_perf_on_latent);
  c.condition_backup_on_latent =
      j.value("condition_backup_on_latent", c.condition_backup_on_latent);
  c.lr = j.value("lr", c.lr);
  c.lr_alpha = j.value("lr_alpha", c.lr_alpha);
  c.alpha_init = j.value("alpha_init", c.alpha_init);
  c.target_entropy_perf = j.value("target_entropy_perf", c.target_entropy_perf);
  c.target_entropy_backup = j.value("target_entropy_backup", c.target_entropy_backup);
  c.tau = j.value("tau", c.tau);
  c.nu = j.value("nu", c.nu);
  c.n_marginal_samples = j.value("n_marginal_samples", c.n_marginal_samples);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.gamma_perf = j.value("gamma_perf", c.gamma_perf);
  c.perf_v_min = j.value("perf_v_min", c.perf_v_min);
  c.perf_v_max = j.value("perf_v_max", c.perf_v_max);
  c.backup_v_min = j.value("backup_v_min", c.backup_v_min);
  c.backup_v_max = j.value("backup_v_max", c.backup_v_max);
  c.w_max = j.value("w_max", c.w_max);
  return c;
}

json sim_to_json(const train::SimConfig& c) {
  return {{"num_steps", c.num_steps},
          {"optimize_freq", c.optimize_freq},
          {"updates_per_optimize", c.updates_per_optimize},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"max_episode_steps", c.max_episode_steps},
          {"beta", c.beta},
          {"lambda_penalty", c.lambda_penalty},
          {"train_backup", c.train_backup},
          {"backup_mode", grid::critic_mode_name(c.backup_mode)},
          {"shield_mode", shield::shield_mode_name(c.shield_mode)},
          {"v_thr", c.v_thr},
          {"forward_sim_horizon", c.forward_sim_horizon},
          {"random_resets", c.random_resets},
          {"reset_clearance", c.reset_clearance},
          {"rho_init", c.anneal.rho_init},
          {"rho_factor", c.anneal.rho_factor},
          {"rho_period", c.anneal.rho_period},
          {"eps_init", c.anneal.eps_init},
          {"eps_factor", c.anneal.eps_factor},
          {"eps_period", c.anneal.eps_period},
          {"gamma_b_init", c.anneal.gamma_b_init},
          {"gamma_b_final", c.anneal.gamma_b_final},
          {"gamma_b_approach", c.anneal.gamma_b_approach}};
}

train::SimConfig sim_from_json(const json& j) {
  reject_unknown(j,
                 {"num_steps", "optimize_freq", "updates_per_optimize", "batch_size",
                  "buffer_capacity", "max_episode_steps", "beta", "lambda_penalty",
                  "train_backup", "backup_mode", "shield_mode", "v_thr", "forward_sim_horizon",
                  "random_resets", "reset_clearance", "rho_init", "rho_factor", "rho_period",
                  "eps_init", "eps_factor", "eps_period", "gamma_b_init", "gamma_b_final",
                  "gamma_b_approach"},
                 "sim.");
  train::SimConfig c;
  c.num_steps = j.value("num_steps", c.num_steps);
  c.optimize_freq = j.value("optimize_freq", c.optimize_freq);
  c.updates_per_optimize = j.value("updates_per_optimize", c.updates_per_optimize);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.max_episode_steps = j.value("max_episode_steps", c.max_episode_steps);
  c.beta = j.value("beta", c.beta);
  c.lambda_penalty = j.value("lambda_penalty", c.lambda_penalty);
  c.train_backup = j.value("train_backup", c.train_backup);
  c.backup_mode = grid::critic_mode_from_name(
      j.value("backup_mode", grid::critic_mode_name(c.backup_mode)));
  c.shield_mode = shield::shield_mode_from_name(
      j.value("shield_mode", shield::shield_mode_name(c.shield_mode)));
  c.v_thr = j.value("v_thr", c.v_thr);
  c.forward_sim_horizon = j.value("forward_sim_horizon", c.forward_sim_horizon);
  c.random_resets = j.value("random_resets", c.random_resets);
  c.reset_clearance = j.value("reset_clearance", c.reset_clearance);
  c.anneal.rho_init = j.value("rho_init", c.anneal.rho_init);
  c.anneal.rho_factor = j.value("rho_factor", c.anneal.rho_factor);
  c.anneal.rho_period = j.value("rho_period", c.anneal.rho_period);
  c.anneal.eps_init = j.value("eps_init", c.anneal.eps_init);
  c.anneal.eps_factor = j.value("eps_factor", c.anneal.eps_factor);
  c.anneal.eps_period = j.value("eps_period", c.anneal.eps_period);
  c.anneal.gamma_b_init = j.value("gamma_b_init", c.anneal.gamma_b_init);
  c.anneal.gamma_b_final = j.value("gamma_b_final", c.anneal.gamma_b_final);
  c.anneal.gamma_b_approach = j.value("gamma_b_approach", c.anneal.gamma_b_approach);
  return c;
}

json lab_to_json(const train::LabConfig& c) {
  return {{"num_steps", c.num_steps},
          {"optimize_freq", c.optimize_freq},
          {"updates_per_optimize", c.updates_per_optimize},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"max_episode_steps", c.max_episode_steps},
          {"kl_weight", c.kl_weight},
          {"lr_mu", c.lr_mu},
          {"lr_sigma", c.lr_sigma},
          {"shield_mode", shield::shield_mode_name(c.shield_mode)},
          {"v_thr", c.v_thr}};
}

train::LabConfig lab_from_json(const json& j) {
  reject_unknown(j,
                 {"num_steps", "optimize_freq", "updates_per_optimize", "batch_size",
                  "buffer_capacity", "max_episode_steps", "kl_weight", "lr_mu", "lr_sigma",
                  "shield_mode", "v_thr"},
                 "lab.");
  train::LabConfig c;
  c.num_steps = j.value("num_steps", c.num_steps);
  c.optimize_freq = j.value("optimize_freq", c.optimize_freq);
  c.updates_per_optimize = j.value("updates_per_optimize", c.updates_per_optimize);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.max_episode_steps = j.value("max_episode_steps", c.max_episode_steps);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.lr_mu = j.value("lr_mu", c.lr_mu);
  c.lr_sigma = j.value("lr_sigma", c.lr_sigma);
  c.shield_mode = shield::shield_mode_from_name(
      j.value("shield_mode", shield::shield_mode_name(c.shield_mode)));
  c.v_thr = j.value("v_thr", c.v_thr);
  return c;
}

json oracle_to_json(const grid::GridConfig& c) {
  return {{"nx", c.nx},           {"ny", c.ny},       {"ntheta", c.ntheta},
          {"v_count", c.v_count}, {"w_count", c.w_count}, {"v_min", c.v_min},
          {"v_max", c.v_max},     {"tol", c.tol},     {"max_sweeps", c.max_sweeps}};
}

grid::GridConfig oracle_from_json(const json& j) {
  reject_unknown(
      j, {"nx", "ny", "ntheta", "v_count", "w_count", "v_min", "v_max", "tol", "max_sweeps"},
      "oracle.");
  grid::GridConfig c;
  c.nx = j.value("nx", c.nx);
  c.ny = j.value("ny", c.ny);
  c.ntheta = j.value("ntheta", c.ntheta);
  c.v_count = j.value("v_count", c.v_count);
  c.w_count = j.value("w_count", c.w_count);
  c.v_min = j.value("v_min", c.v_min);
  c.v_max = j.value("v_max", c.v_max);
  c.tol = j.value("tol", c.tol);
  c.max_sweeps = j.value("max_sweeps", c.max_sweeps);
  return c;
}

}  // namespace

void RunConfig::validate() const {
  if (n_envs_sim < 1 || n_envs_lab < 1 || n_envs_heldout < 1)
    throw std::invalid_argument("environment counts must be positive");
  if (bound.n_latents < 1 || bound.verify_latents < 1)
    throw std::invalid_argument("latent sample counts must be positive");
  if (bound.delta <= 0.0 || bound.delta >= 1.0)
    throw std::invalid_argument("delta must lie in (0, 1)");
  if (oracle_gamma >= 1.0 || oracle_gamma < 0.0)
    throw std::invalid_argument("oracle gamma must lie in [0, 1)");
  if (agent.n_z < 1) throw std::invalid_argument("n_z must be positive");
  sim.anneal.validate();
  shield::ShieldConfig sc{sim.shield_mode, sim.v_thr, 1.0};
  sc.validate();
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["env_gen"] = gen_to_json(cfg.env_gen);
  j["n_envs_sim"] = cfg.n_envs_sim;
  j["n_envs_lab"] = cfg.n_envs_lab;
  j["n_envs_heldout"] = cfg.n_envs_heldout;
  j["agent"] = agent_to_json(cfg.agent);
  j["sim"] = sim_to_json(cfg.sim);
  j["lab"] = lab_to_json(cfg.lab);
  j["bound"] = {{"n_latents", cfg.bound.n_latents},
                {"delta", cfg.bound.delta},
                {"verify_latents", cfg.bound.verify_latents}};
  j["oracle"] = oracle_to_json(cfg.oracle);
  j["oracle_gamma"] = cfg.oracle_gamma;
  j["eval_threads"] = cfg.eval_threads;
  return j.dump(2);
}

RunConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  reject_unknown(j,
                 {"seed", "out_dir", "env_gen", "n_envs_sim", "n_envs_lab", "n_envs_heldout",
                  "agent", "sim", "lab", "bound", "oracle", "oracle_gamma", "eval_threads"},
                 "");
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("env_gen")) cfg.env_gen = gen_from_json(j.at("env_gen"));
  cfg.n_envs_sim = j.value("n_envs_sim", cfg.n_envs_sim);
  cfg.n_envs_lab = j.value("n_envs_lab", cfg.n_envs_lab);
  cfg.n_envs_heldout = j.value("n_envs_heldout", cfg.n_envs_heldout);
  if (j.contains("agent")) cfg.agent = agent_from_json(j.at("agent"));
  if (j.contains("sim")) cfg.sim = sim_from_json(j.at("sim"));
  if (j.contains("lab")) cfg.lab = lab_from_json(j.at("lab"));
  if (j.contains("bound")) {
    const json& b = j.at("bound");
    reject_unknown(b, {"n_latents", "delta", "verify_latents"}, "bound.");
    cfg.bound.n_latents = b.value("n_latents", cfg.bound.n_latents);
    cfg.bound.delta = b.value("delta", cfg.bound.delta);
    cfg.bound.verify_latents = b.value("verify_latents", cfg.bound.verify_latents);
  }
  if (j.contains("oracle")) cfg.oracle = oracle_from_json(j.at("oracle"));
  cfg.oracle_gamma = j.value("oracle_gamma", cfg.oracle_gamma);
  cfg.eval_threads = j.value("eval_threads", cfg.eval_threads);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json(ss.str());
}

std::string apply_overrides(const std::string& config_json,
                            const std::vector<std::string>& overrides) {
  json j = json::parse(config_json);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must look like key.path=value: " + item);
    const std::string path = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);

    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot - start);
      if (dot == std::string::npos) {
        json parsed;
        try {
          parsed = json::parse(value);
        } catch (const json::parse_error&) {
          parsed = value;  // plain string
        }
        (*node)[key] = parsed;
        break;
      }
      node = &(*node)[key];
      start = dot + 1;
    }
  }
  return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(config_to_json(cfg)); }

}  // namespace saferl::io
