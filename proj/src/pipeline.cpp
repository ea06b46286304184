#include "saferl/pipeline.hpp"

#include <charconv>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"
#include "saferl/lab_stage.hpp"
#include "saferl/manifest.hpp"

namespace saferl::pipeline {

namespace {

using io::Manifest;
using io::RunConfig;

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<env::EnvironmentSpec> generate_set(const RunConfig& cfg, std::uint64_t stream_tag,
                                               int count) {
  RngStream seeder(cfg.seed ^ stream_tag);
  std::vector<env::EnvironmentSpec> specs;
  specs.reserve(count);
  for (int i = 0; i < count; ++i) {
    auto e = env::generate_environment(seeder.raw(), cfg.env_gen);
    e.env_id = i;
    specs.push_back(std::move(e));
  }
  return specs;
}

Manifest start_manifest(const char* command, const RunConfig& cfg) {
  Manifest m;
  m.command = command;
  m.config_hash = io::config_hash(cfg);
  m.seed = cfg.seed;
  return m;
}

void finish(Manifest& m, const RunConfig& cfg, const std::string& name) {
  // The resolved config rides along so every knob behind the hash is
  // reproducible from the run directory alone.
  const std::string cfg_path = join_path(cfg.out_dir, "config_resolved.json");
  io::write_text_file(cfg_path, io::config_to_json(cfg) + "\n");
  m.add_output(cfg_path);
  m.write(join_path(cfg.out_dir, "manifest_" + std::string(name) + ".json"));
}

io::Checkpoint make_sim_checkpoint(const RunConfig& cfg, agents::AgentBundle bundle,
                                   const agents::LatentDistribution& prior, long steps,
                                   double gamma_b, const RngStream& rng) {
  io::Checkpoint cp;
  cp.config_hash = io::config_hash(cfg);
  cp.bundle = std::move(bundle);
  cp.prior = prior;
  cp.posterior = prior;  // the second stage tunes this
  cp.steps_completed = steps;
  cp.gamma_b = gamma_b;
  cp.rng_state = rng.save_state();
  return cp;
}

}  // namespace

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

std::string metrics_to_csv(const train::StageMetrics& metrics) {
  std::string out =
      "step,episode,success,violation,rho,epsilon,gamma_b,sum_reward,override_count,length,"
      "perf_critic_loss,perf_actor_loss,backup_critic_loss,backup_actor_loss,disc_loss,"
      "kl_estimate\n";
  for (const auto& r : metrics.episodes) {
    out += std::to_string(r.step) + ',' + std::to_string(r.episode) + ',' +
           (r.success ? "1" : "0") + ',' + (r.violation ? "1" : "0") + ',' + fmt(r.rho) + ',' +
           fmt(r.epsilon) + ',' + fmt(r.gamma_b) + ',' + fmt(r.sum_reward) + ',' +
           std::to_string(r.override_count) + ',' + std::to_string(r.length) + ',' +
           fmt(r.perf_critic_loss) + ',' + fmt(r.perf_actor_loss) + ',' +
           fmt(r.backup_critic_loss) + ',' + fmt(r.backup_actor_loss) + ',' + fmt(r.disc_loss) +
           ',' + fmt(r.kl_estimate) + '\n';
  }
  return out;
}

std::vector<std::string> cmd_gen_envs(const io::RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  Manifest m = start_manifest("gen-envs", cfg);

  const struct {
    const char* name;
    std::uint64_t tag;
    int count;
  } sets[] = {{kEnvsSim, 0x51f0a11ce5ull, cfg.n_envs_sim},
              {kEnvsLab, 0x1ab5e75ull, cfg.n_envs_lab},
              {kEnvsHeldout, 0x8e1d0e75ull, cfg.n_envs_heldout}};

  std::vector<std::string> outputs;
  for (const auto& s : sets) {
    env::EnvSet set;
    set.gen_config = cfg.env_gen;
    set.specs = generate_set(cfg, s.tag, s.count);
    const std::string path = join_path(cfg.out_dir, s.name);
    env::save_env_set(set, path);
    m.add_output(path);
    outputs.push_back(path);
  }
  finish(m, cfg, "gen_envs");
  return outputs;
}

std::vector<std::string> cmd_train_sim(const io::RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  Manifest m = start_manifest("train-sim", cfg);
  const std::string envs_path = join_path(cfg.out_dir, kEnvsSim);
  const auto env_set = env::load_env_set(envs_path);
  m.add_input(envs_path);

  RngStream rng(cfg.seed);
  auto bundle = agents::make_bundle(cfg.agent, rng);
  const auto prior =
      agents::LatentDistribution::isotropic(cfg.agent.n_z, cfg.agent.prior_sigma);

  const auto metrics = train::train_sim(env_set.specs, bundle, prior, cfg.sim, rng);

  const std::string csv_path = join_path(cfg.out_dir, kMetricsSim);
  io::write_text_file(csv_path, metrics_to_csv(metrics));

  double gamma_b = metrics.episodes.empty() ? cfg.sim.anneal.gamma_b_init
                                            : metrics.episodes.back().gamma_b;
  const auto cp =
      make_sim_checkpoint(cfg, std::move(bundle), prior, metrics.total_steps, gamma_b, rng);
  const std::string cp_path = join_path(cfg.out_dir, kCheckpointSim);
  io::save_checkpoint(cp, cp_path);

  m.add_output(csv_path);
  m.add_output(cp_path);
  finish(m, cfg, "train_sim");
  return {cp_path, csv_path};
}

std::vector<std::string> cmd_train_lab(const io::RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  Manifest m = start_manifest("train-lab", cfg);
  const std::string envs_path = join_path(cfg.out_dir, kEnvsLab);
  const std::string cp_path = join_path(cfg.out_dir, kCheckpointSim);
  const auto env_set = env::load_env_set(envs_path);
  auto cp = io::load_checkpoint(cp_path);
  m.add_input(envs_path);
  m.add_input(cp_path);

  if (!cp.bundle.cfg.condition_perf_on_latent)
    throw std::runtime_error(
        "the checkpointed policy is not latent-conditioned; there is no distribution to tune");

  RngStream rng(cfg.seed + 0x1ab);
  auto state = train::make_posterior_state(cp.prior, cfg.lab);
  const auto metrics = train::train_lab(env_set.specs, cp.bundle, state, cfg.lab, rng);

  cp.posterior = state.posterior();
  cp.rng_state = rng.save_state();
  const std::string out_cp = join_path(cfg.out_dir, kCheckpointLab);
  io::save_checkpoint(cp, out_cp);
  const std::string csv_path = join_path(cfg.out_dir, kMetricsLab);
  io::write_text_file(csv_path, metrics_to_csv(metrics));

  m.add_output(out_cp);
  m.add_output(csv_path);
  finish(m, cfg, "train_lab");
  return {out_cp, csv_path};
}

std::vector<std::string> cmd_bound(const io::RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  Manifest m = start_manifest("bound", cfg);
  const std::string envs_path = join_path(cfg.out_dir, kEnvsLab);
  const std::string cp_path = join_path(cfg.out_dir, kCheckpointLab);
  const auto env_set = env::load_env_set(envs_path);
  const auto cp = io::load_checkpoint(cp_path);
  m.add_input(envs_path);
  m.add_input(cp_path);

  pacbayes::EvalConfig eval;
  eval.max_steps = cfg.sim.max_episode_steps;
  eval.v_thr = cfg.lab.v_thr;
  eval.shield = cfg.lab.shield_mode != shield::ShieldMode::kOff;
  eval.n_threads = cfg.eval_threads;

  RngStream rng(cfg.seed + 0xb0);
  const auto est = pacbayes::estimate_empirical(env_set.specs, cp.bundle, cp.posterior,
                                                cfg.bound.n_latents, rng, eval);
  const double kl = agents::kl_diag_gaussians(cp.posterior, cp.prior);
  const long n = static_cast<long>(env_set.specs.size());
  std::vector<pacbayes::BoundReport> reports;
  reports.push_back(pacbayes::compute_bound("success", est.success_rate, kl, n,
                                            cfg.bound.n_latents, cfg.bound.delta));
  reports.push_back(pacbayes::compute_bound("safety", est.safety_rate, kl, n,
                                            cfg.bound.n_latents, cfg.bound.delta));

  const std::string path = join_path(cfg.out_dir, kBoundReport);
  io::write_text_file(path, pacbayes::bound_reports_to_json(reports) + "\n");
  m.add_output(path);
  finish(m, cfg, "bound");
  return {path};
}

std::vector<std::string> cmd_verify(const io::RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  Manifest m = start_manifest("verify", cfg);
  const std::string envs_path = join_path(cfg.out_dir, kEnvsHeldout);
  const std::string cp_path = join_path(cfg.out_dir, kCheckpointLab);
  const auto env_set = env::load_env_set(envs_path);
  const auto cp = io::load_checkpoint(cp_path);
  m.add_input(envs_path);
  m.add_input(cp_path);

  pacbayes::EvalConfig eval;
  eval.max_steps = cfg.sim.max_episode_steps;
  eval.v_thr = cfg.lab.v_thr;
  eval.shield = cfg.lab.shield_mode != shield::ShieldMode::kOff;
  eval.n_threads = cfg.eval_threads;

  RngStream rng(cfg.seed + 0x7e);
  const auto est = pacbayes::estimate_empirical(env_set.specs, cp.bundle, cp.posterior,
                                                cfg.bound.verify_latents, rng, eval);
  nlohmann::json j;
  j["n_envs"] = env_set.specs.size();
  j["latents_per_env"] = cfg.bound.verify_latents;
  j["expected_success"] = est.success_rate;
  j["expected_safety"] = est.safety_rate;
  const std::string path = join_path(cfg.out_dir, kVerifyReport);
  io::write_text_file(path, j.dump(2) + "\n");
  m.add_output(path);
  finish(m, cfg, "verify");
  return {path};
}

std::vector<std::string> cmd_oracle(const io::RunConfig& cfg, int env_id) {
  ensure_dir(cfg.out_dir);
  Manifest m = start_manifest("oracle", cfg);
  const std::string envs_path = join_path(cfg.out_dir, kEnvsSim);
  const auto env_set = env::load_env_set(envs_path);
  m.add_input(envs_path);
  if (env_id < 0 || env_id >= static_cast<int>(env_set.specs.size()))
    throw std::runtime_error("env_id out of range for the generated set");
  const auto& e = env_set.specs[env_id];

  const auto g = grid::solve_avoid(e, cfg.oracle, cfg.oracle_gamma);
  const std::string grid_path =
      join_path(cfg.out_dir, "grid_avoid_" + std::to_string(env_id) + ".json");
  grid::save_grid(g, grid_path);
  m.add_output(grid_path);
  std::vector<std::string> outputs{grid_path};

  // When a trained checkpoint is present, also report how well the learned
  // critic matches the tabular values.
  const std::string cp_path = join_path(cfg.out_dir, kCheckpointLab);
  const std::string cp_sim_path = join_path(cfg.out_dir, kCheckpointSim);
  std::string source;
  if (std::filesystem::exists(cp_path))
    source = cp_path;
  else if (std::filesystem::exists(cp_sim_path))
    source = cp_sim_path;
  if (!source.empty()) {
    const auto cp = io::load_checkpoint(source);
    m.add_input(source);
    RngStream rng(cfg.seed + 0x0a);
    const auto agree = critic_oracle_agreement(e, g, cp.bundle, cp.posterior.mu, 1000,
                                               cfg.sim.v_thr, rng);
    nlohmann::json j;
    j["env_id"] = env_id;
    j["n_states"] = agree.n_states;
    j["sign_agreement"] = agree.sign_agreement;
    j["critic_flagged"] = agree.critic_flagged;
    j["oracle_flagged"] = agree.oracle_flagged;
    const std::string stats_path =
        join_path(cfg.out_dir, "oracle_stats_" + std::to_string(env_id) + ".json");
    io::write_text_file(stats_path, j.dump(2) + "\n");
    m.add_output(stats_path);
    outputs.push_back(stats_path);
  }
  finish(m, cfg, "oracle");
  return outputs;
}

void apply_baseline_variant(io::RunConfig& cfg, const std::string& variant) {
  if (variant == "base" || variant == "rp") {
    cfg.sim.train_backup = false;
    cfg.sim.shield_mode = shield::ShieldMode::kOff;
    cfg.sim.beta = 0.0;
    cfg.sim.anneal.rho_init = 0.0;
    cfg.sim.lambda_penalty = variant == "rp" ? 1.0 : 0.0;
    cfg.lab.shield_mode = shield::ShieldMode::kOff;
  } else if (variant == "risk_shield") {
    cfg.sim.backup_mode = grid::CriticMode::kRisk;
  } else if (variant == "no_latent_shield") {
    cfg.agent.condition_perf_on_latent = false;
    cfg.agent.condition_backup_on_latent = false;
    cfg.sim.beta = 0.0;
  } else {
    throw std::invalid_argument("unknown baseline variant: " + variant);
  }
}

std::vector<std::string> cmd_baseline(io::RunConfig cfg, const std::string& variant) {
  apply_baseline_variant(cfg, variant);
  cfg.out_dir = join_path(cfg.out_dir, "baseline_" + variant);
  ensure_dir(cfg.out_dir);

  std::vector<std::string> outputs;
  auto append = [&](std::vector<std::string> v) {
    outputs.insert(outputs.end(), v.begin(), v.end());
  };
  append(cmd_gen_envs(cfg));
  append(cmd_train_sim(cfg));
  if (cfg.agent.condition_perf_on_latent) {
    append(cmd_train_lab(cfg));
    append(cmd_bound(cfg));
    append(cmd_verify(cfg));
  }
  return outputs;
}

OracleAgreement critic_oracle_agreement(const env::EnvironmentSpec& e,
                                        const grid::ValueGrid& oracle,
                                        const agents::AgentBundle& bundle,
                                        std::span<const double> z, int n_states,
                                        double flag_thr, RngStream& rng) {
  OracleAgreement out;
  int agree = 0;
  while (out.n_states < n_states) {
    env::RobotState s{rng.uniform(0.0, e.side()), rng.uniform(0.0, e.side()),
                      rng.uniform(-3.141592653589793, 3.141592653589793)};
    if (env::safety_margin(e, s) >= 0.0) continue;
    const auto obs = env::observe(e, s);
    const auto backup_action = agents::backup_mean_action(bundle, obs, z);
    const double learned = agents::backup_q(bundle, obs, z, backup_action);
    const double tabular = oracle.value_at(s.x, s.y, s.theta);
    if ((learned >= 0.0) == (tabular >= 0.0)) ++agree;
    if (learned > flag_thr) ++out.critic_flagged;
    if (tabular > flag_thr) ++out.oracle_flagged;
    ++out.n_states;
  }
  out.sign_agreement = static_cast<double>(agree) / n_states;
  return out;
}

}  // namespace saferl::pipeline
