#include "saferl/sim_stage.hpp"

#include <cmath>
#include <stdexcept>

namespace saferl::train {

double violation_ratio(const StageMetrics& metrics) {
  if (metrics.episodes.empty()) throw std::invalid_argument("no episodes collected");
  return static_cast<double>(metrics.violations) /
         static_cast<double>(metrics.episodes.size());
}

double reward_augment(const Transition& t, const agents::AgentBundle& bundle, double beta,
                      double lambda_penalty, const agents::LatentDistribution& prior) {
  env::Observation obs;
  for (int i = 0; i < env::kNumRays; ++i) obs.rays[i] = t.obs[i];
  obs.goal_distance = t.obs[env::kNumRays];
  obs.goal_bearing = t.obs[env::kNumRays + 1];

  double r = t.reward - lambda_penalty * (t.g_margin >= 0.0 ? 1.0 : 0.0);
  if (beta == 0.0) return r;
  const double log_q = agents::discriminator_log_q(bundle, obs, t.z);
  const double log_p = agents::latent_log_density(prior, t.z);
  return r + beta * (log_q - log_p);
}

namespace {

struct PhaseLosses {
  double perf_critic = 0.0;
  double perf_actor = 0.0;
  double backup_critic = 0.0;
  double backup_actor = 0.0;
  double disc = 0.0;
};

}  // namespace

namespace {

env::RobotState sample_reset_pose(const env::EnvironmentSpec& e, const SimConfig& cfg,
                                  RngStream& rng) {
  if (!cfg.random_resets) return e.start_pose;
  for (int attempt = 0; attempt < 100; ++attempt) {
    env::RobotState s{rng.uniform(0.0, e.side()), rng.uniform(0.0, e.side()),
                      rng.uniform(-3.141592653589793, 3.141592653589793)};
    if (env::safety_margin(e, s) <= -cfg.reset_clearance && env::target_margin(e, s) > 0.0)
      return s;
  }
  return e.start_pose;
}

}  // namespace

StageMetrics train_sim(const std::vector<env::EnvironmentSpec>& env_set,
                       agents::AgentBundle& bundle, const agents::LatentDistribution& prior,
                       const SimConfig& cfg, RngStream& rng,
                       ReplayBuffer* external_buffer) {
  if (env_set.empty()) throw std::invalid_argument("empty environment set");
  cfg.anneal.validate();

  StageMetrics metrics;
  ReplayBuffer local_buffer(cfg.buffer_capacity);
  ReplayBuffer& buffer = external_buffer ? *external_buffer : local_buffer;
  double gamma_b = cfg.anneal.gamma_b_init;
  PhaseLosses losses;

  const env::EnvironmentSpec* cur_env = &env_set[rng.uniform_int(static_cast<int>(env_set.size()))];
  agents::LatentSample latent = agents::sample_latent(prior, rng);
  env::RobotState state = sample_reset_pose(*cur_env, cfg, rng);
  long episode = 0;
  int ep_steps = 0;
  double ep_reward = 0.0;
  int ep_overrides = 0;

  for (long step = 1; step <= cfg.num_steps; ++step) {
    const double rho = cfg.anneal.rho_at(step - 1);
    const double epsilon = cfg.anneal.eps_at(step - 1);

    const env::Observation obs = env::observe(*cur_env, state);
    const bool backup_chosen = cfg.train_backup && shield::mix_policy_choice(rho, rng);
    const env::Action proposed =
        backup_chosen ? agents::backup_sample_action(bundle, obs, latent.z, rng)
                      : agents::perf_sample_action(bundle, obs, latent.z, rng);

    shield::ShieldConfig scfg{cfg.shield_mode, cfg.v_thr, epsilon};
    shield::OverrideFn test;
    if (cfg.shield_mode == shield::ShieldMode::kForwardSim) {
      test = [&](const env::Observation&, const env::Action& cand)
          -> std::optional<env::Action> {
        const auto d = grid::forward_sim_shield(
            *cur_env, state, cand,
            [&](const env::Observation& o) {
              return agents::backup_mean_action(bundle, o, latent.z);
            },
            cfg.forward_sim_horizon);
        if (d.accept) return std::nullopt;
        return d.override_action;
      };
    } else if (cfg.shield_mode == shield::ShieldMode::kOracle) {
      throw std::invalid_argument("oracle shield requires a solved grid; not available in training");
    } else {
      test = shield::make_value_override(bundle, latent.z, cfg.v_thr);
    }
    const shield::ShieldResult sh = shield::shield_action(scfg, obs, proposed, test, rng);

    const env::StepResult res = env::step(*cur_env, state, sh.action);
    ++ep_steps;
    const bool timeout = res.done == env::DoneKind::kNone && ep_steps >= cfg.max_episode_steps;
    const env::DoneKind done_kind = timeout ? env::DoneKind::kTimeout : res.done;

    Transition t;
    env::obs_to_row(obs, t.obs.data());
    env::obs_to_row(res.observation, t.next_obs.data());
    t.a_proposed = proposed;
    t.a_executed = sh.action;
    t.z = latent.z;
    t.xi = latent.xi;
    t.reward = res.reward;
    t.g_margin = res.g_margin;
    t.l_margin = res.l_margin;
    t.done = done_kind != env::DoneKind::kNone;
    t.done_kind = done_kind;
    t.overridden = sh.overridden;
    t.backup_chosen = backup_chosen;
    buffer.add(std::move(t));

    ep_reward += res.reward;
    if (sh.overridden) ++ep_overrides;
    state = res.next_state;

    if (step % cfg.optimize_freq == 0 &&
        buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      losses = PhaseLosses{};
      for (int u = 0; u < cfg.updates_per_optimize; ++u) {
        const agents::Batch batch = buffer.sample(cfg.batch_size, rng);

        std::vector<double> r_aug(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
          r_aug[i] = reward_augment(*batch[i], bundle, cfg.beta, cfg.lambda_penalty, prior);

        const auto pc = agents::perf_critic_update(bundle, batch, r_aug, rng);
        const auto pa = agents::perf_actor_update(bundle, batch, rng);
        bundle.log_alpha_perf = agents::temperature_update(
            bundle.log_alpha_perf, pa.log_probs, bundle.cfg.target_entropy_perf,
            bundle.alpha_perf_adam);

        losses.perf_critic += 0.5 * (pc.critic1 + pc.critic2);
        losses.perf_actor += pa.loss;

        if (cfg.train_backup) {
          const auto bc = agents::backup_critic_update(bundle, batch, gamma_b, cfg.backup_mode, rng);
          const auto ba = agents::backup_actor_update(bundle, batch, prior, rng);
          bundle.log_alpha_backup = agents::temperature_update(
              bundle.log_alpha_backup, ba.log_probs, bundle.cfg.target_entropy_backup,
              bundle.alpha_backup_adam);
          losses.backup_critic += 0.5 * (bc.critic1 + bc.critic2);
          losses.backup_actor += ba.loss;
          if (cfg.beta != 0.0) losses.disc += agents::discriminator_update(bundle, batch);
        } else if (cfg.beta != 0.0) {
          losses.disc += agents::discriminator_update(bundle, batch);
        }
        agents::polyak_all(bundle);
      }
      const double inv = 1.0 / cfg.updates_per_optimize;
      losses.perf_critic *= inv;
      losses.perf_actor *= inv;
      losses.backup_critic *= inv;
      losses.backup_actor *= inv;
      losses.disc *= inv;
      gamma_b = cfg.anneal.gamma_b_next(gamma_b);
    }

    if (done_kind != env::DoneKind::kNone) {
      EpisodeRow row;
      row.step = step;
      row.episode = episode;
      row.success = done_kind == env::DoneKind::kReachedTarget;
      row.violation = done_kind == env::DoneKind::kCollided;
      row.rho = cfg.anneal.rho_at(step);
      row.epsilon = cfg.anneal.eps_at(step);
      row.gamma_b = gamma_b;
      row.sum_reward = ep_reward;
      row.override_count = ep_overrides;
      row.length = ep_steps;
      row.perf_critic_loss = losses.perf_critic;
      row.perf_actor_loss = losses.perf_actor;
      row.backup_critic_loss = losses.backup_critic;
      row.backup_actor_loss = losses.backup_actor;
      row.disc_loss = losses.disc;
      if (row.violation) ++metrics.violations;
      metrics.episodes.push_back(row);

      ++episode;
      ep_steps = 0;
      ep_reward = 0.0;
      ep_overrides = 0;
      cur_env = &env_set[rng.uniform_int(static_cast<int>(env_set.size()))];
      latent = agents::sample_latent(prior, rng);
      state = sample_reset_pose(*cur_env, cfg, rng);
    }
  }
  metrics.total_steps = cfg.num_steps;
  return metrics;
}

}  // namespace saferl::train
