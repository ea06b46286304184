#include "saferl/lab_stage.hpp"

#include <cmath>
#include <stdexcept>

namespace saferl::train {

namespace {

using nn::Mat;

constexpr double kHalfLog2Pi = 0.9189385332046727;

struct FreezeBundle {
  explicit FreezeBundle(agents::AgentBundle& b) : b_(b) {
    nets_ = {&b.perf_actor.net,  &b.perf_critic1.net,  &b.perf_critic2.net,
             &b.perf_target1,    &b.perf_target2,      &b.backup_actor.net,
             &b.backup_critic1.net, &b.backup_critic2.net, &b.backup_target1,
             &b.backup_target2,  &b.discriminator};
    for (auto* n : nets_) n->set_requires_grad(false);
  }
  ~FreezeBundle() {
    for (auto* n : nets_) n->set_requires_grad(true);
  }
  agents::AgentBundle& b_;
  std::vector<nn::MlpParams*> nets_;
};

}  // namespace

agents::LatentDistribution PosteriorTrainState::posterior() const {
  agents::LatentDistribution d;
  const int n = mu.value.cols;
  d.mu.resize(n);
  d.sigma.resize(n);
  for (int i = 0; i < n; ++i) {
    d.mu[i] = mu.value(0, i);
    d.sigma[i] = std::exp(log_sigma.value(0, i));
  }
  return d;
}

PosteriorTrainState make_posterior_state(const agents::LatentDistribution& prior,
                                         const LabConfig& cfg) {
  PosteriorTrainState s;
  s.prior = prior;
  const int n = prior.dim();
  s.mu = nn::ParamBlock("posterior.mu", 1, n);
  s.log_sigma = nn::ParamBlock("posterior.log_sigma", 1, n);
  for (int i = 0; i < n; ++i) {
    s.mu.value(0, i) = prior.mu[i];
    s.log_sigma.value(0, i) = std::log(prior.sigma[i]);
  }
  s.mu_adam = nn::make_adam(static_cast<std::size_t>(n), cfg.lr_mu);
  s.sigma_adam = nn::make_adam(static_cast<std::size_t>(n), cfg.lr_sigma);
  return s;
}

PosteriorLossResult posterior_loss(const agents::Batch& batch, agents::AgentBundle& bundle,
                                   PosteriorTrainState& state, double kl_weight) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (!bundle.perf_actor.latent)
    throw std::invalid_argument("posterior tuning requires a latent-conditioned policy");
  const int n = static_cast<int>(batch.size());
  const int n_z = state.prior.dim();

  FreezeBundle freeze(bundle);
  nn::Tape tape;

  Mat obs(n, env::kObsDim), xi(n, n_z);
  for (int i = 0; i < n; ++i) {
    const auto& t = *batch[i];
    for (int j = 0; j < env::kObsDim; ++j) obs(i, j) = t.obs[j];
    for (int j = 0; j < n_z; ++j) xi(i, j) = t.xi[j];
  }

  int mu_node = tape.param(&state.mu);
  int log_sigma_node = tape.param(&state.log_sigma);
  int sigma_node = tape.exp_(log_sigma_node);
  int xi_node = tape.constant(xi);
  int z = tape.brow_add(mu_node, tape.brow_mul(sigma_node, xi_node));

  int obs_node = tape.constant(obs);
  int actor_in = tape.concat_cols(obs_node, z);
  int trunk = nn::mlp_forward(tape, bundle.perf_actor.net, actor_in);
  int action = nn::head_mean(tape, trunk, bundle.perf_actor.head);

  int critic_in = tape.concat_cols(actor_in, action);
  int q1 = nn::mlp_forward(tape, bundle.perf_critic1.net, critic_in);
  int q2 = nn::mlp_forward(tape, bundle.perf_critic2.net, critic_in);
  int value_term = tape.mean_all(tape.neg(tape.min2(q1, q2)));

  // log P(z) at the reparameterized point: per-dim -0.5 xi^2 - log sigma - c.
  int log_p = tape.rowsum(
      tape.brow_add(tape.neg(log_sigma_node), tape.mul_const(tape.square(xi_node), -0.5)));
  // log P0(z) with constant prior parameters.
  Mat neg_mu0(1, n_z), inv_sigma0(1, n_z);
  double log_sigma0_sum = 0.0;
  for (int j = 0; j < n_z; ++j) {
    neg_mu0(0, j) = -state.prior.mu[j];
    inv_sigma0(0, j) = 1.0 / state.prior.sigma[j];
    log_sigma0_sum += std::log(state.prior.sigma[j]);
  }
  int z0 = tape.brow_add(tape.constant(neg_mu0), z);
  int scaled = tape.brow_mul(tape.constant(inv_sigma0), z0);
  int log_p0 = tape.add_const(tape.rowsum(tape.mul_const(tape.square(scaled), -0.5)),
                              -log_sigma0_sum);
  int density_term = tape.mean_all(tape.sub(log_p, log_p0));

  int loss = tape.add(value_term, tape.mul_const(density_term, kl_weight));

  state.mu.zero_grad();
  state.log_sigma.zero_grad();
  tape.backward(loss);

  PosteriorLossResult out;
  out.loss = tape.value(loss)(0, 0);
  out.value_term = tape.value(value_term)(0, 0);
  out.density_term = tape.value(density_term)(0, 0);
  out.grad_mu.assign(state.mu.grad.d.begin(), state.mu.grad.d.end());
  out.grad_log_sigma.assign(state.log_sigma.grad.d.begin(), state.log_sigma.grad.d.end());
  return out;
}

StageMetrics train_lab(const std::vector<env::EnvironmentSpec>& env_set,
                       agents::AgentBundle& bundle, PosteriorTrainState& state,
                       const LabConfig& cfg, RngStream& rng,
                       ReplayBuffer* external_buffer) {
  if (env_set.empty()) throw std::invalid_argument("empty environment set");
  if (cfg.shield_mode == shield::ShieldMode::kOracle ||
      cfg.shield_mode == shield::ShieldMode::kForwardSim)
    throw std::invalid_argument("the second training stage shields with the learned critic only");

  StageMetrics metrics;
  ReplayBuffer local_buffer(cfg.buffer_capacity);
  ReplayBuffer& buffer = external_buffer ? *external_buffer : local_buffer;

  const env::EnvironmentSpec* cur_env = &env_set[rng.uniform_int(static_cast<int>(env_set.size()))];
  agents::LatentSample latent = agents::sample_latent(state.posterior(), rng);
  env::RobotState robot = cur_env->start_pose;
  long episode = 0;
  int ep_steps = 0;
  double ep_reward = 0.0;
  int ep_overrides = 0;
  double phase_loss = 0.0;

  for (long step = 1; step <= cfg.num_steps; ++step) {
    const env::Observation obs = env::observe(*cur_env, robot);
    const env::Action proposed = agents::perf_sample_action(bundle, obs, latent.z, rng);

    shield::ShieldConfig scfg{cfg.shield_mode, cfg.v_thr, 1.0};
    const shield::OverrideFn test = shield::make_value_override(bundle, latent.z, cfg.v_thr);
    const shield::ShieldResult sh = shield::shield_action(scfg, obs, proposed, test, rng);

    const env::StepResult res = env::step(*cur_env, robot, sh.action);
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
    buffer.add(std::move(t));

    ep_reward += res.reward;
    if (sh.overridden) ++ep_overrides;
    robot = res.next_state;

    if (step % cfg.optimize_freq == 0 &&
        buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      phase_loss = 0.0;
      for (int u = 0; u < cfg.updates_per_optimize; ++u) {
        const agents::Batch batch = buffer.sample(cfg.batch_size, rng);
        const auto r = posterior_loss(batch, bundle, state, cfg.kl_weight);
        phase_loss += r.loss;
        nn::adam_step(state.mu_adam, {&state.mu});
        nn::adam_step(state.sigma_adam, {&state.log_sigma});
      }
      phase_loss /= cfg.updates_per_optimize;
    }

    if (done_kind != env::DoneKind::kNone) {
      EpisodeRow row;
      row.step = step;
      row.episode = episode;
      row.success = done_kind == env::DoneKind::kReachedTarget;
      row.violation = done_kind == env::DoneKind::kCollided;
      row.epsilon = cfg.shield_mode == shield::ShieldMode::kOff ? 0.0 : 1.0;
      row.sum_reward = ep_reward;
      row.override_count = ep_overrides;
      row.length = ep_steps;
      row.perf_actor_loss = phase_loss;
      row.kl_estimate = agents::kl_diag_gaussians(state.posterior(), state.prior);
      if (row.violation) ++metrics.violations;
      metrics.episodes.push_back(row);

      ++episode;
      ep_steps = 0;
      ep_reward = 0.0;
      ep_overrides = 0;
      cur_env = &env_set[rng.uniform_int(static_cast<int>(env_set.size()))];
      latent = agents::sample_latent(state.posterior(), rng);
      robot = cur_env->start_pose;
    }
  }
  metrics.total_steps = cfg.num_steps;
  return metrics;
}

}  // namespace saferl::train
