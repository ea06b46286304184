#include "saferl/agents.hpp"

#include <cmath>
#include <stdexcept>

namespace saferl::agents {

namespace {

using nn::Mat;

constexpr double kHalfLog2Pi = 0.9189385332046727;

Mat single_input(const env::Observation& obs, std::span<const double> z, bool latent) {
  Mat in(1, env::kObsDim + (latent ? static_cast<int>(z.size()) : 0));
  env::obs_to_row(obs, in.row(0));
  if (latent)
    for (std::size_t i = 0; i < z.size(); ++i) in(0, env::kObsDim + static_cast<int>(i)) = z[i];
  return in;
}

Mat batch_obs(const Batch& batch, bool next, bool latent) {
  const int n_z = batch.empty() || !latent ? 0 : static_cast<int>(batch[0]->z.size());
  Mat m(static_cast<int>(batch.size()), env::kObsDim + n_z);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = *batch[i];
    const auto& o = next ? t.next_obs : t.obs;
    double* r = m.row(static_cast<int>(i));
    for (int j = 0; j < env::kObsDim; ++j) r[j] = o[j];
    for (int j = 0; j < n_z; ++j) r[env::kObsDim + j] = t.z[j];
  }
  return m;
}

Mat with_actions(const Mat& base, const Mat& actions) {
  Mat m(base.rows, base.cols + actions.cols);
  for (int i = 0; i < base.rows; ++i) {
    double* r = m.row(i);
    const double* b = base.row(i);
    const double* a = actions.row(i);
    for (int j = 0; j < base.cols; ++j) r[j] = b[j];
    for (int j = 0; j < actions.cols; ++j) r[base.cols + j] = a[j];
  }
  return m;
}

Mat stored_actions(const Batch& batch, bool executed) {
  Mat m(static_cast<int>(batch.size()), 2);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const env::Action& a = executed ? batch[i]->a_executed : batch[i]->a_proposed;
    m(static_cast<int>(i), 0) = a.v;
    m(static_cast<int>(i), 1) = a.w;
  }
  return m;
}

Mat normal_noise(int rows, int cols, RngStream& rng) {
  Mat m(rows, cols);
  for (auto& x : m.d) x = rng.normal();
  return m;
}

std::vector<nn::ParamBlock*> net_blocks(nn::MlpParams& p) {
  std::vector<nn::ParamBlock*> blocks;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    blocks.push_back(&p.weights[i]);
    blocks.push_back(&p.biases[i]);
  }
  return blocks;
}

double critic_mse_update(Critic& critic, const Mat& input, const std::vector<double>& target,
                         double grad_clip) {
  nn::Tape tape;
  int loss = build_critic_loss(tape, critic.net, input, target);
  nn::zero_grads(critic.net);
  tape.backward(loss);
  nn::clip_grad_norm(net_blocks(critic.net), grad_clip);
  nn::adam_step(critic.adam, net_blocks(critic.net));
  return tape.value(loss)(0, 0);
}

struct GradGuard {
  explicit GradGuard(std::vector<nn::MlpParams*> nets) : nets_(std::move(nets)) {
    for (auto* n : nets_) n->set_requires_grad(false);
  }
  ~GradGuard() {
    for (auto* n : nets_) n->set_requires_grad(true);
  }
  std::vector<nn::MlpParams*> nets_;
};

}  // namespace

AgentBundle make_bundle(const AgentConfig& cfg, RngStream& rng) {
  AgentBundle b;
  b.cfg = cfg;
  const int perf_extra = cfg.condition_perf_on_latent ? cfg.n_z : 0;
  const int backup_extra = cfg.condition_backup_on_latent ? cfg.n_z : 0;

  auto layer_sizes = [&](int in, int out) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(out);
    return sizes;
  };

  b.perf_actor.net = nn::make_mlp("perf_actor", layer_sizes(env::kObsDim + perf_extra, 4),
                                  cfg.activation, rng);
  b.perf_actor.head.lo = {cfg.perf_v_min, -cfg.w_max};
  b.perf_actor.head.hi = {cfg.perf_v_max, cfg.w_max};
  b.perf_actor.latent = cfg.condition_perf_on_latent;
  b.perf_actor.adam = nn::make_adam(b.perf_actor.net.num_params(), cfg.lr);

  auto make_critic = [&](const std::string& name, int extra) {
    Critic c;
    c.net = nn::make_mlp(name, layer_sizes(env::kObsDim + extra + 2, 1), cfg.activation, rng);
    c.latent = extra > 0;
    c.adam = nn::make_adam(c.net.num_params(), cfg.lr);
    return c;
  };
  b.perf_critic1 = make_critic("perf_critic1", perf_extra);
  b.perf_critic2 = make_critic("perf_critic2", perf_extra);
  b.perf_target1 = b.perf_critic1.net;
  b.perf_target2 = b.perf_critic2.net;

  b.backup_actor.net = nn::make_mlp("backup_actor", layer_sizes(env::kObsDim + backup_extra, 4),
                                    cfg.activation, rng);
  b.backup_actor.head.lo = {cfg.backup_v_min, -cfg.w_max};
  b.backup_actor.head.hi = {cfg.backup_v_max, cfg.w_max};
  b.backup_actor.latent = cfg.condition_backup_on_latent;
  b.backup_actor.adam = nn::make_adam(b.backup_actor.net.num_params(), cfg.lr);

  b.backup_critic1 = make_critic("backup_critic1", backup_extra);
  b.backup_critic2 = make_critic("backup_critic2", backup_extra);
  b.backup_target1 = b.backup_critic1.net;
  b.backup_target2 = b.backup_critic2.net;

  b.discriminator =
      nn::make_mlp("discriminator", layer_sizes(env::kObsDim, cfg.n_z), cfg.activation, rng);
  b.disc_adam = nn::make_adam(b.discriminator.num_params(), cfg.lr);

  b.log_alpha_perf = std::log(cfg.alpha_init);
  b.log_alpha_backup = std::log(cfg.alpha_init);
  b.alpha_perf_adam = nn::make_adam(1, cfg.lr_alpha);
  b.alpha_backup_adam = nn::make_adam(1, cfg.lr_alpha);
  return b;
}

namespace {

env::Action mean_action(const Actor& actor, const env::Observation& obs,
                        std::span<const double> z) {
  const Mat in = single_input(obs, z, actor.latent);
  const Mat trunk = nn::mlp_eval(actor.net, in);
  const Mat a = nn::head_mean_eval(trunk, actor.head);
  return {a(0, 0), a(0, 1)};
}

env::Action sample_action(const Actor& actor, const env::Observation& obs,
                          std::span<const double> z, RngStream& rng) {
  const Mat in = single_input(obs, z, actor.latent);
  const Mat trunk = nn::mlp_eval(actor.net, in);
  const Mat noise = normal_noise(1, actor.head.dim(), rng);
  const auto s = nn::head_sample_eval(trunk, actor.head, noise);
  return {s.action(0, 0), s.action(0, 1)};
}

}  // namespace

env::Action perf_mean_action(const AgentBundle& b, const env::Observation& obs,
                             std::span<const double> z) {
  return mean_action(b.perf_actor, obs, z);
}

env::Action perf_sample_action(const AgentBundle& b, const env::Observation& obs,
                               std::span<const double> z, RngStream& rng) {
  return sample_action(b.perf_actor, obs, z, rng);
}

env::Action backup_mean_action(const AgentBundle& b, const env::Observation& obs,
                               std::span<const double> z) {
  return mean_action(b.backup_actor, obs, z);
}

env::Action backup_sample_action(const AgentBundle& b, const env::Observation& obs,
                                 std::span<const double> z, RngStream& rng) {
  return sample_action(b.backup_actor, obs, z, rng);
}

double backup_q(const AgentBundle& b, const env::Observation& obs, std::span<const double> z,
                const env::Action& action) {
  Mat in(1, env::kObsDim + (b.backup_critic1.latent ? b.cfg.n_z : 0) + 2);
  env::obs_to_row(obs, in.row(0));
  int c = env::kObsDim;
  if (b.backup_critic1.latent)
    for (int i = 0; i < b.cfg.n_z; ++i) in(0, c++) = z[i];
  in(0, c) = action.v;
  in(0, c + 1) = action.w;
  const double q1 = nn::mlp_eval(b.backup_critic1.net, in)(0, 0);
  const double q2 = nn::mlp_eval(b.backup_critic2.net, in)(0, 0);
  return std::max(q1, q2);
}

double discriminator_log_q(const AgentBundle& b, const env::Observation& obs,
                           std::span<const double> z) {
  Mat in(1, env::kObsDim);
  env::obs_to_row(obs, in.row(0));
  const Mat mu = nn::mlp_eval(b.discriminator, in);
  double sq = 0.0;
  for (int i = 0; i < mu.cols; ++i) {
    const double d = mu(0, i) - z[i];
    sq += d * d;
  }
  return -0.5 * sq - b.cfg.n_z * kHalfLog2Pi;
}

CriticLosses perf_critic_update(AgentBundle& b, const Batch& batch,
                                const std::vector<double>& r_aug, RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int n = static_cast<int>(batch.size());
  const bool latent = b.perf_actor.latent;

  // Targets: r + gamma * (1 - done) * (min_i Q_target_i(o', a') - alpha log pi(a'|o')).
  const Mat next_in = batch_obs(batch, /*next=*/true, latent);
  const Mat trunk = nn::mlp_eval(b.perf_actor.net, next_in);
  const Mat noise = normal_noise(n, 2, rng);
  const auto next_act = nn::head_sample_eval(trunk, b.perf_actor.head, noise);
  const Mat critic_in = with_actions(next_in, next_act.action);
  const Mat q1 = nn::mlp_eval(b.perf_target1, critic_in);
  const Mat q2 = nn::mlp_eval(b.perf_target2, critic_in);

  const double alpha = b.alpha_perf();
  std::vector<double> target(n);
  for (int i = 0; i < n; ++i) {
    const auto& t = *batch[i];
    const double soft_q = std::min(q1(i, 0), q2(i, 0)) - alpha * next_act.log_prob[i];
    target[i] = r_aug[i] + b.cfg.gamma_perf * (t.done ? 0.0 : soft_q);
  }

  const Mat in = with_actions(batch_obs(batch, false, latent), stored_actions(batch, false));
  CriticLosses losses;
  losses.critic1 = critic_mse_update(b.perf_critic1, in, target, b.cfg.grad_clip);
  losses.critic2 = critic_mse_update(b.perf_critic2, in, target, b.cfg.grad_clip);
  return losses;
}

ActorUpdate perf_actor_update(AgentBundle& b, const Batch& batch, RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int n = static_cast<int>(batch.size());
  GradGuard guard({&b.perf_critic1.net, &b.perf_critic2.net});

  nn::Tape tape;
  const Mat obs_in = batch_obs(batch, false, b.perf_actor.latent);
  const Mat noise = normal_noise(n, 2, rng);
  const auto nodes = build_perf_actor_loss(tape, b, obs_in, noise);

  nn::zero_grads(b.perf_actor.net);
  tape.backward(nodes.loss);
  nn::clip_grad_norm(net_blocks(b.perf_actor.net), b.cfg.grad_clip);
  nn::adam_step(b.perf_actor.adam, net_blocks(b.perf_actor.net));

  ActorUpdate out;
  out.loss = tape.value(nodes.loss)(0, 0);
  out.log_probs.resize(n);
  for (int i = 0; i < n; ++i) out.log_probs[i] = tape.value(nodes.log_prob)(i, 0);
  return out;
}

CriticLosses backup_critic_update(AgentBundle& b, const Batch& batch, double gamma_b,
                                  grid::CriticMode mode, RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int n = static_cast<int>(batch.size());
  const bool latent = b.backup_actor.latent;

  const Mat next_in = batch_obs(batch, true, latent);
  const Mat trunk = nn::mlp_eval(b.backup_actor.net, next_in);
  const Mat noise = normal_noise(n, 2, rng);
  const auto next_act = nn::head_sample_eval(trunk, b.backup_actor.head, noise);
  const Mat critic_in = with_actions(next_in, next_act.action);
  const Mat q1 = nn::mlp_eval(b.backup_target1, critic_in);
  const Mat q2 = nn::mlp_eval(b.backup_target2, critic_in);

  std::vector<double> target(n);
  for (int i = 0; i < n; ++i) {
    const auto& t = *batch[i];
    const double q_next = std::max(q1(i, 0), q2(i, 0));  // pessimism for a cost minimizer
    switch (mode) {
      case grid::CriticMode::kAvoid:
        target[i] = t.done ? t.g_margin : grid::dsbe_backup(t.g_margin, q_next, gamma_b);
        break;
      case grid::CriticMode::kReachAvoid:
        target[i] = t.done ? std::max(t.l_margin, t.g_margin)
                           : grid::reach_avoid_backup(t.l_margin, t.g_margin, q_next, gamma_b);
        break;
      case grid::CriticMode::kRisk: {
        const bool failed = t.g_margin >= 0.0;
        target[i] = t.done ? (failed ? 1.0 : 0.0) : grid::risk_backup(failed, q_next, gamma_b);
        break;
      }
    }
  }

  const Mat in = with_actions(batch_obs(batch, false, latent), stored_actions(batch, true));
  CriticLosses losses;
  losses.critic1 = critic_mse_update(b.backup_critic1, in, target, b.cfg.grad_clip);
  losses.critic2 = critic_mse_update(b.backup_critic2, in, target, b.cfg.grad_clip);
  return losses;
}

ActorUpdate backup_actor_update(AgentBundle& b, const Batch& batch,
                                const LatentDistribution& prior, RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const bool latent = b.backup_actor.latent;
  const int n = static_cast<int>(batch.size());
  if (latent && b.cfg.nu != 0.0 && b.cfg.n_marginal_samples < 2)
    throw std::invalid_argument("latent-conditioned backup actor needs n_marginal_samples >= 2");
  GradGuard guard({&b.backup_target1, &b.backup_target2});

  const Mat obs_in = batch_obs(batch, false, latent);
  const Mat noise = normal_noise(n, 2, rng);
  std::vector<Mat> marginal_inputs;
  if (latent && b.cfg.nu != 0.0) {
    for (int i = 0; i < b.cfg.n_marginal_samples; ++i) {
      Mat alt = obs_in;
      for (int r = 0; r < n; ++r) {
        const auto zs = sample_latent(prior, rng);
        for (int j = 0; j < b.cfg.n_z; ++j) alt(r, env::kObsDim + j) = zs.z[j];
      }
      marginal_inputs.push_back(std::move(alt));
    }
  }

  nn::Tape tape;
  const auto nodes = build_backup_actor_loss(tape, b, obs_in, noise, marginal_inputs);
  nn::zero_grads(b.backup_actor.net);
  tape.backward(nodes.loss);
  nn::clip_grad_norm(net_blocks(b.backup_actor.net), b.cfg.grad_clip);
  nn::adam_step(b.backup_actor.adam, net_blocks(b.backup_actor.net));

  ActorUpdate out;
  out.loss = tape.value(nodes.loss)(0, 0);
  out.log_probs.resize(n);
  for (int i = 0; i < n; ++i) out.log_probs[i] = tape.value(nodes.log_prob)(i, 0);
  return out;
}

double temperature_update(double log_alpha, std::span<const double> log_probs,
                          double target_entropy, nn::AdamState& adam) {
  double mean = 0.0;
  for (double lp : log_probs) mean += -lp - target_entropy;
  mean /= static_cast<double>(log_probs.size());
  // d/d(log alpha) of alpha * mean(-log pi - H).
  const double grad = std::exp(log_alpha) * mean;
  adam.step += 1;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  adam.m[0] = adam.beta1 * adam.m[0] + (1.0 - adam.beta1) * grad;
  adam.v[0] = adam.beta2 * adam.v[0] + (1.0 - adam.beta2) * grad * grad;
  return log_alpha - adam.lr * (adam.m[0] / bc1) / (std::sqrt(adam.v[0] / bc2) + adam.eps);
}

double discriminator_update(AgentBundle& b, const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int n = static_cast<int>(batch.size());
  Mat z(n, b.cfg.n_z);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < b.cfg.n_z; ++j) z(i, j) = batch[i]->z[j];
  nn::Tape tape;
  int loss = build_discriminator_loss(tape, b.discriminator, batch_obs(batch, false, false), z);
  nn::zero_grads(b.discriminator);
  tape.backward(loss);
  nn::clip_grad_norm(net_blocks(b.discriminator), b.cfg.grad_clip);
  nn::adam_step(b.disc_adam, net_blocks(b.discriminator));
  return tape.value(loss)(0, 0);
}

void polyak_all(AgentBundle& b) {
  nn::polyak_update(b.perf_target1, b.perf_critic1.net, b.cfg.tau);
  nn::polyak_update(b.perf_target2, b.perf_critic2.net, b.cfg.tau);
  nn::polyak_update(b.backup_target1, b.backup_critic1.net, b.cfg.tau);
  nn::polyak_update(b.backup_target2, b.backup_critic2.net, b.cfg.tau);
}

int build_critic_loss(nn::Tape& tape, nn::MlpParams& net, const Mat& input,
                      const std::vector<double>& target) {
  int in = tape.constant(input);
  int q = nn::mlp_forward(tape, net, in);
  Mat y(input.rows, 1);
  for (int i = 0; i < input.rows; ++i) y(i, 0) = target[i];
  return tape.mean_all(tape.square(tape.sub(q, tape.constant(y))));
}

ActorLossNodes build_perf_actor_loss(nn::Tape& tape, AgentBundle& b, const Mat& obs_in,
                                     const Mat& noise) {
  int in = tape.constant(obs_in);
  int trunk = nn::mlp_forward(tape, b.perf_actor.net, in);
  const auto s = nn::head_sample(tape, trunk, b.perf_actor.head, noise);

  int critic_in = tape.concat_cols(in, s.action);
  int q1 = nn::mlp_forward(tape, b.perf_critic1.net, critic_in);
  int q2 = nn::mlp_forward(tape, b.perf_critic2.net, critic_in);
  int qmin = tape.min2(q1, q2);
  ActorLossNodes nodes;
  nodes.loss = tape.mean_all(tape.sub(tape.mul_const(s.log_prob, b.alpha_perf()), qmin));
  nodes.log_prob = s.log_prob;
  return nodes;
}

ActorLossNodes build_backup_actor_loss(nn::Tape& tape, AgentBundle& b, const Mat& obs_in,
                                       const Mat& noise,
                                       const std::vector<Mat>& marginal_inputs) {
  int in = tape.constant(obs_in);
  int trunk = nn::mlp_forward(tape, b.backup_actor.net, in);
  const auto s = nn::head_sample(tape, trunk, b.backup_actor.head, noise);

  // The actor descends on the pessimistic target critics directly.
  int critic_in = tape.concat_cols(in, s.action);
  int q1 = nn::mlp_forward(tape, b.backup_target1, critic_in);
  int q2 = nn::mlp_forward(tape, b.backup_target2, critic_in);
  int objective = tape.add(tape.max2(q1, q2), tape.mul_const(s.log_prob, b.alpha_backup()));

  if (!marginal_inputs.empty()) {
    // log (1/n_s) sum_i pi(a | o, z_i), accumulated with pairwise LSE.
    int lse = -1;
    for (std::size_t i = 0; i < marginal_inputs.size(); ++i) {
      int alt_trunk = nn::mlp_forward(tape, b.backup_actor.net, tape.constant(marginal_inputs[i]));
      int lp = nn::head_log_prob_of_raw(tape, alt_trunk, b.backup_actor.head, s.raw);
      lse = i == 0 ? lp : tape.lse2(lse, lp);
    }
    int marginal = tape.add_const(lse, -std::log(static_cast<double>(marginal_inputs.size())));
    objective = tape.add(objective, tape.mul_const(tape.sub(marginal, s.log_prob), b.cfg.nu));
  }

  ActorLossNodes nodes;
  nodes.loss = tape.mean_all(objective);
  nodes.log_prob = s.log_prob;
  return nodes;
}

int build_discriminator_loss(nn::Tape& tape, nn::MlpParams& disc, const Mat& obs_in,
                             const Mat& z) {
  int in = tape.constant(obs_in);
  int mu = nn::mlp_forward(tape, disc, in);
  // Negative Gaussian log-likelihood with fixed unit variance.
  int sq = tape.rowsum(tape.mul_const(tape.square(tape.sub(mu, tape.constant(z))), 0.5));
  return tape.add_const(tape.mean_all(sq), z.cols * kHalfLog2Pi);
}

}  // namespace saferl::agents
