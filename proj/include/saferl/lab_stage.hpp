#pragma once

#include <vector>

#include "saferl/agents.hpp"
#include "saferl/sim_stage.hpp"

namespace saferl::train {

struct LabConfig {
  long num_steps = 30000;
  long optimize_freq = 2000;
  int updates_per_optimize = 200;
  int batch_size = 128;
  std::size_t buffer_capacity = 50000;
  int max_episode_steps = 200;
  double kl_weight = 1.0;  // weight on log(P(z)/P0(z)) in the posterior loss
  double lr_mu = 1e-4;
  double lr_sigma = 1e-4;
  shield::ShieldMode shield_mode = shield::ShieldMode::kValue;  // always-on when enabled
  double v_thr = -0.05;
};

// Trainable posterior over latents plus the frozen context it is tuned
// against. Sigma is optimized in log space so it stays positive.
struct PosteriorTrainState {
  agents::LatentDistribution prior;  // immutable P0
  nn::ParamBlock mu;
  nn::ParamBlock log_sigma;
  nn::AdamState mu_adam;
  nn::AdamState sigma_adam;

  agents::LatentDistribution posterior() const;
};

PosteriorTrainState make_posterior_state(const agents::LatentDistribution& prior,
                                         const LabConfig& cfg);

struct PosteriorLossResult {
  double loss = 0.0;
  double value_term = 0.0;    // -mean Q^p(o, a(z))
  double density_term = 0.0;  // mean log P(z) - log P0(z)
  std::vector<double> grad_mu;
  std::vector<double> grad_log_sigma;
};

// Eq.-style posterior objective: -mean[Q^p(o, a(z))] + kl_weight * mean[log
// P(z) - log P0(z)], with z rebuilt from each transition's stored noise so
// gradients reach psi through both the density and the policy input path.
// Gradients are accumulated into state.mu/state.log_sigma.
PosteriorLossResult posterior_loss(const agents::Batch& batch, agents::AgentBundle& bundle,
                                   PosteriorTrainState& state, double kl_weight);

// Fine-tunes only the latent distribution with the shield always active;
// all actor/critic weights stay frozen.
StageMetrics train_lab(const std::vector<env::EnvironmentSpec>& env_set,
                       agents::AgentBundle& bundle, PosteriorTrainState& state,
                       const LabConfig& cfg, RngStream& rng,
                       ReplayBuffer* external_buffer = nullptr);

}  // namespace saferl::train
