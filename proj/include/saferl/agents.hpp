#pragma once

#include <span>
#include <vector>

#include "saferl/env.hpp"
#include "saferl/latent.hpp"
#include "saferl/mlp.hpp"
#include "saferl/policy_head.hpp"
#include "saferl/replay.hpp"
#include "saferl/value_grid.hpp"

namespace saferl::agents {

struct AgentConfig {
  std::vector<int> hidden{128, 128};
  nn::Activation activation = nn::Activation::kRelu;
  int n_z = 20;
  double prior_sigma = 2.0;
  bool condition_perf_on_latent = true;
  bool condition_backup_on_latent = false;
  double lr = 1e-4;
  double lr_alpha = 1e-3;
  double alpha_init = 0.2;
  // Entropy targets per agent: the cost-minimizing backup works on a
  // margins-valued critic whose action gaps are small, so it runs colder.
  double target_entropy_perf = -2.0;
  double target_entropy_backup = -2.0;
  double tau = 0.995;            // target <- tau * target + (1 - tau) * live
  double nu = 0.01;              // backup diversity coefficient
  int n_marginal_samples = 4;
  double grad_clip = 10.0;
  double gamma_perf = 0.99;
  double perf_v_min = 0.5, perf_v_max = 1.0;
  double backup_v_min = 0.2, backup_v_max = 0.5;
  double w_max = 1.0;
};

struct Actor {
  nn::MlpParams net;
  nn::SquashedGaussianHead head;
  nn::AdamState adam;
  bool latent = false;
};

struct Critic {
  nn::MlpParams net;
  nn::AdamState adam;
  bool latent = false;
};

// Everything the dual-policy learner owns: performance SAC agent, reach-avoid
// backup agent with twin/target critics, temperatures, and the diversity
// discriminator.
struct AgentBundle {
  AgentConfig cfg;

  Actor perf_actor;
  Critic perf_critic1, perf_critic2;
  nn::MlpParams perf_target1, perf_target2;
  double log_alpha_perf = 0.0;
  nn::AdamState alpha_perf_adam;

  Actor backup_actor;
  Critic backup_critic1, backup_critic2;
  nn::MlpParams backup_target1, backup_target2;
  double log_alpha_backup = 0.0;
  nn::AdamState alpha_backup_adam;

  nn::MlpParams discriminator;
  nn::AdamState disc_adam;

  double alpha_perf() const { return std::exp(log_alpha_perf); }
  double alpha_backup() const { return std::exp(log_alpha_backup); }
};

AgentBundle make_bundle(const AgentConfig& cfg, RngStream& rng);

// --- single-observation policy evaluation (rollouts, shields) ---

env::Action perf_mean_action(const AgentBundle& b, const env::Observation& obs,
                             std::span<const double> z);
env::Action perf_sample_action(const AgentBundle& b, const env::Observation& obs,
                               std::span<const double> z, RngStream& rng);
env::Action backup_mean_action(const AgentBundle& b, const env::Observation& obs,
                               std::span<const double> z);
env::Action backup_sample_action(const AgentBundle& b, const env::Observation& obs,
                                 std::span<const double> z, RngStream& rng);

// Pessimistic backup critic value: elementwise max of the twin critics.
double backup_q(const AgentBundle& b, const env::Observation& obs, std::span<const double> z,
                const env::Action& action);

// Fixed-variance Gaussian discriminator log-likelihood log q(z | obs).
double discriminator_log_q(const AgentBundle& b, const env::Observation& obs,
                           std::span<const double> z);

// --- batched updates ---

using Batch = std::vector<const train::Transition*>;

struct CriticLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
};

// Standard SAC critic regression against min-of-twin-targets, consuming the
// proposed actions (action re-labeling).
CriticLosses perf_critic_update(AgentBundle& b, const Batch& batch,
                                const std::vector<double>& r_aug, RngStream& rng);

struct ActorUpdate {
  double loss = 0.0;
  std::vector<double> log_probs;  // per-sample, feeds the temperature update
};

ActorUpdate perf_actor_update(AgentBundle& b, const Batch& batch, RngStream& rng);

// Backup critic regression with the selected operator; consumes executed
// actions and the pessimistic max over twin targets.
CriticLosses backup_critic_update(AgentBundle& b, const Batch& batch, double gamma_b,
                                  grid::CriticMode mode, RngStream& rng);

// Cost-minimizing actor step; with latent conditioning adds the
// observation-conditional diversity terms over n_marginal_samples prior
// draws.
ActorUpdate backup_actor_update(AgentBundle& b, const Batch& batch,
                                const LatentDistribution& prior, RngStream& rng);

// One gradient step on alpha * (-log pi - target_entropy), in log space.
double temperature_update(double log_alpha, std::span<const double> log_probs,
                          double target_entropy, nn::AdamState& adam);

double discriminator_update(AgentBundle& b, const Batch& batch);

void polyak_all(AgentBundle& b);

// --- loss builders ---
// Pure tape constructions of each training loss, deterministic given their
// matrix inputs. The update functions above are thin wrappers; tests rebuild
// the same losses under parameter perturbations.

int build_critic_loss(nn::Tape& tape, nn::MlpParams& net, const nn::Mat& input,
                      const std::vector<double>& target);

struct ActorLossNodes {
  int loss = -1;
  int log_prob = -1;  // (n x 1)
};

// alpha * log pi - min_i Q_i(o, a), differentiated through the sample.
ActorLossNodes build_perf_actor_loss(nn::Tape& tape, AgentBundle& b, const nn::Mat& obs_in,
                                     const nn::Mat& noise);

// max_i Q_target_i(o, a) + alpha * log pi, plus nu-weighted
// observation-conditional diversity terms when marginal inputs are given
// (each one is obs_in with its latent columns replaced by a prior draw).
ActorLossNodes build_backup_actor_loss(nn::Tape& tape, AgentBundle& b, const nn::Mat& obs_in,
                                       const nn::Mat& noise,
                                       const std::vector<nn::Mat>& marginal_inputs);

int build_discriminator_loss(nn::Tape& tape, nn::MlpParams& disc, const nn::Mat& obs_in,
                             const nn::Mat& z);

}  // namespace saferl::agents
