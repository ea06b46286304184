#pragma once

#include <vector>

#include "saferl/agents.hpp"
#include "saferl/env.hpp"
#include "saferl/replay.hpp"
#include "saferl/schedule.hpp"
#include "saferl/shield.hpp"

namespace saferl::train {

// Per-episode metrics row; losses echo the running means of the most recent
// optimize phase.
struct EpisodeRow {
  long step = 0;
  long episode = 0;
  bool success = false;
  bool violation = false;
  double rho = 0.0;
  double epsilon = 0.0;
  double gamma_b = 0.0;
  double sum_reward = 0.0;
  int override_count = 0;
  int length = 0;
  double perf_critic_loss = 0.0;
  double perf_actor_loss = 0.0;
  double backup_critic_loss = 0.0;
  double backup_actor_loss = 0.0;
  double disc_loss = 0.0;
  double kl_estimate = 0.0;  // posterior-to-prior KL; zero during the first stage
};

struct StageMetrics {
  std::vector<EpisodeRow> episodes;
  long total_steps = 0;
  long violations = 0;
};

// Safety violations per collected episode.
double violation_ratio(const StageMetrics& metrics);

struct SimConfig {
  long num_steps = 150000;
  long optimize_freq = 2000;
  int updates_per_optimize = 1000;
  int batch_size = 128;
  std::size_t buffer_capacity = 50000;
  int max_episode_steps = 200;
  double beta = 2.0;            // mutual-information reward coefficient
  double lambda_penalty = 0.0;  // reward-penalty baselines subtract this on violations
  bool train_backup = true;
  grid::CriticMode backup_mode = grid::CriticMode::kAvoid;
  shield::ShieldMode shield_mode = shield::ShieldMode::kValue;
  double v_thr = -0.05;
  int forward_sim_horizon = 30;  // steps of backup rollout for the simulator shield
  // Episodes restart from uniform collision-free poses, covering the state
  // space the way the constraint-set resets in off-policy training do;
  // deployment rollouts always start from the spec pose.
  bool random_resets = true;
  double reset_clearance = 0.1;
  AnnealSchedule anneal;
};

// Mutual-information-augmented reward, recomputed from the live
// discriminator when a transition is sampled. With beta == 0 the stored
// reward (minus any violation penalty) passes through bitwise.
double reward_augment(const Transition& t, const agents::AgentBundle& bundle, double beta,
                      double lambda_penalty, const agents::LatentDistribution& prior);

// Joint training of the performance and backup agents against a fixed prior
// latent distribution: rho-mixed exploration, epsilon-gated shielding,
// shared replay, and annealed backup discount. Deterministic in (config,
// seed).
StageMetrics train_sim(const std::vector<env::EnvironmentSpec>& env_set,
                       agents::AgentBundle& bundle, const agents::LatentDistribution& prior,
                       const SimConfig& cfg, RngStream& rng,
                       ReplayBuffer* external_buffer = nullptr);

}  // namespace saferl::train
