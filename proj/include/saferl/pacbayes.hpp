#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saferl/agents.hpp"
#include "saferl/env.hpp"

namespace saferl::pacbayes {

struct EvalConfig {
  int max_steps = 200;
  bool shield = true;    // value shielding active in deployment mode
  double v_thr = -0.05;
  int n_threads = 2;
  int chunk = 64;  // episodes evaluated in lockstep per batch
};

// Binary outcome matrix over (environment x latent) cells, env-major.
struct EmpiricalEstimate {
  long n_envs = 0;
  long n_latents = 0;
  double success_rate = 0.0;
  double safety_rate = 0.0;
  std::vector<std::uint8_t> success;
  std::vector<std::uint8_t> safety;
};

// Deterministic deployment rollouts (mean actions, shield per config) over
// every (environment, latent sample) pair. Latents are drawn from P up
// front; the matrix fills in parallel.
EmpiricalEstimate estimate_empirical(const std::vector<env::EnvironmentSpec>& envs,
                                     const agents::AgentBundle& bundle,
                                     const agents::LatentDistribution& p, long n_latents,
                                     RngStream& rng, const EvalConfig& cfg);

// Bernoulli KL divergence with the 0 log 0 = 0 convention.
double kl_bernoulli(double p, double q);

// Smallest q in [0, 1] with KL(p || q) <= c, by bisection to 1e-9.
double klinv_lower(double p, double c);

// (KL(P||P0) + log(2 sqrt(N) / delta)) / (2N).
double regularizer(double kl, long n_envs, double delta_pac);

struct BoundReport {
  std::string metric;  // "success" or "safety"
  long n_envs = 0;
  long n_latents = 0;
  double delta = 0.0;
  double kl_posterior_prior = 0.0;
  double r_hat = 0.0;        // empirical mean over the outcome matrix
  double r_bar = 0.0;        // after the sample-convergence correction
  double bound_sqrt = 0.0;   // sqrt-regularizer form, clipped at 0
  double bound_klinv = 0.0;  // KL-inverse form; never below bound_sqrt
};

// Splits delta evenly between the sample-convergence and PAC events, applies
// the KL-inverse correction for L sampled latents, then both bound forms.
BoundReport compute_bound(const std::string& metric, double r_hat, double kl, long n_envs,
                          long n_latents, double delta);

std::string bound_reports_to_json(const std::vector<BoundReport>& reports);

}  // namespace saferl::pacbayes
