#pragma once

#include <string>
#include <vector>

#include "saferl/checkpoint.hpp"
#include "saferl/pacbayes.hpp"
#include "saferl/run_config.hpp"
#include "saferl/sim_stage.hpp"
#include "saferl/value_grid.hpp"

namespace saferl::pipeline {

// Artifact names are fixed within a run directory so the stages chain
// without extra flags: gen-envs writes the three environment sets, train-sim
// produces checkpoint_sim, train-lab produces checkpoint_lab, and the bound
// and verification commands read from there.
inline constexpr const char* kEnvsSim = "envs_sim.json";
inline constexpr const char* kEnvsLab = "envs_lab.json";
inline constexpr const char* kEnvsHeldout = "envs_heldout.json";
inline constexpr const char* kCheckpointSim = "checkpoint_sim.json";
inline constexpr const char* kCheckpointLab = "checkpoint_lab.json";
inline constexpr const char* kMetricsSim = "metrics_sim.csv";
inline constexpr const char* kMetricsLab = "metrics_lab.csv";
inline constexpr const char* kBoundReport = "bound_report.json";
inline constexpr const char* kVerifyReport = "verify.json";

std::string join_path(const std::string& dir, const std::string& name);
void ensure_dir(const std::string& dir);

// Fixed-order CSV: step,episode,success,violation,rho,epsilon,gamma_b,
// sum_reward,override_count,length,perf_critic_loss,perf_actor_loss,
// backup_critic_loss,backup_actor_loss,disc_loss,kl_estimate
std::string metrics_to_csv(const train::StageMetrics& metrics);

std::vector<std::string> cmd_gen_envs(const io::RunConfig& cfg);
std::vector<std::string> cmd_train_sim(const io::RunConfig& cfg);
std::vector<std::string> cmd_train_lab(const io::RunConfig& cfg);
std::vector<std::string> cmd_bound(const io::RunConfig& cfg);
std::vector<std::string> cmd_verify(const io::RunConfig& cfg);
std::vector<std::string> cmd_oracle(const io::RunConfig& cfg, int env_id);
std::vector<std::string> cmd_baseline(io::RunConfig cfg, const std::string& variant);

// Applies a baseline variant's switches onto a config.
void apply_baseline_variant(io::RunConfig& cfg, const std::string& variant);

struct OracleAgreement {
  int n_states = 0;
  double sign_agreement = 0.0;
  int critic_flagged = 0;  // learned critic above the flag threshold
  int oracle_flagged = 0;  // tabular value above the flag threshold
};

// Samples collision-free states and compares the learned backup critic (at
// the backup actor's action) against the tabular value, both for sign and
// for unsafe-flag counts at `flag_thr`.
OracleAgreement critic_oracle_agreement(const env::EnvironmentSpec& e,
                                        const grid::ValueGrid& oracle,
                                        const agents::AgentBundle& bundle,
                                        std::span<const double> z, int n_states,
                                        double flag_thr, RngStream& rng);

}  // namespace saferl::pipeline
