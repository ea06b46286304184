#pragma once

#include <string>

#include "saferl/agents.hpp"
#include "saferl/env.hpp"
#include "saferl/lab_stage.hpp"
#include "saferl/sim_stage.hpp"
#include "saferl/value_grid.hpp"

namespace saferl::io {

struct BoundConfig {
  long n_latents = 1000;  // L policy samples per environment
  double delta = 0.01;
  int verify_latents = 20;  // per held-out environment
};

// Everything a run needs, validated up front. Unknown keys in a config file
// are rejected rather than ignored.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  env::GenConfig env_gen;
  int n_envs_sim = 100;
  int n_envs_lab = 100;
  int n_envs_heldout = 200;
  agents::AgentConfig agent;
  train::SimConfig sim;
  train::LabConfig lab;
  BoundConfig bound;
  grid::GridConfig oracle;
  double oracle_gamma = 0.999;
  int eval_threads = 2;

  void validate() const;
};

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

// Applies "a.b.c=value" onto the JSON form; value parses as JSON when it can,
// else as a string.
std::string apply_overrides(const std::string& config_json,
                            const std::vector<std::string>& overrides);

// FNV-1a 64 digest of the canonical JSON form.
std::string config_hash(const RunConfig& cfg);

}  // namespace saferl::io
