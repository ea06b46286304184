#pragma once

#include <string>

#include "saferl/agents.hpp"

namespace saferl::io {

// Serialized training state: agent architecture plus all parameter arrays,
// temperatures, both latent distributions, the anneal cursor, and the RNG
// stream. Save/load round-trips are bit-identical.
struct Checkpoint {
  int version = 1;
  std::string config_hash;
  agents::AgentBundle bundle;
  agents::LatentDistribution prior;
  agents::LatentDistribution posterior;
  long steps_completed = 0;
  double gamma_b = 0.0;
  std::string rng_state;
};

std::string checkpoint_to_json(const Checkpoint& cp);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace saferl::io
