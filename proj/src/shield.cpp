#include "saferl/shield.hpp"

#include <stdexcept>

namespace saferl::shield {

std::string shield_mode_name(ShieldMode m) {
  switch (m) {
    case ShieldMode::kOff: return "off";
    case ShieldMode::kValue: return "value";
    case ShieldMode::kOracle: return "oracle";
    case ShieldMode::kForwardSim: return "forward_sim";
  }
  return "off";
}

ShieldMode shield_mode_from_name(const std::string& s) {
  if (s == "off") return ShieldMode::kOff;
  if (s == "value") return ShieldMode::kValue;
  if (s == "oracle") return ShieldMode::kOracle;
  if (s == "forward_sim") return ShieldMode::kForwardSim;
  throw std::invalid_argument("unknown shield mode: " + s);
}

void ShieldConfig::validate() const {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("shield epsilon must lie in [0, 1]");
}

ShieldResult shield_action(const ShieldConfig& cfg, const env::Observation& obs,
                           const env::Action& candidate, const OverrideFn& test, RngStream& rng) {
  ShieldResult res{candidate, false};
  if (cfg.mode == ShieldMode::kOff || cfg.epsilon <= 0.0) return res;
  if (cfg.epsilon < 1.0 && !rng.bernoulli(cfg.epsilon)) return res;
  if (auto replacement = test(obs, candidate)) {
    res.action = *replacement;
    res.overridden = true;
  }
  return res;
}

OverrideFn make_value_override(const agents::AgentBundle& bundle, std::vector<double> z,
                               double v_thr) {
  return [&bundle, z = std::move(z), v_thr](
             const env::Observation& obs,
             const env::Action& candidate) -> std::optional<env::Action> {
    if (agents::backup_q(bundle, obs, z, candidate) <= v_thr) return std::nullopt;
    return agents::backup_mean_action(bundle, obs, z);
  };
}

bool mix_policy_choice(double rho, RngStream& rng) {
  if (rho <= 0.0) return false;
  if (rho >= 1.0) return true;
  return rng.bernoulli(rho);
}

}  // namespace saferl::shield
