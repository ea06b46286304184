#pragma once

#include <functional>
#include <optional>
#include <string>

#include "saferl/agents.hpp"
#include "saferl/env.hpp"
#include "saferl/rng.hpp"

namespace saferl::shield {

enum class ShieldMode { kOff, kValue, kOracle, kForwardSim };

std::string shield_mode_name(ShieldMode m);
ShieldMode shield_mode_from_name(const std::string& s);

struct ShieldConfig {
  ShieldMode mode = ShieldMode::kValue;
  double v_thr = -0.05;  // meters of future clearance demanded of a candidate
  double epsilon = 1.0;  // probability the shield is consulted at all

  void validate() const;
};

// Safety test for a candidate action; returns the replacement action when the
// candidate is rejected. Lets oracle- and simulator-backed discriminators
// plug into the same supervisory layer as the learned critic.
using OverrideFn =
    std::function<std::optional<env::Action>(const env::Observation&, const env::Action&)>;

struct ShieldResult {
  env::Action action;
  bool overridden = false;
};

// With probability (1 - epsilon) the candidate passes untouched; otherwise
// the mode's test runs. Off mode consumes no randomness, and neither does
// epsilon <= 0, so both produce identical trajectories under a shared seed.
ShieldResult shield_action(const ShieldConfig& cfg, const env::Observation& obs,
                           const env::Action& candidate, const OverrideFn& test, RngStream& rng);

// Value-based test from the bundle: reject iff max_i Q^b_i(o, a) > v_thr,
// replacing with the backup actor's mean action.
OverrideFn make_value_override(const agents::AgentBundle& bundle, std::vector<double> z,
                               double v_thr);

// Bernoulli(rho) selection of the backup policy during joint training.
bool mix_policy_choice(double rho, RngStream& rng);

}  // namespace saferl::shield
