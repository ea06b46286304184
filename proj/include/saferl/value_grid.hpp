#pragma once

#include <functional>
#include <string>
#include <vector>

#include "saferl/env.hpp"

namespace saferl::grid {

// Single-step backup arithmetic shared by the tabular solver and the learned
// critics (which apply the same operators with margins at the next state).

// Discounted safety backup: worst margin now or the best evadable future.
inline double dsbe_backup(double g, double v_next, double gamma) {
  return (1.0 - gamma) * g + gamma * std::max(g, v_next);
}

// Discounted reach-avoid backup over target margin l and safety margin g.
inline double reach_avoid_backup(double l, double g, double v_next, double gamma) {
  return gamma * std::max(std::min(v_next, l), g) + (1.0 - gamma) * std::max(l, g);
}

// Sparse-indicator risk backup; values live in [0, 1].
inline double risk_backup(bool in_failure, double v_next, double gamma) {
  return in_failure ? 1.0 : gamma * v_next;
}

enum class CriticMode { kAvoid, kReachAvoid, kRisk };

std::string critic_mode_name(CriticMode m);
CriticMode critic_mode_from_name(const std::string& s);

struct GridConfig {
  int nx = 61;
  int ny = 61;
  int ntheta = 25;
  // Action set spans the backup agent's bounds.
  int v_count = 3;
  int w_count = 7;
  double v_min = 0.2;
  double v_max = 0.5;
  double tol = 1e-4;        // sup-norm residual target, meters
  int max_sweeps = 500;
};

struct ValueGrid {
  int nx = 0, ny = 0, ntheta = 0;
  double side = 0.0;
  double gamma = 0.0;
  CriticMode mode = CriticMode::kAvoid;
  std::vector<env::Action> actions;
  std::vector<double> values;  // index (ix * ny + iy) * ntheta + it

  // Solve diagnostics.
  bool converged = false;
  int sweeps = 0;
  double residual = 0.0;
  std::vector<double> residual_history;

  int index(int ix, int iy, int it) const { return (ix * ny + iy) * ntheta + it; }
  double x_at(int ix) const { return ix * side / (nx - 1); }
  double y_at(int iy) const { return iy * side / (ny - 1); }
  double theta_at(int it) const { return -3.141592653589793 + it * 6.283185307179586 / ntheta; }

  // Trilinear value lookup with angular wrap; positions clamp to the box.
  double value_at(double x, double y, double theta) const;
};

// The discrete action lattice spanned by a grid config.
std::vector<env::Action> grid_action_set(const GridConfig& cfg);

// Fixed-point solves of the corresponding Bellman operators with multilinear
// interpolation of next-state values. States already in the failure set (and,
// for reach-avoid, in the target set) are absorbing.
ValueGrid solve_avoid(const env::EnvironmentSpec& e, const GridConfig& cfg, double gamma);
ValueGrid solve_reach_avoid(const env::EnvironmentSpec& e, const GridConfig& cfg, double gamma);
ValueGrid solve_risk(const env::EnvironmentSpec& e, const GridConfig& cfg, double gamma);

struct ShieldDecision {
  bool accept = true;
  env::Action override_action;
};

// Accepts the candidate iff the interpolated value of its successor state is
// within the threshold; otherwise proposes the action with the least
// (safest) one-step lookahead value.
ShieldDecision oracle_shield(const ValueGrid& grid, const env::RobotState& state,
                             const env::Action& candidate, double v_thr);

using ActionFn = std::function<env::Action(const env::Observation&)>;

// Applies the candidate once, then the backup policy for `horizon` steps;
// accepts iff no visited state enters the failure set.
ShieldDecision forward_sim_shield(const env::EnvironmentSpec& e, const env::RobotState& state,
                                  const env::Action& candidate, const ActionFn& backup_policy,
                                  int horizon);

std::string grid_to_json(const ValueGrid& grid);
void save_grid(const ValueGrid& grid, const std::string& path);

}  // namespace saferl::grid
