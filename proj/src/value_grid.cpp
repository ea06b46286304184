#include "saferl/value_grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace saferl::grid {

std::string critic_mode_name(CriticMode m) {
  switch (m) {
    case CriticMode::kAvoid: return "avoid";
    case CriticMode::kReachAvoid: return "reach_avoid";
    case CriticMode::kRisk: return "risk";
  }
  return "avoid";
}

CriticMode critic_mode_from_name(const std::string& s) {
  if (s == "avoid") return CriticMode::kAvoid;
  if (s == "reach_avoid") return CriticMode::kReachAvoid;
  if (s == "risk") return CriticMode::kRisk;
  throw std::invalid_argument("unknown critic mode: " + s);
}

double ValueGrid::value_at(double x, double y, double theta) const {
  const double cx = std::clamp(x, 0.0, side);
  const double cy = std::clamp(y, 0.0, side);
  const double hx = cx / side * (nx - 1);
  const double hy = cy / side * (ny - 1);
  const double twopi = 6.283185307179586;
  double ht = (theta + 3.141592653589793) / (twopi / ntheta);
  ht = std::fmod(ht, static_cast<double>(ntheta));
  if (ht < 0.0) ht += ntheta;

  const int ix0 = std::min(static_cast<int>(hx), nx - 2);
  const int iy0 = std::min(static_cast<int>(hy), ny - 2);
  const int it0 = std::min(static_cast<int>(ht), ntheta - 1);
  const int it1 = (it0 + 1) % ntheta;
  const double fx = hx - ix0, fy = hy - iy0, ft = ht - it0;

  double acc = 0.0;
  for (int dx = 0; dx <= 1; ++dx) {
    const double wx = dx ? fx : 1.0 - fx;
    for (int dy = 0; dy <= 1; ++dy) {
      const double wy = dy ? fy : 1.0 - fy;
      const double w2 = wx * wy;
      acc += w2 * (1.0 - ft) * values[index(ix0 + dx, iy0 + dy, it0)];
      acc += w2 * ft * values[index(ix0 + dx, iy0 + dy, it1)];
    }
  }
  return acc;
}

namespace {

// Per (node, action) interpolation stencil; idx[0] < 0 marks an out-of-room
// transition whose lookup value is frozen in w[0].
struct Stencil {
  std::array<int, 8> idx;
  std::array<float, 8> w;
};

std::vector<env::Action> build_actions(const GridConfig& cfg) {
  std::vector<env::Action> actions;
  actions.reserve(cfg.v_count * cfg.w_count);
  for (int i = 0; i < cfg.v_count; ++i) {
    const double v = cfg.v_count == 1
                         ? cfg.v_min
                         : cfg.v_min + (cfg.v_max - cfg.v_min) * i / (cfg.v_count - 1);
    for (int j = 0; j < cfg.w_count; ++j) {
      const double w = cfg.w_count == 1 ? 0.0 : -1.0 + 2.0 * j / (cfg.w_count - 1);
      actions.push_back({v, w});
    }
  }
  return actions;
}

class Solver {
 public:
  Solver(const env::EnvironmentSpec& e, const GridConfig& cfg, double gamma, CriticMode mode)
      : e_(e), cfg_(cfg), mode_(mode) {
    grid_.nx = cfg.nx;
    grid_.ny = cfg.ny;
    grid_.ntheta = cfg.ntheta;
    grid_.side = e.side();
    grid_.gamma = gamma;
    grid_.mode = mode;
    grid_.actions = build_actions(cfg);
    const int n = cfg.nx * cfg.ny * cfg.ntheta;
    grid_.values.assign(n, 0.0);
    g_.assign(n, 0.0);
    l_.assign(n, 0.0);
    terminal_.assign(n, 0);
  }

  ValueGrid solve() {
    init_margins();
    build_stencils();
    const double gamma = grid_.gamma;
    // In-place sweeps in a fixed order keep the per-sweep contraction bound.
    for (int sweep = 0; sweep < cfg_.max_sweeps; ++sweep) {
      double residual = 0.0;
      const int n = static_cast<int>(grid_.values.size());
      const int na = static_cast<int>(grid_.actions.size());
      for (int node = 0; node < n; ++node) {
        if (terminal_[node]) continue;
        double best = std::numeric_limits<double>::infinity();
        const Stencil* st = &stencils_[static_cast<std::size_t>(node) * na];
        for (int a = 0; a < na; ++a, ++st) {
          double v;
          if (st->idx[0] < 0) {
            v = st->w[0];
          } else {
            v = 0.0;
            for (int c = 0; c < 8; ++c) v += st->w[c] * grid_.values[st->idx[c]];
          }
          if (v < best) best = v;
        }
        double updated = 0.0;
        switch (mode_) {
          case CriticMode::kAvoid: updated = dsbe_backup(g_[node], best, gamma); break;
          case CriticMode::kReachAvoid:
            updated = reach_avoid_backup(l_[node], g_[node], best, gamma);
            break;
          case CriticMode::kRisk: updated = risk_backup(false, best, gamma); break;
        }
        residual = std::max(residual, std::abs(updated - grid_.values[node]));
        grid_.values[node] = updated;
      }
      grid_.residual = residual;
      grid_.residual_history.push_back(residual);
      grid_.sweeps = sweep + 1;
      if (residual <= cfg_.tol) {
        grid_.converged = true;
        break;
      }
    }
    return std::move(grid_);
  }

 private:
  void init_margins() {
    for (int ix = 0; ix < cfg_.nx; ++ix) {
      for (int iy = 0; iy < cfg_.ny; ++iy) {
        for (int it = 0; it < cfg_.ntheta; ++it) {
          const int node = grid_.index(ix, iy, it);
          env::RobotState s{grid_.x_at(ix), grid_.y_at(iy), grid_.theta_at(it)};
          const double g = env::safety_margin(e_, s);
          const double l = env::target_margin(e_, s);
          g_[node] = g;
          l_[node] = l;
          switch (mode_) {
            case CriticMode::kAvoid:
              terminal_[node] = g >= 0.0;
              grid_.values[node] = g;
              break;
            case CriticMode::kReachAvoid:
              terminal_[node] = g >= 0.0 || l <= 0.0;
              grid_.values[node] = std::max(l, g);
              break;
            case CriticMode::kRisk:
              terminal_[node] = g >= 0.0;
              grid_.values[node] = g >= 0.0 ? 1.0 : 0.0;
              break;
          }
        }
      }
    }
  }

  void build_stencils() {
    const int na = static_cast<int>(grid_.actions.size());
    stencils_.resize(grid_.values.size() * na);
    const double side = grid_.side;
    for (int ix = 0; ix < cfg_.nx; ++ix) {
      for (int iy = 0; iy < cfg_.ny; ++iy) {
        for (int it = 0; it < cfg_.ntheta; ++it) {
          const int node = grid_.index(ix, iy, it);
          if (terminal_[node]) continue;
          const double x = grid_.x_at(ix), y = grid_.y_at(iy), th = grid_.theta_at(it);
          for (int a = 0; a < na; ++a) {
            const auto& act = grid_.actions[a];
            const double nx2 = x + act.v * std::cos(th) * env::kDt;
            const double ny2 = y + act.v * std::sin(th) * env::kDt;
            const double nt2 = env::wrap_angle(th + act.w * env::kDt);
            Stencil& st = stencils_[static_cast<std::size_t>(node) * na + a];
            if (nx2 < 0.0 || nx2 > side || ny2 < 0.0 || ny2 > side) {
              env::RobotState cs{std::clamp(nx2, 0.0, side), std::clamp(ny2, 0.0, side), nt2};
              double frozen = env::safety_margin(e_, cs);
              if (mode_ == CriticMode::kRisk) frozen = 1.0;
              st.idx[0] = -1;
              st.w[0] = static_cast<float>(frozen);
              continue;
            }
            fill_interp(st, nx2, ny2, nt2);
          }
        }
      }
    }
  }

  void fill_interp(Stencil& st, double x, double y, double theta) {
    const double hx = x / grid_.side * (cfg_.nx - 1);
    const double hy = y / grid_.side * (cfg_.ny - 1);
    double ht = (theta + 3.141592653589793) / (6.283185307179586 / cfg_.ntheta);
    ht = std::fmod(ht, static_cast<double>(cfg_.ntheta));
    if (ht < 0.0) ht += cfg_.ntheta;
    const int ix0 = std::min(static_cast<int>(hx), cfg_.nx - 2);
    const int iy0 = std::min(static_cast<int>(hy), cfg_.ny - 2);
    const int it0 = std::min(static_cast<int>(ht), cfg_.ntheta - 1);
    const int it1 = (it0 + 1) % cfg_.ntheta;
    const double fx = hx - ix0, fy = hy - iy0, ft = ht - it0;
    int c = 0;
    for (int dx = 0; dx <= 1; ++dx) {
      const double wx = dx ? fx : 1.0 - fx;
      for (int dy = 0; dy <= 1; ++dy) {
        const double wy = dy ? fy : 1.0 - fy;
        st.idx[c] = grid_.index(ix0 + dx, iy0 + dy, it0);
        st.w[c] = static_cast<float>(wx * wy * (1.0 - ft));
        st.idx[c + 1] = grid_.index(ix0 + dx, iy0 + dy, it1);
        st.w[c + 1] = static_cast<float>(wx * wy * ft);
        c += 2;
      }
    }
  }

  const env::EnvironmentSpec& e_;
  GridConfig cfg_;
  CriticMode mode_;
  ValueGrid grid_;
  std::vector<double> g_;
  std::vector<double> l_;
  std::vector<char> terminal_;
  std::vector<Stencil> stencils_;
};

double lookahead_value(const ValueGrid& grid, const env::RobotState& s, const env::Action& a) {
  const double x = s.x + a.v * std::cos(s.theta) * env::kDt;
  const double y = s.y + a.v * std::sin(s.theta) * env::kDt;
  const double t = env::wrap_angle(s.theta + a.w * env::kDt);
  return grid.value_at(x, y, t);
}

}  // namespace

std::vector<env::Action> grid_action_set(const GridConfig& cfg) { return build_actions(cfg); }

ValueGrid solve_avoid(const env::EnvironmentSpec& e, const GridConfig& cfg, double gamma) {
  if (gamma >= 1.0) throw std::invalid_argument("gamma must be < 1");
  return Solver(e, cfg, gamma, CriticMode::kAvoid).solve();
}

ValueGrid solve_reach_avoid(const env::EnvironmentSpec& e, const GridConfig& cfg, double gamma) {
  if (gamma >= 1.0) throw std::invalid_argument("gamma must be < 1");
  return Solver(e, cfg, gamma, CriticMode::kReachAvoid).solve();
}

ValueGrid solve_risk(const env::EnvironmentSpec& e, const GridConfig& cfg, double gamma) {
  if (gamma >= 1.0) throw std::invalid_argument("gamma must be < 1");
  return Solver(e, cfg, gamma, CriticMode::kRisk).solve();
}

ShieldDecision oracle_shield(const ValueGrid& grid, const env::RobotState& state,
                             const env::Action& candidate, double v_thr) {
  ShieldDecision d;
  if (lookahead_value(grid, state, candidate) <= v_thr) return d;
  d.accept = false;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& a : grid.actions) {
    const double v = lookahead_value(grid, state, a);
    if (v < best) {
      best = v;
      d.override_action = a;
    }
  }
  return d;
}

ShieldDecision forward_sim_shield(const env::EnvironmentSpec& e, const env::RobotState& state,
                                  const env::Action& candidate, const ActionFn& backup_policy,
                                  int horizon) {
  ShieldDecision d;
  env::StepResult res = env::step(e, state, candidate);
  bool safe = res.g_margin < 0.0;
  for (int t = 0; safe && t < horizon; ++t) {
    const env::Action a = backup_policy(res.observation);
    res = env::step(e, res.next_state, a);
    safe = res.g_margin < 0.0;
  }
  if (safe) return d;
  d.accept = false;
  d.override_action = backup_policy(env::observe(e, state));
  return d;
}

std::string grid_to_json(const ValueGrid& grid) {
  nlohmann::json j;
  j["nx"] = grid.nx;
  j["ny"] = grid.ny;
  j["ntheta"] = grid.ntheta;
  j["side"] = grid.side;
  j["gamma"] = grid.gamma;
  j["mode"] = critic_mode_name(grid.mode);
  j["converged"] = grid.converged;
  j["sweeps"] = grid.sweeps;
  j["residual"] = grid.residual;
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& a : grid.actions) actions.push_back({{"v", a.v}, {"w", a.w}});
  j["actions"] = actions;
  j["values"] = grid.values;  // row-major over (x, y, theta)
  return j.dump();
}

void save_grid(const ValueGrid& grid, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << grid_to_json(grid) << '\n';
}

}  // namespace saferl::grid
