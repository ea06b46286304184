#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace saferl::train {

// Annealing of the three joint-training knobs: the probability of sampling
// the backup policy (rho, decaying to 0), the probability of applying the
// shield (epsilon, growing to 1), and the backup discount (gamma_b, pushed
// toward its final value once per optimize phase).
struct AnnealSchedule {
  double rho_init = 1.0;
  double rho_factor = 0.5;
  long rho_period = 25000;

  double eps_init = 0.0;
  double eps_factor = 0.5;  // decay of (1 - epsilon)
  long eps_period = 50000;

  double gamma_b_init = 0.8;
  double gamma_b_final = 0.999;
  double gamma_b_approach = 0.9;  // 1 - gamma shrinks by this per optimize phase

  void validate() const {
    if (rho_factor < 0.0 || rho_factor > 1.0 || eps_factor < 0.0 || eps_factor > 1.0 ||
        gamma_b_approach < 0.0 || gamma_b_approach > 1.0)
      throw std::invalid_argument("anneal factors must lie in [0, 1]");
    if (rho_period <= 0 || eps_period <= 0)
      throw std::invalid_argument("anneal periods must be positive");
    if (gamma_b_final < gamma_b_init)
      throw std::invalid_argument("gamma_b_final must be >= gamma_b_init");
  }

  double rho_at(long step) const {
    return rho_init * std::pow(rho_factor, static_cast<double>(step / rho_period));
  }

  double eps_at(long step) const {
    return 1.0 - (1.0 - eps_init) * std::pow(eps_factor, static_cast<double>(step / eps_period));
  }

  double gamma_b_next(double current) const {
    return std::min(gamma_b_final, 1.0 - gamma_b_approach * (1.0 - current));
  }
};

}  // namespace saferl::train
