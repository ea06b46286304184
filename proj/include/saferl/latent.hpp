#pragma once

#include <vector>

#include "saferl/rng.hpp"

namespace saferl::agents {

// Diagonal Gaussian over policy latents; the object the generalization
// bound certifies.
struct LatentDistribution {
  std::vector<double> mu;
  std::vector<double> sigma;

  int dim() const { return static_cast<int>(mu.size()); }

  static LatentDistribution isotropic(int n_z, double stddev) {
    LatentDistribution d;
    d.mu.assign(n_z, 0.0);
    d.sigma.assign(n_z, stddev);
    return d;
  }
};

// Exact diagonal-Gaussian log density.
double latent_log_density(const LatentDistribution& dist, const std::vector<double>& z);

// KL(p || p0) in closed form; requires matching dimensions and positive sigmas.
double kl_diag_gaussians(const LatentDistribution& p, const LatentDistribution& p0);

// z = mu + sigma * xi with xi ~ N(0, I); xi returned for reparameterized reuse.
struct LatentSample {
  std::vector<double> z;
  std::vector<double> xi;
};
LatentSample sample_latent(const LatentDistribution& dist, RngStream& rng);

}  // namespace saferl::agents
