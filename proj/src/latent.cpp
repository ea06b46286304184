#include "saferl/latent.hpp"

#include <cmath>
#include <stdexcept>

namespace saferl::agents {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;
}

double latent_log_density(const LatentDistribution& dist, const std::vector<double>& z) {
  if (z.size() != dist.mu.size()) throw std::invalid_argument("latent dimension mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double s = dist.sigma[i];
    const double u = (z[i] - dist.mu[i]) / s;
    lp += -0.5 * u * u - std::log(s) - kHalfLog2Pi;
  }
  return lp;
}

double kl_diag_gaussians(const LatentDistribution& p, const LatentDistribution& p0) {
  if (p.mu.size() != p0.mu.size()) throw std::invalid_argument("latent dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    const double s = p.sigma[i], s0 = p0.sigma[i];
    const double dmu = p.mu[i] - p0.mu[i];
    kl += std::log(s0 / s) + (s * s + dmu * dmu) / (2.0 * s0 * s0) - 0.5;
  }
  return kl;
}

LatentSample sample_latent(const LatentDistribution& dist, RngStream& rng) {
  LatentSample s;
  s.z.resize(dist.mu.size());
  s.xi.resize(dist.mu.size());
  for (std::size_t i = 0; i < dist.mu.size(); ++i) {
    s.xi[i] = rng.normal();
    s.z[i] = dist.mu[i] + dist.sigma[i] * s.xi[i];
  }
  return s;
}

}  // namespace saferl::agents
