#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "saferl/mlp.hpp"
#include "saferl/rng.hpp"

// Test-side oracles, independent of the library's gradient path.
namespace testsupport {

// Central finite difference of a scalar-valued rebuild closure with respect
// to one coordinate of one parameter block.
inline double central_difference(const std::function<double()>& loss, double* coord,
                                 double h = 1e-5) {
  const double saved = *coord;
  *coord = saved + h;
  const double up = loss();
  *coord = saved - h;
  const double down = loss();
  *coord = saved;
  return (up - down) / (2.0 * h);
}

struct GradCheck {
  double max_rel_err = 0.0;
  int probes = 0;
};

// Compares analytic gradients (already accumulated in the blocks) against
// central differences of `loss` at `probes_per_block` random coordinates.
inline GradCheck check_gradients(std::vector<saferl::nn::ParamBlock*> blocks,
                                 const std::function<double()>& loss, int probes_per_block,
                                 saferl::RngStream& rng) {
  GradCheck out;
  for (auto* b : blocks) {
    for (int k = 0; k < probes_per_block; ++k) {
      const std::size_t i =
          static_cast<std::size_t>(rng.uniform_int(static_cast<int>(b->value.size())));
      const double analytic = b->grad.d[i];
      const double numeric = central_difference(loss, &b->value.d[i]);
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      out.max_rel_err = std::max(out.max_rel_err, std::abs(analytic - numeric) / denom);
      ++out.probes;
    }
  }
  return out;
}

// Composite Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2 == 1) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Independent KL-inverse via Newton iterations on q -> KL(p || q) - c,
// falling back to interval halving when Newton leaves the bracket.
inline double klinv_newton(double p, double c) {
  if (c <= 0.0) return p;
  if (p <= 0.0) return 0.0;
  auto kl = [&](double q) {
    double v = 0.0;
    if (p > 0.0) v += p * std::log(p / q);
    if (p < 1.0) v += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
    return v;
  };
  double lo = 1e-300, hi = p, q = 0.5 * p;
  for (int it = 0; it < 200; ++it) {
    const double fq = kl(q) - c;
    if (fq > 0.0)
      lo = q;
    else
      hi = q;
    const double dq = -p / q + (1.0 - p) / (1.0 - q);  // d KL / d q
    double next = dq != 0.0 ? q - fq / dq : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - q) < 1e-15) return next;
    q = next;
  }
  return q;
}

}  // namespace testsupport
