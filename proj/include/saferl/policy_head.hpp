#pragma once

#include <vector>

#include "saferl/mat.hpp"
#include "saferl/tape.hpp"

namespace saferl::nn {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

// Tanh-squashed diagonal Gaussian over a box of actions. The trunk network
// emits [mean, log_std] (2 * dim columns); log_std is clamped before use.
struct SquashedGaussianHead {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double center(int i) const { return 0.5 * (lo[i] + hi[i]); }
  double half(int i) const { return 0.5 * (hi[i] - lo[i]); }
};

struct HeadSampleNodes {
  int action;    // (n x dim), within [lo, hi]
  int log_prob;  // (n x 1), includes tanh and scaling corrections
  int raw;       // pre-tanh sample, needed for density under other latents
};

// Reparameterized sample a = center + half * tanh(mean + sigma * noise).
HeadSampleNodes head_sample(Tape& tape, int trunk_out, const SquashedGaussianHead& head,
                            const Mat& noise);

// Log-density of an existing pre-tanh sample under this trunk's Gaussian,
// with the same squashing corrections applied (n x 1).
int head_log_prob_of_raw(Tape& tape, int trunk_out, const SquashedGaussianHead& head, int raw);

// Deterministic (mean) action node, for losses that differentiate through
// the deployment-mode policy.
int head_mean(Tape& tape, int trunk_out, const SquashedGaussianHead& head);

// Gradient-free versions for rollouts and target computation.
struct HeadSampleBatch {
  Mat action;
  Mat raw;
  std::vector<double> log_prob;
};

HeadSampleBatch head_sample_eval(const Mat& trunk_out, const SquashedGaussianHead& head,
                                 const Mat& noise);
Mat head_mean_eval(const Mat& trunk_out, const SquashedGaussianHead& head);

}  // namespace saferl::nn
