#include "saferl/policy_head.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace saferl::nn {

namespace {

constexpr double kLn2 = 0.6931471805599453;

// log(1 - tanh(x)^2) = 2 * (ln 2 - x - softplus(-2x)), stable for large |x|.
int log_one_minus_tanh_sq(Tape& t, int raw) {
  int sp = t.softplus(t.mul_const(raw, -2.0));
  return t.mul_const(t.add_const(t.neg(t.add(raw, sp)), kLn2), 2.0);
}

double log_one_minus_tanh_sq(double x) {
  const double sp = x * -2.0 > 30.0 ? x * -2.0 : std::log1p(std::exp(-2.0 * x));
  return 2.0 * (kLn2 - x - sp);
}

}  // namespace

HeadSampleNodes head_sample(Tape& t, int trunk_out, const SquashedGaussianHead& head,
                            const Mat& noise) {
  const int d = head.dim();
  assert(t.value(trunk_out).cols == 2 * d);
  assert(noise.cols == d && noise.rows == t.value(trunk_out).rows);

  int mean = t.slice_cols(trunk_out, 0, d);
  int log_std = t.clamp(t.slice_cols(trunk_out, d, 2 * d), kLogStdMin, kLogStdMax);
  int sigma = t.exp_(log_std);
  int xi = t.constant(noise);
  int raw = t.add(mean, t.mul(sigma, xi));
  int squashed = t.tanh_(raw);

  Mat half_row(1, d), center_row(1, d), log_half(noise.rows, d);
  for (int j = 0; j < d; ++j) {
    half_row(0, j) = head.half(j);
    center_row(0, j) = head.center(j);
  }
  for (int i = 0; i < noise.rows; ++i)
    for (int j = 0; j < d; ++j) log_half(i, j) = std::log(head.half(j));
  int action = t.brow_add(t.constant(center_row), t.brow_mul(t.constant(half_row), squashed));

  // log N(raw; mean, sigma) at the reparameterized point reduces to
  // -0.5*xi^2 - log sigma - 0.5*ln(2*pi) per dimension.
  int base = t.add_const(t.neg(t.add(t.mul_const(t.square(xi), 0.5), log_std)), -kHalfLog2Pi);
  int corr = t.add(log_one_minus_tanh_sq(t, raw), t.constant(log_half));
  int log_prob = t.rowsum(t.sub(base, corr));

  return {action, log_prob, raw};
}

int head_log_prob_of_raw(Tape& t, int trunk_out, const SquashedGaussianHead& head, int raw) {
  const int d = head.dim();
  assert(t.value(trunk_out).cols == 2 * d);
  const int rows = t.value(raw).rows;

  int mean = t.slice_cols(trunk_out, 0, d);
  int log_std = t.clamp(t.slice_cols(trunk_out, d, 2 * d), kLogStdMin, kLogStdMax);
  int sigma = t.exp_(log_std);
  int zscore = t.div(t.sub(raw, mean), sigma);
  int base = t.add_const(t.neg(t.add(t.mul_const(t.square(zscore), 0.5), log_std)),
                         -kHalfLog2Pi);

  Mat log_half(rows, d);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < d; ++j) log_half(i, j) = std::log(head.half(j));
  int corr = t.add(log_one_minus_tanh_sq(t, raw), t.constant(log_half));
  return t.rowsum(t.sub(base, corr));
}

int head_mean(Tape& t, int trunk_out, const SquashedGaussianHead& head) {
  const int d = head.dim();
  int squashed = t.tanh_(t.slice_cols(trunk_out, 0, d));
  Mat half_row(1, d), center_row(1, d);
  for (int j = 0; j < d; ++j) {
    half_row(0, j) = head.half(j);
    center_row(0, j) = head.center(j);
  }
  return t.brow_add(t.constant(center_row), t.brow_mul(t.constant(half_row), squashed));
}

HeadSampleBatch head_sample_eval(const Mat& trunk_out, const SquashedGaussianHead& head,
                                 const Mat& noise) {
  const int d = head.dim();
  const int n = trunk_out.rows;
  HeadSampleBatch out;
  out.action = Mat(n, d);
  out.raw = Mat(n, d);
  out.log_prob.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double lp = 0.0;
    for (int j = 0; j < d; ++j) {
      const double mean = trunk_out(i, j);
      double log_std = trunk_out(i, d + j);
      log_std = log_std < kLogStdMin ? kLogStdMin : (log_std > kLogStdMax ? kLogStdMax : log_std);
      const double sigma = std::exp(log_std);
      const double xi = noise(i, j);
      const double raw = mean + sigma * xi;
      out.raw(i, j) = raw;
      out.action(i, j) =
          std::clamp(head.center(j) + head.half(j) * std::tanh(raw), head.lo[j], head.hi[j]);
      lp += -0.5 * xi * xi - log_std - kHalfLog2Pi;
      lp -= log_one_minus_tanh_sq(raw) + std::log(head.half(j));
    }
    out.log_prob[i] = lp;
  }
  return out;
}

Mat head_mean_eval(const Mat& trunk_out, const SquashedGaussianHead& head) {
  const int d = head.dim();
  Mat action(trunk_out.rows, d);
  for (int i = 0; i < trunk_out.rows; ++i)
    for (int j = 0; j < d; ++j)
      action(i, j) =
          std::clamp(head.center(j) + head.half(j) * std::tanh(trunk_out(i, j)), head.lo[j],
                     head.hi[j]);
  return action;
}

}  // namespace saferl::nn
