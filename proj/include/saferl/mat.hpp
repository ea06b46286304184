#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace saferl::nn {

// Dense row-major matrix of doubles. Row vectors double as 1xN matrices.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return d[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return d[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return d.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return d.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return d.size(); }
  bool empty() const { return d.empty(); }

  void fill(double v) { std::fill(d.begin(), d.end(), v); }

  static Mat full(int r, int c, double v) {
    Mat m(r, c);
    m.fill(v);
    return m;
  }
};

// C = A (m x k) * B^T, B stored (n x k). C must be preallocated m x n.
void gemm_nt(const Mat& a, const Mat& b, Mat& c);

// C += A (m x k) * B (k x n).
void gemm_nn_acc(const Mat& a, const Mat& b, Mat& c);

// C += A^T * B where A is (m x k), B is (m x n); result (k x n).
void gemm_tn_acc(const Mat& a, const Mat& b, Mat& c);

}  // namespace saferl::nn
