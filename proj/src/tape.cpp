#include "saferl/tape.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace saferl::nn {

namespace {

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::g(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Mat(n.val.rows, n.val.cols);
  return n.grad;
}

int Tape::constant(Mat v) {
  Node n;
  n.op = Op::kConst;
  n.val = std::move(v);
  return push(std::move(n));
}

int Tape::param(ParamBlock* pb) {
  Node n;
  n.op = Op::kParam;
  n.pw = pb;
  n.val = pb->value;
  n.needs_grad = pb->requires_grad;
  return push(std::move(n));
}

int Tape::linear(int x, ParamBlock* w, ParamBlock* b) {
  const Mat& xv = nodes_[x].val;
  assert(xv.cols == w->value.cols && b->value.cols == w->value.rows);
  Node n;
  n.op = Op::kLinear;
  n.a = x;
  n.pw = w;
  n.pb = b;
  n.val = Mat(xv.rows, w->value.rows);
  gemm_nt(xv, w->value, n.val);
  for (int i = 0; i < n.val.rows; ++i) {
    double* ri = n.val.row(i);
    const double* bv = b->value.row(0);
    for (int j = 0; j < n.val.cols; ++j) ri[j] += bv[j];
  }
  n.needs_grad = needs(x) || w->requires_grad || b->requires_grad;
  return push(std::move(n));
}

#define UNARY_BODY(expr)                                    \
  const Mat& av = nodes_[a].val;                            \
  Node n;                                                   \
  n.a = a;                                                  \
  n.val = Mat(av.rows, av.cols);                            \
  for (std::size_t i = 0; i < av.size(); ++i) {             \
    const double x = av.d[i];                               \
    n.val.d[i] = (expr);                                    \
  }                                                         \
  n.needs_grad = needs(a);

int Tape::relu(int a) {
  UNARY_BODY(x > 0.0 ? x : 0.0)
  n.op = Op::kRelu;
  return push(std::move(n));
}

int Tape::tanh_(int a) {
  UNARY_BODY(std::tanh(x))
  n.op = Op::kTanh;
  return push(std::move(n));
}

int Tape::softplus(int a) {
  UNARY_BODY(stable_softplus(x))
  n.op = Op::kSoftplus;
  return push(std::move(n));
}

int Tape::exp_(int a) {
  UNARY_BODY(std::exp(x))
  n.op = Op::kExp;
  return push(std::move(n));
}

int Tape::log_(int a) {
  UNARY_BODY(std::log(x))
  n.op = Op::kLog;
  return push(std::move(n));
}

int Tape::square(int a) {
  UNARY_BODY(x * x)
  n.op = Op::kSquare;
  return push(std::move(n));
}

int Tape::neg(int a) {
  UNARY_BODY(-x)
  n.op = Op::kNeg;
  return push(std::move(n));
}

#undef UNARY_BODY

#define BINARY_BODY(expr)                                   \
  const Mat& av = nodes_[a].val;                            \
  const Mat& bv = nodes_[b].val;                            \
  assert(av.rows == bv.rows && av.cols == bv.cols);         \
  Node n;                                                   \
  n.a = a;                                                  \
  n.b = b;                                                  \
  n.val = Mat(av.rows, av.cols);                            \
  for (std::size_t i = 0; i < av.size(); ++i) {             \
    const double x = av.d[i];                               \
    const double y = bv.d[i];                               \
    n.val.d[i] = (expr);                                    \
  }                                                         \
  n.needs_grad = needs(a) || needs(b);

int Tape::add(int a, int b) {
  BINARY_BODY(x + y)
  n.op = Op::kAdd;
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  BINARY_BODY(x - y)
  n.op = Op::kSub;
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  BINARY_BODY(x * y)
  n.op = Op::kMul;
  return push(std::move(n));
}

int Tape::div(int a, int b) {
  BINARY_BODY(x / y)
  n.op = Op::kDiv;
  return push(std::move(n));
}

int Tape::min2(int a, int b) {
  BINARY_BODY(x <= y ? x : y)
  n.op = Op::kMin2;
  return push(std::move(n));
}

int Tape::max2(int a, int b) {
  BINARY_BODY(x >= y ? x : y)
  n.op = Op::kMax2;
  return push(std::move(n));
}

int Tape::lse2(int a, int b) {
  BINARY_BODY(x >= y ? x + std::log1p(std::exp(y - x)) : y + std::log1p(std::exp(x - y)))
  n.op = Op::kLse2;
  return push(std::move(n));
}

#undef BINARY_BODY

int Tape::add_const(int a, double c) {
  const Mat& av = nodes_[a].val;
  Node n;
  n.op = Op::kAddC;
  n.a = a;
  n.c0 = c;
  n.val = Mat(av.rows, av.cols);
  for (std::size_t i = 0; i < av.size(); ++i) n.val.d[i] = av.d[i] + c;
  n.needs_grad = needs(a);
  return push(std::move(n));
}

int Tape::mul_const(int a, double c) {
  const Mat& av = nodes_[a].val;
  Node n;
  n.op = Op::kMulC;
  n.a = a;
  n.c0 = c;
  n.val = Mat(av.rows, av.cols);
  for (std::size_t i = 0; i < av.size(); ++i) n.val.d[i] = av.d[i] * c;
  n.needs_grad = needs(a);
  return push(std::move(n));
}

int Tape::clamp(int a, double lo, double hi) {
  const Mat& av = nodes_[a].val;
  Node n;
  n.op = Op::kClamp;
  n.a = a;
  n.c0 = lo;
  n.c1 = hi;
  n.val = Mat(av.rows, av.cols);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av.d[i];
    n.val.d[i] = x < lo ? lo : (x > hi ? hi : x);
  }
  n.needs_grad = needs(a);
  return push(std::move(n));
}

int Tape::brow_add(int a, int b) {
  const Mat& av = nodes_[a].val;
  const Mat& bv = nodes_[b].val;
  assert(av.rows == 1 && av.cols == bv.cols);
  Node n;
  n.op = Op::kBRowAdd;
  n.a = a;
  n.b = b;
  n.val = Mat(bv.rows, bv.cols);
  for (int i = 0; i < bv.rows; ++i)
    for (int j = 0; j < bv.cols; ++j) n.val(i, j) = av(0, j) + bv(i, j);
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

int Tape::brow_mul(int a, int b) {
  const Mat& av = nodes_[a].val;
  const Mat& bv = nodes_[b].val;
  assert(av.rows == 1 && av.cols == bv.cols);
  Node n;
  n.op = Op::kBRowMul;
  n.a = a;
  n.b = b;
  n.val = Mat(bv.rows, bv.cols);
  for (int i = 0; i < bv.rows; ++i)
    for (int j = 0; j < bv.cols; ++j) n.val(i, j) = av(0, j) * bv(i, j);
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

int Tape::concat_cols(int a, int b) {
  const Mat& av = nodes_[a].val;
  const Mat& bv = nodes_[b].val;
  assert(av.rows == bv.rows);
  Node n;
  n.op = Op::kConcatCols;
  n.a = a;
  n.b = b;
  n.val = Mat(av.rows, av.cols + bv.cols);
  for (int i = 0; i < av.rows; ++i) {
    double* ri = n.val.row(i);
    const double* ra = av.row(i);
    const double* rb = bv.row(i);
    for (int j = 0; j < av.cols; ++j) ri[j] = ra[j];
    for (int j = 0; j < bv.cols; ++j) ri[av.cols + j] = rb[j];
  }
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

int Tape::slice_cols(int a, int c0, int c1) {
  const Mat& av = nodes_[a].val;
  assert(0 <= c0 && c0 < c1 && c1 <= av.cols);
  Node n;
  n.op = Op::kSliceCols;
  n.a = a;
  n.i0 = c0;
  n.i1 = c1;
  n.val = Mat(av.rows, c1 - c0);
  for (int i = 0; i < av.rows; ++i)
    for (int j = c0; j < c1; ++j) n.val(i, j - c0) = av(i, j);
  n.needs_grad = needs(a);
  return push(std::move(n));
}

int Tape::rowsum(int a) {
  const Mat& av = nodes_[a].val;
  Node n;
  n.op = Op::kRowSum;
  n.a = a;
  n.val = Mat(av.rows, 1);
  for (int i = 0; i < av.rows; ++i) {
    double acc = 0.0;
    const double* ri = av.row(i);
    for (int j = 0; j < av.cols; ++j) acc += ri[j];
    n.val(i, 0) = acc;
  }
  n.needs_grad = needs(a);
  return push(std::move(n));
}

int Tape::sum_all(int a) {
  const Mat& av = nodes_[a].val;
  Node n;
  n.op = Op::kSumAll;
  n.a = a;
  n.val = Mat(1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av.d[i];
  n.val(0, 0) = acc;
  n.needs_grad = needs(a);
  return push(std::move(n));
}

int Tape::mean_all(int a) {
  const Mat& av = nodes_[a].val;
  Node n;
  n.op = Op::kMeanAll;
  n.a = a;
  n.val = Mat(1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av.d[i];
  n.val(0, 0) = acc / static_cast<double>(av.size());
  n.needs_grad = needs(a);
  return push(std::move(n));
}

void Tape::backward(int node) {
  if (nodes_[node].val.rows != 1 || nodes_[node].val.cols != 1)
    throw std::logic_error("backward() target must be a scalar node");
  g(node)(0, 0) = 1.0;

  for (int id = node; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    const Mat& go = n.grad;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        if (n.pw->requires_grad)
          for (std::size_t i = 0; i < go.size(); ++i) n.pw->grad.d[i] += go.d[i];
        break;
      case Op::kLinear: {
        if (needs(n.a)) gemm_nn_acc(go, n.pw->value, g(n.a));
        if (n.pw->requires_grad) gemm_tn_acc(go, nodes_[n.a].val, n.pw->grad);
        if (n.pb->requires_grad) {
          double* bg = n.pb->grad.row(0);
          for (int i = 0; i < go.rows; ++i) {
            const double* gi = go.row(i);
            for (int j = 0; j < go.cols; ++j) bg[j] += gi[j];
          }
        }
        break;
      }
      case Op::kRelu: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        const Mat& av = nodes_[n.a].val;
        for (std::size_t i = 0; i < go.size(); ++i)
          if (av.d[i] > 0.0) ga.d[i] += go.d[i];
        break;
      }
      case Op::kTanh: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        for (std::size_t i = 0; i < go.size(); ++i)
          ga.d[i] += go.d[i] * (1.0 - n.val.d[i] * n.val.d[i]);
        break;
      }
      case Op::kSoftplus: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        const Mat& av = nodes_[n.a].val;
        for (std::size_t i = 0; i < go.size(); ++i)
          ga.d[i] += go.d[i] / (1.0 + std::exp(-av.d[i]));
        break;
      }
      case Op::kExp: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] * n.val.d[i];
        break;
      }
      case Op::kLog: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        const Mat& av = nodes_[n.a].val;
        for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] / av.d[i];
        break;
      }
      case Op::kSquare: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        const Mat& av = nodes_[n.a].val;
        for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] * 2.0 * av.d[i];
        break;
      }
      case Op::kNeg: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] -= go.d[i];
        break;
      }
      case Op::kAdd: {
        if (needs(n.a)) {
          Mat& ga = g(n.a);
          for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i];
        }
        if (needs(n.b)) {
          Mat& gb = g(n.b);
          for (std::size_t i = 0; i < go.size(); ++i) gb.d[i] += go.d[i];
        }
        break;
      }
      case Op::kSub: {
        if (needs(n.a)) {
          Mat& ga = g(n.a);
          for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i];
        }
        if (needs(n.b)) {
          Mat& gb = g(n.b);
          for (std::size_t i = 0; i < go.size(); ++i) gb.d[i] -= go.d[i];
        }
        break;
      }
      case Op::kMul: {
        const Mat& av = nodes_[n.a].val;
        const Mat& bv = nodes_[n.b].val;
        if (needs(n.a)) {
          Mat& ga = g(n.a);
          for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] * bv.d[i];
        }
        if (needs(n.b)) {
          Mat& gb = g(n.b);
          for (std::size_t i = 0; i < go.size(); ++i) gb.d[i] += go.d[i] * av.d[i];
        }
        break;
      }
      case Op::kDiv: {
        const Mat& av = nodes_[n.a].val;
        const Mat& bv = nodes_[n.b].val;
        if (needs(n.a)) {
          Mat& ga = g(n.a);
          for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] / bv.d[i];
        }
        if (needs(n.b)) {
          Mat& gb = g(n.b);
          for (std::size_t i = 0; i < go.size(); ++i)
            gb.d[i] -= go.d[i] * av.d[i] / (bv.d[i] * bv.d[i]);
        }
        break;
      }
      case Op::kMin2:
      case Op::kMax2: {
        const Mat& av = nodes_[n.a].val;
        const Mat& bv = nodes_[n.b].val;
        const bool is_min = n.op == Op::kMin2;
        for (std::size_t i = 0; i < go.size(); ++i) {
          const bool take_a = is_min ? (av.d[i] <= bv.d[i]) : (av.d[i] >= bv.d[i]);
          if (take_a) {
            if (needs(n.a)) g(n.a).d[i] += go.d[i];
          } else {
            if (needs(n.b)) g(n.b).d[i] += go.d[i];
          }
        }
        break;
      }
      case Op::kLse2: {
        const Mat& av = nodes_[n.a].val;
        const Mat& bv = nodes_[n.b].val;
        for (std::size_t i = 0; i < go.size(); ++i) {
          const double wa = std::exp(av.d[i] - n.val.d[i]);
          const double wb = std::exp(bv.d[i] - n.val.d[i]);
          if (needs(n.a)) g(n.a).d[i] += go.d[i] * wa;
          if (needs(n.b)) g(n.b).d[i] += go.d[i] * wb;
        }
        break;
      }
      case Op::kAddC: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i];
        break;
      }
      case Op::kMulC: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] * n.c0;
        break;
      }
      case Op::kClamp: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        const Mat& av = nodes_[n.a].val;
        for (std::size_t i = 0; i < go.size(); ++i)
          if (av.d[i] >= n.c0 && av.d[i] <= n.c1) ga.d[i] += go.d[i];
        break;
      }
      case Op::kBRowAdd: {
        if (needs(n.a)) {
          Mat& ga = g(n.a);
          for (int i = 0; i < go.rows; ++i)
            for (int j = 0; j < go.cols; ++j) ga(0, j) += go(i, j);
        }
        if (needs(n.b)) {
          Mat& gb = g(n.b);
          for (std::size_t i = 0; i < go.size(); ++i) gb.d[i] += go.d[i];
        }
        break;
      }
      case Op::kBRowMul: {
        const Mat& av = nodes_[n.a].val;
        const Mat& bv = nodes_[n.b].val;
        if (needs(n.a)) {
          Mat& ga = g(n.a);
          for (int i = 0; i < go.rows; ++i)
            for (int j = 0; j < go.cols; ++j) ga(0, j) += go(i, j) * bv(i, j);
        }
        if (needs(n.b)) {
          Mat& gb = g(n.b);
          for (int i = 0; i < go.rows; ++i)
            for (int j = 0; j < go.cols; ++j) gb(i, j) += go(i, j) * av(0, j);
        }
        break;
      }
      case Op::kConcatCols: {
        const int ca = nodes_[n.a].val.cols;
        if (needs(n.a)) {
          Mat& ga = g(n.a);
          for (int i = 0; i < go.rows; ++i)
            for (int j = 0; j < ca; ++j) ga(i, j) += go(i, j);
        }
        if (needs(n.b)) {
          Mat& gb = g(n.b);
          for (int i = 0; i < go.rows; ++i)
            for (int j = 0; j < gb.cols; ++j) gb(i, j) += go(i, ca + j);
        }
        break;
      }
      case Op::kSliceCols: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        for (int i = 0; i < go.rows; ++i)
          for (int j = 0; j < go.cols; ++j) ga(i, n.i0 + j) += go(i, j);
        break;
      }
      case Op::kRowSum: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        for (int i = 0; i < ga.rows; ++i) {
          const double gi = go(i, 0);
          double* ri = ga.row(i);
          for (int j = 0; j < ga.cols; ++j) ri[j] += gi;
        }
        break;
      }
      case Op::kSumAll: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        const double gv = go(0, 0);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.d[i] += gv;
        break;
      }
      case Op::kMeanAll: {
        if (!needs(n.a)) break;
        Mat& ga = g(n.a);
        const double gv = go(0, 0) / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga.d[i] += gv;
        break;
      }
    }
  }
}

}  // namespace saferl::nn
