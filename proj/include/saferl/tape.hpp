#pragma once

#include <string>
#include <vector>

#include "saferl/mat.hpp"

namespace saferl::nn {

// Named parameter block with a gradient sink. Blocks with requires_grad
// off still participate in forward passes but skip gradient accumulation
// (used for target networks appearing inside actor losses).
struct ParamBlock {
  std::string name;
  Mat value;
  Mat grad;
  bool requires_grad = true;

  ParamBlock() = default;
  ParamBlock(std::string n, int r, int c) : name(std::move(n)), value(r, c), grad(r, c) {}

  void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape over matrix-level operations. Build a graph by calling
// the op methods (each returns a node id), then call backward() on a 1x1
// node; gradients accumulate into the referenced ParamBlocks.
class Tape {
 public:
  int constant(Mat v);
  int param(ParamBlock* pb);

  // y = x * W^T + b (row-broadcast bias). W is (out x in), b is (1 x out).
  int linear(int x, ParamBlock* w, ParamBlock* b);

  int relu(int a);
  int tanh_(int a);
  int softplus(int a);
  int exp_(int a);
  int log_(int a);
  int square(int a);
  int neg(int a);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int min2(int a, int b);
  int max2(int a, int b);
  // Elementwise log(exp(a) + exp(b)), computed stably.
  int lse2(int a, int b);

  int add_const(int a, double c);
  int mul_const(int a, double c);
  int clamp(int a, double lo, double hi);

  // Row-vector broadcast: a is (1 x k), b is (n x k).
  int brow_add(int a, int b);
  int brow_mul(int a, int b);

  int concat_cols(int a, int b);
  int slice_cols(int a, int c0, int c1);

  int rowsum(int a);    // (n x k) -> (n x 1)
  int sum_all(int a);   // -> (1 x 1)
  int mean_all(int a);  // -> (1 x 1)

  const Mat& value(int id) const { return nodes_[id].val; }
  const Mat& grad(int id) const { return nodes_[id].grad; }

  // Seeds d(node)/d(node) = 1 and propagates. `node` must be 1x1.
  void backward(int node);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  enum class Op {
    kConst, kParam, kLinear, kRelu, kTanh, kSoftplus, kExp, kLog, kSquare, kNeg,
    kAdd, kSub, kMul, kDiv, kMin2, kMax2, kLse2,
    kAddC, kMulC, kClamp, kBRowAdd, kBRowMul,
    kConcatCols, kSliceCols, kRowSum, kSumAll, kMeanAll,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    ParamBlock* pw = nullptr;
    ParamBlock* pb = nullptr;
    double c0 = 0.0;
    double c1 = 0.0;
    int i0 = 0;
    int i1 = 0;
    Mat val;
    Mat grad;
    bool needs_grad = false;
  };

  int push(Node n);
  bool needs(int id) const { return id >= 0 && nodes_[id].needs_grad; }
  Mat& g(int id);

  std::vector<Node> nodes_;
};

}  // namespace saferl::nn
