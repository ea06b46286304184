#pragma once

#include <string>
#include <vector>

#include "saferl/rng.hpp"
#include "saferl/tape.hpp"

namespace saferl::nn {

enum class Activation { kRelu, kTanh };

// Fully connected network; weights[i] is (layer_sizes[i+1] x layer_sizes[i]).
// The last layer is linear, hidden layers use `activation`.
struct MlpParams {
  std::vector<int> layer_sizes;
  Activation activation = Activation::kRelu;
  std::vector<ParamBlock> weights;
  std::vector<ParamBlock> biases;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }

  void set_requires_grad(bool on);
  std::size_t num_params() const;
};

MlpParams make_mlp(const std::string& name, const std::vector<int>& layer_sizes,
                   Activation act, RngStream& rng);

// Tape forward; returns output node.
int mlp_forward(Tape& tape, MlpParams& p, int input);

// Plain forward without gradient tracking (shared by target computation and
// rollout inference). Output preallocated by the callee.
Mat mlp_eval(const MlpParams& p, const Mat& input);

void zero_grads(MlpParams& p);

// Scales gradients so their joint L2 norm is at most max_norm. Returns the
// pre-clip norm.
double clip_grad_norm(std::vector<ParamBlock*> blocks, double max_norm);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

AdamState make_adam(std::size_t num_params, double lr);

// Bias-corrected Adam over the concatenation of the blocks, applied in place
// using each block's accumulated gradient.
void adam_step(AdamState& state, std::vector<ParamBlock*> blocks);

// target <- tau * target + (1 - tau) * source
void polyak_update(MlpParams& target, const MlpParams& source, double tau);

std::vector<double> flatten_params(const MlpParams& p);
void unflatten_params(MlpParams& p, const std::vector<double>& flat);

}  // namespace saferl::nn
