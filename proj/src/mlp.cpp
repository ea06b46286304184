#include "saferl/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace saferl::nn {

void MlpParams::set_requires_grad(bool on) {
  for (auto& w : weights) w.requires_grad = on;
  for (auto& b : biases) b.requires_grad = on;
}

std::size_t MlpParams::num_params() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.value.size();
  for (const auto& b : biases) n += b.value.size();
  return n;
}

MlpParams make_mlp(const std::string& name, const std::vector<int>& layer_sizes,
                   Activation act, RngStream& rng) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("mlp needs at least two layers");
  MlpParams p;
  p.layer_sizes = layer_sizes;
  p.activation = act;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int fan_in = layer_sizes[i];
    const int fan_out = layer_sizes[i + 1];
    ParamBlock w(name + ".w" + std::to_string(i), fan_out, fan_in);
    // Uniform He-style init keeps initial outputs small across activations.
    const double bound = std::sqrt(1.0 / fan_in);
    for (auto& x : w.value.d) x = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    ParamBlock b(name + ".b" + std::to_string(i), 1, fan_out);
    p.biases.push_back(std::move(b));
  }
  return p;
}

int mlp_forward(Tape& tape, MlpParams& p, int input) {
  int h = input;
  const std::size_t n_layers = p.weights.size();
  for (std::size_t i = 0; i < n_layers; ++i) {
    h = tape.linear(h, &p.weights[i], &p.biases[i]);
    if (i + 1 < n_layers)
      h = p.activation == Activation::kRelu ? tape.relu(h) : tape.tanh_(h);
  }
  return h;
}

Mat mlp_eval(const MlpParams& p, const Mat& input) {
  Mat h = input;
  const std::size_t n_layers = p.weights.size();
  for (std::size_t i = 0; i < n_layers; ++i) {
    Mat next(h.rows, p.weights[i].value.rows);
    gemm_nt(h, p.weights[i].value, next);
    const double* bv = p.biases[i].value.row(0);
    for (int r = 0; r < next.rows; ++r) {
      double* row = next.row(r);
      for (int c = 0; c < next.cols; ++c) row[c] += bv[c];
    }
    if (i + 1 < n_layers) {
      if (p.activation == Activation::kRelu) {
        for (auto& x : next.d)
          if (x < 0.0) x = 0.0;
      } else {
        for (auto& x : next.d) x = std::tanh(x);
      }
    }
    h = std::move(next);
  }
  return h;
}

void zero_grads(MlpParams& p) {
  for (auto& w : p.weights) w.zero_grad();
  for (auto& b : p.biases) b.zero_grad();
}

double clip_grad_norm(std::vector<ParamBlock*> blocks, double max_norm) {
  double sq = 0.0;
  for (auto* b : blocks)
    for (double gv : b->grad.d) sq += gv * gv;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto* b : blocks)
      for (double& gv : b->grad.d) gv *= scale;
  }
  return norm;
}

AdamState make_adam(std::size_t num_params, double lr) {
  AdamState s;
  s.lr = lr;
  s.m.assign(num_params, 0.0);
  s.v.assign(num_params, 0.0);
  return s;
}

void adam_step(AdamState& state, std::vector<ParamBlock*> blocks) {
  std::size_t total = 0;
  for (auto* b : blocks) total += b->value.size();
  if (total != state.m.size()) throw std::invalid_argument("adam state shape mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto* b : blocks) {
    for (std::size_t i = 0; i < b->value.size(); ++i, ++k) {
      const double grad = b->grad.d[i];
      state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grad;
      state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grad * grad;
      const double mhat = state.m[k] / bc1;
      const double vhat = state.v[k] / bc2;
      b->value.d[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void polyak_update(MlpParams& target, const MlpParams& source, double tau) {
  for (std::size_t i = 0; i < target.weights.size(); ++i) {
    for (std::size_t k = 0; k < target.weights[i].value.size(); ++k)
      target.weights[i].value.d[k] =
          tau * target.weights[i].value.d[k] + (1.0 - tau) * source.weights[i].value.d[k];
    for (std::size_t k = 0; k < target.biases[i].value.size(); ++k)
      target.biases[i].value.d[k] =
          tau * target.biases[i].value.d[k] + (1.0 - tau) * source.biases[i].value.d[k];
  }
}

std::vector<double> flatten_params(const MlpParams& p) {
  std::vector<double> flat;
  flat.reserve(p.num_params());
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    flat.insert(flat.end(), p.weights[i].value.d.begin(), p.weights[i].value.d.end());
    flat.insert(flat.end(), p.biases[i].value.d.begin(), p.biases[i].value.d.end());
  }
  return flat;
}

void unflatten_params(MlpParams& p, const std::vector<double>& flat) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    for (auto& x : p.weights[i].value.d) x = flat.at(k++);
    for (auto& x : p.biases[i].value.d) x = flat.at(k++);
  }
  if (k != flat.size()) throw std::invalid_argument("flat parameter size mismatch");
}

}  // namespace saferl::nn
