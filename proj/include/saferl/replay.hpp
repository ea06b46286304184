#pragma once

#include <array>
#include <vector>

#include "saferl/env.hpp"
#include "saferl/rng.hpp"

namespace saferl::train {

// One step in the shared buffer. Both the proposed and the executed action
// are kept so the performance agent can train on its own proposal while the
// backup agent trains on what actually ran.
struct Transition {
  std::array<double, env::kObsDim> obs{};
  std::array<double, env::kObsDim> next_obs{};
  env::Action a_proposed;
  env::Action a_executed;
  std::vector<double> z;
  std::vector<double> xi;  // reparameterization noise that produced z
  double reward = 0.0;
  double g_margin = 0.0;  // safety margin at the next state
  double l_margin = 0.0;  // target margin at the next state
  bool done = false;
  env::DoneKind done_kind = env::DoneKind::kNone;
  bool overridden = false;
  bool backup_chosen = false;
};

// FIFO ring buffer with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void add(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  std::vector<const Transition*> sample(std::size_t batch, RngStream& rng) const {
    std::vector<const Transition*> out(batch);
    for (std::size_t i = 0; i < batch; ++i)
      out[i] = &data_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(data_.size())))];
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

}  // namespace saferl::train
