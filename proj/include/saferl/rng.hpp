#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace saferl {

// Seeded random stream with fixed, platform-independent transforms.
// std::mt19937_64 output is standardized; the distribution adapters in
// <random> are not, so we implement our own on top of the raw stream.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, no caching so the stream position is a pure function of
  // the number of calls made.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t raw() { return gen_(); }

  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  std::mt19937_64 gen_;
};

}  // namespace saferl
