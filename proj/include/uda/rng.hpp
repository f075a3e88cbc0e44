#pragma once

#include <cstdint>
#include <random>

#include "uda/tensor.hpp"

namespace uda {

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// that identical seeds give identical streams on every platform; the standard
// library distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int64_t uniform_index(int64_t n) {
    return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal via Box-Muller (one value per draw; the pair is not cached
  // so the stream stays trivially reproducible).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Tensor uniform_tensor(const Shape& shape, double lo, double hi) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
  }

  Tensor normal_tensor(const Shape& shape, double mean = 0.0, double stddev = 1.0) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(mean, stddev);
    return t;
  }

  // Random point on the (n-1)-simplex via normalized exponential draws.
  Tensor simplex_tensor(int n) {
    Tensor t({n});
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      t[i] = -std::log(u);
      sum += t[i];
    }
    for (int i = 0; i < n; ++i) t[i] /= sum;
    return t;
  }

  // Fisher-Yates over indices 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(uniform_index(i + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace uda
