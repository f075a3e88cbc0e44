#pragma once

#include <cmath>
#include <vector>

#include "uda/tensor.hpp"

namespace uda {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m, v;
  int64_t step = 0;
};

// One bias-corrected Adam update in the descent direction.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
  if (cfg.learning_rate <= 0.0)
    throw std::invalid_argument("adam_step: learning_rate must be positive");
  check_same_shape(param, grad, "adam_step");
  if (state.step == 0) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  check_same_shape(param, state.m, "adam_step state");
  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int64_t i = 0; i < param.numel(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// Owns one AdamState per parameter, matched by position.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("AdamOptimizer::step: params/grads count mismatch");
    if (states_.empty()) states_.resize(params.size());
    if (states_.size() != params.size())
      throw std::invalid_argument("AdamOptimizer::step: parameter count changed");
    for (size_t i = 0; i < params.size(); ++i) adam_step(*params[i], grads[i], states_[i], cfg_);
  }

 private:
  AdamConfig cfg_;
  std::vector<AdamState> states_;
};

}  // namespace uda
