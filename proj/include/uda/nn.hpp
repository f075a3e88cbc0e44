#pragma once

#include <vector>

#include "uda/graph.hpp"
#include "uda/rng.hpp"
#include "uda/tensor.hpp"

namespace uda {

enum class Activation { none, relu, tanh, sigmoid };

inline Value apply_activation(Graph& g, Value x, Activation act) {
  switch (act) {
    case Activation::none: return x;
    case Activation::relu: return relu(g, x);
    case Activation::tanh: return tanh_op(g, x);
    case Activation::sigmoid: return sigmoid(g, x);
  }
  throw std::invalid_argument("unknown activation");
}

// Stack of affine layers with a fixed hidden activation; the last layer is
// linear (logits). Weights are initialized uniform in [-s, s] with
// s = sqrt(6 / (fan_in + fan_out)), biases zero.
struct Mlp {
  std::vector<Tensor> weights;  // [in, out] each
  std::vector<Tensor> biases;   // [out] each
  Activation hidden = Activation::relu;

  static Mlp make(const std::vector<int>& widths, Activation hidden_act, Rng& rng) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
    Mlp m;
    m.hidden = hidden_act;
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
      int fan_in = widths[i], fan_out = widths[i + 1];
      if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("Mlp: widths must be positive");
      double s = std::sqrt(6.0 / (fan_in + fan_out));
      m.weights.push_back(rng.uniform_tensor({fan_in, fan_out}, -s, s));
      m.biases.push_back(Tensor({fan_out}));
    }
    return m;
  }

  int input_width() const { return weights.front().extent(0); }
  int output_width() const { return weights.back().extent(1); }

  std::vector<Tensor*> params() {
    std::vector<Tensor*> p;
    for (size_t i = 0; i < weights.size(); ++i) {
      p.push_back(&weights[i]);
      p.push_back(&biases[i]);
    }
    return p;
  }
  std::vector<const Tensor*> params() const {
    std::vector<const Tensor*> p;
    for (size_t i = 0; i < weights.size(); ++i) {
      p.push_back(&weights[i]);
      p.push_back(&biases[i]);
    }
    return p;
  }
};

// Mlp parameters registered as leaves on one graph. Keeps the handles so
// gradients can be read back after backward().
struct BoundMlp {
  const Mlp* net = nullptr;
  std::vector<Value> params;  // leaf per tensor, in Mlp::params() order

  // x: [B, in] -> logits [B, out]
  Value operator()(Graph& g, Value x) const {
    Value h = x;
    size_t layers = net->weights.size();
    for (size_t i = 0; i < layers; ++i) {
      h = affine(g, h, params[2 * i], params[2 * i + 1]);
      if (i + 1 < layers) h = apply_activation(g, h, net->hidden);
    }
    return h;
  }

  // Gradients in Mlp::params() order; zero tensors where no grad reached.
  std::vector<Tensor> grads(const Graph& g) const {
    std::vector<Tensor> out;
    for (Value v : params)
      out.push_back(g.has_grad(v) ? g.grad(v) : Tensor(g.value(v).shape()));
    return out;
  }
};

inline BoundMlp bind(Graph& g, const Mlp& m, bool requires_grad) {
  BoundMlp b;
  b.net = &m;
  for (size_t i = 0; i < m.weights.size(); ++i) {
    b.params.push_back(g.leaf(m.weights[i], requires_grad));
    b.params.push_back(g.leaf(m.biases[i], requires_grad));
  }
  return b;
}

}  // namespace uda
