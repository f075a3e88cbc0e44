#pragma once

#include <cmath>

#include "uda/graph.hpp"
#include "uda/tensor.hpp"

namespace uda {

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences. `f` is invoked as f(Graph&, Value) -> Value and
// must build a scalar. Returns the max over coordinates of
//   |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
template <typename F>
double grad_check(F&& f, const Tensor& point, double eps = 1e-5) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");

  Graph g;
  Value x = g.leaf(point, true);
  Value loss = f(g, x);
  if (g.value(loss).numel() != 1)
    throw std::invalid_argument("grad_check: function must be scalar-valued");
  g.backward(loss);
  Tensor g_ad = g.grad(x);

  auto eval = [&](const Tensor& p, int64_t coord) {
    try {
      Graph gg;
      Value xx = gg.leaf(p, false);
      return gg.value(f(gg, xx)).item();
    } catch (const numeric_error& e) {
      throw numeric_error("grad_check: non-finite intermediate at coordinate " +
                          std::to_string(coord) + ": " + e.what());
    }
  };

  double worst = 0.0;
  for (int64_t i = 0; i < point.numel(); ++i) {
    Tensor hi = point, lo = point;
    hi[i] += eps;
    lo[i] -= eps;
    double g_fd = (eval(hi, i) - eval(lo, i)) / (2.0 * eps);
    double denom = std::max({1.0, std::fabs(g_ad[i]), std::fabs(g_fd)});
    worst = std::max(worst, std::fabs(g_ad[i] - g_fd) / denom);
  }
  return worst;
}

}  // namespace uda
