#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "uda/tensor.hpp"

// Exact evaluation and brute-force maximization of the entropy-regularized
// adversarial objective restricted to one target example's score vector on
// the (N+1)-simplex:
//
//   (1-a) * sum_i a~_i log a~_i + (1-a) log(1-a) + gamma_inv * log(1-a),
//
// with a = alpha_{N+1}, a~_i = alpha_i / (1-a) and 0 log 0 := 0. The main
// objective weights the entropy term by gamma; the expression here takes
// gamma_inv = 1/gamma directly so that gamma_inv = 0 recovers the
// unregularized form. Scaling the whole objective by gamma does not move the
// argmax, so statements about maximizers transfer between the two forms.

namespace uda {

// Point on the (N+1)-simplex: nonnegative entries summing to 1 within 1e-12.
struct SimplexPoint {
  Tensor alpha;  // [N+1]

  static SimplexPoint checked(Tensor a) {
    if (a.rank() != 1 || a.extent(0) < 2)
      throw std::invalid_argument("SimplexPoint: need at least 2 entries");
    double sum = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
      if (a[i] < 0.0)
        throw std::invalid_argument("SimplexPoint: negative entry at " + std::to_string(i));
      sum += a[i];
    }
    if (std::fabs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("SimplexPoint: entries sum to " + std::to_string(sum));
    return SimplexPoint{std::move(a)};
  }

  int num_classes() const { return alpha.extent(0) - 1; }
  double target_mass() const { return alpha[alpha.numel() - 1]; }
};

// Value of the landscape at p. At alpha_{N+1} = 1 the value is 0 for
// gamma_inv = 0 (the right limit) and -infinity for gamma_inv > 0.
inline double landscape_value(const SimplexPoint& p, double gamma_inv) {
  if (gamma_inv < 0.0) throw std::invalid_argument("landscape_value: gamma_inv must be >= 0");
  int n = p.num_classes();
  double a = p.target_mass();
  double rest = 1.0 - a;
  if (rest <= 0.0) return gamma_inv > 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
  double neg_entropy = 0.0;  // sum a~_i log a~_i
  for (int i = 0; i < n; ++i) {
    double t = p.alpha[i] / rest;
    if (t > 0.0) neg_entropy += t * std::log(t);
  }
  return rest * neg_entropy + rest * std::log(rest) + gamma_inv * std::log(rest);
}

struct BruteForceResult {
  double max_value = 0.0;
  std::vector<Tensor> argmax;  // all grid points within 1e-9 of the max
  int64_t points = 0;
};

namespace detail {
inline double composition_count(int steps, int parts) {
  // C(steps + parts - 1, parts - 1), computed in floating point for the
  // size guard only.
  double c = 1.0;
  for (int i = 1; i < parts; ++i) c = c * (steps + i) / i;
  return c;
}

template <typename Fn>
void for_each_composition(int steps, int parts, std::vector<int>& k, int depth, int remaining,
                          Fn&& fn) {
  if (depth == parts - 1) {
    k[depth] = remaining;
    fn(k);
    return;
  }
  for (int v = 0; v <= remaining; ++v) {
    k[depth] = v;
    for_each_composition(steps, parts, k, depth + 1, remaining - v, fn);
  }
}
}  // namespace detail

// Exhaustive evaluation over the barycentric grid {k/grid_steps} on the
// (N+1)-simplex. Returns the global maximum and every grid point within
// 1e-9 of it.
inline BruteForceResult brute_force_maximize(int n, double gamma_inv, int grid_steps) {
  if (n < 1) throw std::invalid_argument("brute_force_maximize: N must be >= 1");
  if (grid_steps < 10) throw std::invalid_argument("brute_force_maximize: grid_steps must be >= 10");
  int parts = n + 1;
  double count = detail::composition_count(grid_steps, parts);
  if (count > 1e8)
    throw std::invalid_argument("brute_force_maximize: grid has about " +
                                std::to_string(static_cast<long long>(count)) +
                                " points, exceeding the 1e8 limit");

  auto point_of = [&](const std::vector<int>& k) {
    Tensor a({parts});
    for (int i = 0; i < parts; ++i) a[i] = static_cast<double>(k[i]) / grid_steps;
    return a;
  };

  BruteForceResult result;
  result.max_value = -std::numeric_limits<double>::infinity();
  std::vector<int> k(parts);
  detail::for_each_composition(grid_steps, parts, k, 0, grid_steps, [&](const std::vector<int>& kk) {
    result.points += 1;
    double v = landscape_value(SimplexPoint{point_of(kk)}, gamma_inv);
    if (v > result.max_value) result.max_value = v;
  });
  detail::for_each_composition(grid_steps, parts, k, 0, grid_steps, [&](const std::vector<int>& kk) {
    Tensor a = point_of(kk);
    if (landscape_value(SimplexPoint{a}, gamma_inv) >= result.max_value - 1e-9)
      result.argmax.push_back(std::move(a));
  });
  return result;
}

// Samples of (1 - a + gamma_inv) * log(1 - a) on a in [0, 1), the restriction
// of the landscape to zero conditional entropy. With rescale, values are
// multiplied by 7/|min| so that they span (-7, 0]; this matches how the
// curves are usually plotted for comparison across gamma values. The curve is
// monotone decreasing for gamma_inv >= e^-2; for smaller positive gamma_inv
// it dips, rises, then plunges to -infinity near a = 1.
inline std::vector<std::pair<double, double>> curve_samples(double gamma_inv, int num_points,
                                                            bool rescale = false) {
  if (num_points < 2) throw std::invalid_argument("curve_samples: need at least 2 points");
  if (gamma_inv < 0.0) throw std::invalid_argument("curve_samples: gamma_inv must be >= 0");
  std::vector<std::pair<double, double>> out;
  out.reserve(num_points);
  for (int i = 0; i < num_points; ++i) {
    double a = static_cast<double>(i) / num_points;  // [0, 1)
    double v = (1.0 - a + gamma_inv) * std::log(1.0 - a);
    out.emplace_back(a, v);
  }
  if (rescale) {
    double lo = 0.0;
    for (auto& [a, v] : out) lo = std::min(lo, v);
    if (lo < 0.0)
      for (auto& [a, v] : out) v *= 7.0 / -lo;
  }
  return out;
}

}  // namespace uda
