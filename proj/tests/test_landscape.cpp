#include <catch2/catch_amalgamated.hpp>

#include "uda/landscape.hpp"
#include "uda/rng.hpp"

using namespace uda;

TEST_CASE("landscape/vertex values", "[landscape]") {
  // Real-class vertex: value 0 for any gamma_inv.
  auto e1 = SimplexPoint::checked(Tensor({4}, {1, 0, 0, 0}));
  CHECK(landscape_value(e1, 0.0) == 0.0);
  CHECK(landscape_value(e1, 0.3) == 0.0);
  CHECK(landscape_value(e1, 7.0) == 0.0);

  // Target vertex: 0 in the unregularized form (right limit), -inf otherwise.
  auto etgt = SimplexPoint::checked(Tensor({4}, {0, 0, 0, 1}));
  CHECK(landscape_value(etgt, 0.0) == 0.0);
  CHECK(landscape_value(etgt, 0.1) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("landscape/rejects invalid points", "[landscape]") {
  CHECK_THROWS_AS(SimplexPoint::checked(Tensor({3}, {0.5, 0.6, 0.1})), std::invalid_argument);
  CHECK_THROWS_AS(SimplexPoint::checked(Tensor({3}, {1.2, -0.2, 0.0})), std::invalid_argument);
  CHECK_THROWS_AS(SimplexPoint::checked(Tensor({1}, {1.0})), std::invalid_argument);
  auto ok = SimplexPoint::checked(Tensor({2}, {0.5, 0.5}));
  CHECK_THROWS_AS(landscape_value(ok, -0.1), std::invalid_argument);
}

namespace {
bool contains_vertex(const std::vector<Tensor>& points, int coord) {
  for (const Tensor& p : points)
    if (p[coord] == 1.0) return true;
  return false;
}
}  // namespace

TEST_CASE("landscape/brute force matches the propositions", "[landscape]") {
  // Unregularized: maximum 0 attained at every vertex, including the target.
  auto r0 = brute_force_maximize(2, 0.0, 100);
  CHECK(r0.max_value == 0.0);
  CHECK(contains_vertex(r0.argmax, 0));
  CHECK(contains_vertex(r0.argmax, 1));
  CHECK(contains_vertex(r0.argmax, 2));

  // Regularized: the target vertex drops out of the argmax set.
  auto r1 = brute_force_maximize(2, 0.3, 100);
  CHECK(r1.max_value == 0.0);
  CHECK(contains_vertex(r1.argmax, 0));
  CHECK(contains_vertex(r1.argmax, 1));
  CHECK_FALSE(contains_vertex(r1.argmax, 2));
  for (const Tensor& p : r1.argmax) CHECK(p[2] < 1.0 - 1.0 / 100);
}

TEST_CASE("landscape/N=1 brute force against a direct 1-D scan", "[landscape]") {
  // Closed form for N=1 with all class mass on the single real class:
  // f(a) = (1 - a + 1) log(1 - a), maximized at a = 0.
  int steps = 1000;
  double best = -1e300;
  double best_a = -1;
  for (int k = 0; k <= steps; ++k) {
    double a = static_cast<double>(k) / steps;
    double v = a >= 1.0 ? -1e300 : (2.0 - a) * std::log(1.0 - a);
    if (v > best) {
      best = v;
      best_a = a;
    }
  }
  REQUIRE(best == 0.0);
  REQUIRE(best_a == 0.0);

  auto r = brute_force_maximize(1, 1.0, steps);
  CHECK(r.max_value == 0.0);
  REQUIRE(r.argmax.size() == 1);
  CHECK(r.argmax[0][0] == 1.0);
  CHECK(r.argmax[0][1] == 0.0);
}

TEST_CASE("landscape/grid guardrails", "[landscape]") {
  CHECK_THROWS_AS(brute_force_maximize(0, 0.0, 100), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_maximize(2, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_WITH(brute_force_maximize(6, 0.0, 2000), Catch::Matchers::ContainsSubstring("1e8"));
}

TEST_CASE("landscape/interior points are strictly negative", "[landscape][property]") {
  Rng rng(17);
  for (int n = 1; n <= 3; ++n) {
    for (double gamma_inv : {0.0, 0.5}) {
      for (int rep = 0; rep < 2000; ++rep) {
        SimplexPoint p{rng.simplex_tensor(n + 1)};
        REQUIRE(landscape_value(p, gamma_inv) < 0.0);
      }
    }
  }
}

TEST_CASE("curves/anchor values", "[landscape]") {
  auto samples = curve_samples(1.0, 100);
  CHECK(samples[0].first == 0.0);
  CHECK(samples[0].second == 0.0);
  auto mid = curve_samples(1.0, 2)[1];  // a = 0.5
  CHECK(mid.second == Catch::Approx(1.5 * std::log(0.5)).margin(1e-12));
}

TEST_CASE("curves/strictly decreasing for gamma_inv = 1", "[landscape]") {
  auto samples = curve_samples(1.0, 500);
  for (size_t i = 1; i < samples.size(); ++i)
    REQUIRE(samples[i].second < samples[i - 1].second);
}

TEST_CASE("curves/rescale maps the range onto (-7, 0]", "[landscape]") {
  auto samples = curve_samples(0.3, 200, true);
  double lo = 0.0;
  for (auto& [a, v] : samples) {
    REQUIRE(v <= 0.0);
    lo = std::min(lo, v);
  }
  REQUIRE(lo == Catch::Approx(-7.0).margin(1e-12));
}
