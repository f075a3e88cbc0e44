#include <catch2/catch_amalgamated.hpp>

#include "uda/rng.hpp"
#include "uda/tensor.hpp"

using namespace uda;

TEST_CASE("tensor/shape invariants", "[tensor]") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  REQUIRE(t.numel() == 6);
  REQUIRE(t.at(1, 2) == 6.0);

  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({-1}), std::invalid_argument);
}

TEST_CASE("tensor/finite detection", "[tensor]") {
  Tensor t({2}, {1.0, 2.0});
  REQUIRE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  REQUIRE_FALSE(t.all_finite());
  t[1] = std::nan("");
  REQUIRE_FALSE(t.all_finite());
}

TEST_CASE("tensor/item on non-scalar rejected", "[tensor]") {
  CHECK_THROWS_AS(Tensor({2}).item(), std::invalid_argument);
  CHECK(Tensor::scalar(3.5).item() == 3.5);
}

TEST_CASE("rng/determinism", "[rng]") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
  Rng c(123), d(124);
  bool all_equal = true;
  for (int i = 0; i < 10; ++i) all_equal = all_equal && (c.uniform() == d.uniform());
  REQUIRE_FALSE(all_equal);
}

TEST_CASE("rng/simplex draws lie on the simplex", "[rng]") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor p = rng.simplex_tensor(5);
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      REQUIRE(p[i] >= 0.0);
      sum += p[i];
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("rng/permutation is a permutation", "[rng]") {
  Rng rng(9);
  auto p = rng.permutation(17);
  std::vector<int> seen(17, 0);
  for (int v : p) seen[v]++;
  for (int c : seen) REQUIRE(c == 1);
}
