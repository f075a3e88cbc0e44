#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>

#include "uda/flow.hpp"
#include "uda/gradcheck.hpp"
#include "uda/image.hpp"
#include "uda/rng.hpp"

using namespace uda;

namespace {
std::string tmp_path(const std::string& name) {
  return std::string("/tmp/uda_test_") + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Image random_quantized_image(Rng& rng, int h, int w, int c) {
  Image im(h, w, c);
  for (auto& v : im.v) v = static_cast<double>(rng.uniform_index(256)) / 255.0;
  return im;
}
}  // namespace

TEST_CASE("pnm/round trip is bit-exact", "[image]") {
  Rng rng(3);
  for (int c : {1, 3}) {
    Image im = random_quantized_image(rng, 7, 5, c);
    std::string p1 = tmp_path("a.pnm"), p2 = tmp_path("b.pnm");
    write_pnm(im, p1);
    Image back = read_pnm(p1);
    REQUIRE(back.v == im.v);
    write_pnm(back, p2);
    REQUIRE(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
  }
}

TEST_CASE("pnm/rejects malformed files", "[image]") {
  std::string p = tmp_path("bad.pgm");
  {
    std::ofstream out(p, std::ios::binary);
    out << "P7\n2 2\n255\n";
  }
  CHECK_THROWS_AS(read_pnm(p), std::invalid_argument);
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n4 4\n255\nab";  // truncated pixels
  }
  CHECK_THROWS_AS(read_pnm(p), std::invalid_argument);
  CHECK_THROWS_AS(read_pnm(tmp_path("missing.pgm")), std::invalid_argument);
  std::remove(p.c_str());
}

TEST_CASE("pnm/comments and whitespace in header are handled", "[image]") {
  std::string p = tmp_path("comment.pgm");
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n# a comment\n 2 # another\n2\n255\n";
    unsigned char px[4] = {0, 64, 128, 255};
    out.write(reinterpret_cast<char*>(px), 4);
  }
  Image im = read_pnm(p);
  REQUIRE(im.width == 2);
  REQUIRE(im.height == 2);
  CHECK(im.at(1, 1) == 1.0);
  std::remove(p.c_str());
}

TEST_CASE("l1_recon_error/anchors and oracle", "[image]") {
  Image a(3, 3, 1, 0.0), b(3, 3, 1, 1.0);
  CHECK(l1_recon_error(a, a) == 0.0);
  CHECK(l1_recon_error(a, b) == 1.0);
  CHECK_THROWS_AS(l1_recon_error(a, Image(2, 3, 1)), std::invalid_argument);

  Rng rng(3);
  Image x = random_quantized_image(rng, 4, 5, 1);
  Image y = random_quantized_image(rng, 4, 5, 1);
  double oracle = 0;
  for (size_t i = 0; i < x.v.size(); ++i) oracle += std::fabs(x.v[i] - y.v[i]);
  oracle /= x.v.size();
  CHECK(l1_recon_error(x, y) == Catch::Approx(oracle).margin(1e-15));
}

TEST_CASE("synthetic_flow/identity and translation columns", "[flow]") {
  FlowField id = synthetic_flow(AffineTransform{}, 4, 6);
  REQUIRE(id.v == FlowField::identity(4, 6).v);

  FlowField t = synthetic_flow(AffineTransform::translation(2, 0), 4, 6);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      REQUIRE(t.fx(y, x) == static_cast<double>(x - 2));
      REQUIRE(t.fy(y, x) == static_cast<double>(y));
    }
}

TEST_CASE("synthetic_flow/rotation matches the closed-form inverse", "[flow]") {
  int n = 32;
  double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0, deg = 10.0;
  FlowField f = synthetic_flow(AffineTransform::rotation_about(cx, cy, deg), n, n);
  double r = -deg * 3.14159265358979323846 / 180.0;  // inverse rotation
  for (int y = 0; y < n; y += 5)
    for (int x = 0; x < n; x += 5) {
      double ox = cx + std::cos(r) * (x - cx) - std::sin(r) * (y - cy);
      double oy = cy + std::sin(r) * (x - cx) + std::cos(r) * (y - cy);
      REQUIRE(f.fx(y, x) == Catch::Approx(ox).margin(1e-12));
      REQUIRE(f.fy(y, x) == Catch::Approx(oy).margin(1e-12));
    }
}

TEST_CASE("synthetic_flow/non-invertible transform rejected", "[flow]") {
  AffineTransform degenerate{1, 1, 1, 1, 0, 0};
  CHECK_THROWS_AS(synthetic_flow(degenerate, 4, 4), std::invalid_argument);
}

TEST_CASE("warp/identity flow is the identity map", "[flow]") {
  Rng rng(5);
  Image im = random_quantized_image(rng, 6, 7, 1);
  Image out = warp_image(im, FlowField::identity(6, 7));
  REQUIRE(out.v == im.v);  // bit-level
}

TEST_CASE("warp/integer shift equals direct shift on interior pixels", "[flow]") {
  Rng rng(6);
  Image im = random_quantized_image(rng, 8, 8, 1);
  FlowField f = synthetic_flow(AffineTransform::translation(1, 0), 8, 8);
  Image out = warp_image(im, f);
  for (int y = 0; y < 8; ++y)
    for (int x = 1; x < 8; ++x) REQUIRE(out.at(y, x) == im.at(y, x - 1));
  for (int y = 0; y < 8; ++y) REQUIRE(out.at(y, 0) == 0.0);  // zero padding
}

TEST_CASE("warp/hand-evaluated bilinear case at (0.5, 0.5)", "[flow]") {
  Image im(2, 2, 1);
  im.at(0, 0) = 0.0;
  im.at(0, 1) = 1.0;
  im.at(1, 0) = 1.0;
  im.at(1, 1) = 0.0;
  FlowField f = FlowField::identity(2, 2);
  f.fx(0, 0) = 0.5;
  f.fy(0, 0) = 0.5;
  Image out = warp_image(im, f);
  REQUIRE(out.at(0, 0) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("warp/output range stays within the convex hull of the source", "[flow][property]") {
  Rng rng(8);
  Image im(9, 9, 1);
  for (auto& v : im.v) v = rng.uniform(0.2, 0.8);
  double lo = *std::min_element(im.v.begin(), im.v.end());
  double hi = *std::max_element(im.v.begin(), im.v.end());

  // In-range coordinates: true convex combination.
  FlowField f(9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      f.fx(y, x) = rng.uniform(0.0, 8.0);
      f.fy(y, x) = rng.uniform(0.0, 8.0);
    }
  Image out = warp_image(im, f);
  for (double v : out.v) {
    REQUIRE(v >= lo - 1e-12);
    REQUIRE(v <= hi + 1e-12);
  }

  // Arbitrary coordinates: zero padding can only pull toward zero.
  FlowField wild(9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      wild.fx(y, x) = rng.uniform(-4.0, 12.0);
      wild.fy(y, x) = rng.uniform(-4.0, 12.0);
    }
  Image out2 = warp_image(im, wild);
  for (double v : out2.v) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= hi + 1e-12);
  }
}

TEST_CASE("warp/differentiable version agrees with the plain one", "[flow]") {
  Rng rng(10);
  Image im = random_quantized_image(rng, 6, 6, 1);
  FlowField f(6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      f.fx(y, x) = rng.uniform(-1.0, 6.5);
      f.fy(y, x) = rng.uniform(-1.0, 6.5);
    }
  Graph g;
  Value out = bilinear_warp(g, g.constant(im.to_tensor()), g.constant(f.to_tensor()));
  REQUIRE(g.value(out).values() == warp_image(im, f).v);
}

TEST_CASE("warp/gradients pass finite differences away from integer coords", "[flow][gradcheck]") {
  Rng rng(11);
  Image im = random_quantized_image(rng, 5, 5, 1);
  // Coordinates bounded away from integers by 0.1 (the kernel has kinks there).
  auto offgrid = [&] {
    FlowField f(5, 5);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        f.fx(y, x) = rng.uniform_index(5) + rng.uniform(0.1, 0.9);
        f.fy(y, x) = rng.uniform_index(5) + rng.uniform(0.1, 0.9);
      }
    return f;
  };
  Image target = random_quantized_image(rng, 5, 5, 1);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor point = offgrid().to_tensor();
    auto loss_wrt_flow = [&](Graph& g, Value flow) {
      Value w = bilinear_warp(g, g.constant(im.to_tensor()), flow);
      Value d = sub(g, w, g.constant(target.to_tensor()));
      return mean_all(g, mul(g, d, d));  // smooth everywhere off-grid
    };
    REQUIRE(grad_check(loss_wrt_flow, point, 1e-5) < 1e-4);

    Tensor img_point = im.to_tensor();
    Tensor fixed_flow = offgrid().to_tensor();
    auto loss_wrt_image = [&](Graph& g, Value image) {
      Value w = bilinear_warp(g, image, g.constant(fixed_flow));
      return mean_all(g, mul(g, w, w));
    };
    REQUIRE(grad_check(loss_wrt_image, img_point, 1e-5) < 1e-4);
  }
}

TEST_CASE("flow file/round trip and error cases", "[flow]") {
  Rng rng(13);
  FlowField f(3, 4);
  for (auto& v : f.v) v = static_cast<double>(static_cast<float>(rng.normal(0, 3)));
  std::string p = tmp_path("field.aflw");
  write_flow(f, p);
  FlowField back = read_flow(p);
  REQUIRE(back.height == 3);
  REQUIRE(back.width == 4);
  REQUIRE(back.v == f.v);  // values chosen representable in f32

  {
    std::ofstream out(p, std::ios::binary);
    out << "FLOW";
  }
  CHECK_THROWS_AS(read_flow(p), std::invalid_argument);
  {
    std::ofstream out(p, std::ios::binary);
    out << "AFLW";
  }
  CHECK_THROWS_AS(read_flow(p), std::invalid_argument);  // truncated dims
  std::remove(p.c_str());
}

TEST_CASE("flow/composition with an integer outer flow matches two warps", "[flow]") {
  Rng rng(14);
  Image im = random_quantized_image(rng, 8, 8, 1);
  FlowField first = synthetic_flow(AffineTransform::rotation_about(3.5, 3.5, 15.0), 8, 8);
  FlowField second = synthetic_flow(AffineTransform::translation(1, 2), 8, 8);
  Image two_step = warp_image(warp_image(im, first), second);
  Image one_step = warp_image(im, compose_flows(first, second));
  for (size_t i = 0; i < im.v.size(); ++i)
    REQUIRE(one_step.v[i] == Catch::Approx(two_step.v[i]).margin(1e-12));
}
