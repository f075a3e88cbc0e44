#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>

#include "uda/dataset.hpp"

using namespace uda;

namespace {
SyntheticDomainSpec small_spec() {
  SyntheticDomainSpec spec;
  spec.train_source = 64;
  spec.train_target = 64;
  spec.val_target = 32;
  spec.test_target = 32;
  spec.seed = 42;
  spec.shift.rotation_degrees = 50;
  spec.shift.scale = 1.6;
  spec.shift.scale_coords = {2, 3};
  return spec;
}
}  // namespace

TEST_CASE("dataset/every example is standardized to mean 0, std 1", "[dataset]") {
  TwoDomainDataset ds = make_two_domain_dataset(small_spec());
  for (const DataSplit* split : {&ds.source_train, &ds.target_train, &ds.target_val, &ds.target_test})
    for (int i = 0; i < split->size(); ++i) {
      double mean = 0;
      int d = split->x.extent(1);
      for (int j = 0; j < d; ++j) mean += split->x.at(i, j);
      mean /= d;
      double var = 0;
      for (int j = 0; j < d; ++j) var += (split->x.at(i, j) - mean) * (split->x.at(i, j) - mean);
      double sd = std::sqrt(var / (d - 1));
      REQUIRE(mean == Catch::Approx(0.0).margin(1e-9));
      REQUIRE(sd == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("dataset/deterministic given the seed", "[dataset]") {
  TwoDomainDataset a = make_two_domain_dataset(small_spec());
  TwoDomainDataset b = make_two_domain_dataset(small_spec());
  REQUIRE(a.source_train.x.values() == b.source_train.x.values());
  REQUIRE(a.target_test.x.values() == b.target_test.x.values());
  REQUIRE(a.target_train.y == b.target_train.y);
  REQUIRE(dataset_checksum(a) == dataset_checksum(b));

  SyntheticDomainSpec other = small_spec();
  other.seed = 43;
  REQUIRE(dataset_checksum(make_two_domain_dataset(other)) != dataset_checksum(a));
}

TEST_CASE("dataset/golden checksum for the seed-42 blob dataset", "[dataset]") {
  // Frozen from the first generation; guards the generator against silent
  // drift (standardization, shift application, rng draw order).
  TwoDomainDataset ds = make_two_domain_dataset(small_spec());
  CHECK(dataset_checksum(ds) == UINT64_C(10301220484686075815));
}

TEST_CASE("dataset/splits are disjoint and tagged", "[dataset]") {
  TwoDomainDataset ds = make_two_domain_dataset(small_spec());
  REQUIRE(splits_disjoint(ds.target_val, ds.target_test));
  REQUIRE(splits_disjoint(ds.target_train, ds.target_test));
  REQUIRE(splits_disjoint(ds.target_train, ds.target_val));
  for (int sg : ds.source_train.subgroup) REQUIRE(sg == 0);
  int night = 0;
  for (int sg : ds.target_test.subgroup) night += sg;
  REQUIRE(night == ds.target_test.size() / 2);
}

TEST_CASE("dataset/moons and glyphs generate valid splits", "[dataset]") {
  SyntheticDomainSpec moons;
  moons.base = BaseTask::moons;
  moons.classes = 2;
  moons.dims = 4;
  moons.train_source = moons.train_target = 32;
  moons.val_target = moons.test_target = 16;
  moons.shift.rotation_degrees = 30;
  TwoDomainDataset md = make_two_domain_dataset(moons);
  REQUIRE(md.dims == 4);
  for (int y : md.source_train.y) REQUIRE((y == 0 || y == 1));

  SyntheticDomainSpec glyphs;
  glyphs.base = BaseTask::glyphs;
  glyphs.classes = 3;
  glyphs.train_source = glyphs.train_target = 12;
  glyphs.val_target = glyphs.test_target = 8;
  glyphs.shift.rotation_degrees = 20;
  glyphs.shift.scale = 0.6;
  TwoDomainDataset gd = make_two_domain_dataset(glyphs);
  REQUIRE(gd.dims == 256);
}

TEST_CASE("dataset/spec validation", "[dataset]") {
  SyntheticDomainSpec bad = small_spec();
  bad.classes = 1;
  CHECK_THROWS_AS(make_two_domain_dataset(bad), std::invalid_argument);
  bad = small_spec();
  bad.dims = 4;  // blobs need the anchor plane
  CHECK_THROWS_AS(make_two_domain_dataset(bad), std::invalid_argument);
  bad = small_spec();
  bad.base = BaseTask::moons;
  bad.classes = 3;
  CHECK_THROWS_AS(make_two_domain_dataset(bad), std::invalid_argument);
  bad = small_spec();
  bad.shift.permutation = {0, 1};  // wrong length
  CHECK_THROWS_AS(make_two_domain_dataset(bad), std::invalid_argument);
}

TEST_CASE("dataset/feature permutation shift is applied", "[dataset]") {
  SyntheticDomainSpec spec = small_spec();
  spec.shift = ShiftDescriptor{};
  spec.shift.permutation = {7, 6, 5, 4, 3, 2, 1, 0};
  TwoDomainDataset ds = make_two_domain_dataset(spec);

  SyntheticDomainSpec plain = small_spec();
  plain.shift = ShiftDescriptor{};
  TwoDomainDataset base = make_two_domain_dataset(plain);
  // Same rng stream, so target examples match up to the permutation
  // (standardization is permutation-invariant for whole-vector stats).
  for (int j = 0; j < 8; ++j)
    REQUIRE(ds.target_train.x.at(0, j) == Catch::Approx(base.target_train.x.at(0, 7 - j)).margin(1e-12));
}

TEST_CASE("idx/hand-built image file parses to known values", "[dataset][idx]") {
  std::string p = "/tmp/uda_test_images.idx";
  {
    std::ofstream out(p, std::ios::binary);
    unsigned char header[] = {0, 0, 0x08, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
    out.write(reinterpret_cast<char*>(header), sizeof(header));
    unsigned char px[] = {0, 51, 102, 153, 204, 255, 10, 20};
    out.write(reinterpret_cast<char*>(px), sizeof(px));
  }
  Tensor t = load_idx(p);
  REQUIRE(t.shape() == Shape{2, 2, 2});
  CHECK(t[0] == 0.0);
  CHECK(t[1] == Catch::Approx(51.0 / 255).margin(1e-15));
  CHECK(t[5] == 1.0);
  std::remove(p.c_str());
}

TEST_CASE("idx/rank-1 label file keeps raw values", "[dataset][idx]") {
  std::string p = "/tmp/uda_test_labels.idx";
  {
    std::ofstream out(p, std::ios::binary);
    unsigned char header[] = {0, 0, 0x08, 1, 0, 0, 0, 3};
    out.write(reinterpret_cast<char*>(header), sizeof(header));
    unsigned char labels[] = {7, 2, 9};
    out.write(reinterpret_cast<char*>(labels), sizeof(labels));
  }
  Tensor t = load_idx(p);
  REQUIRE(t.shape() == Shape{3});
  CHECK(t.values() == std::vector<double>{7, 2, 9});
  std::remove(p.c_str());
}

TEST_CASE("idx/error cases", "[dataset][idx]") {
  std::string p = "/tmp/uda_test_bad.idx";
  {
    std::ofstream out(p, std::ios::binary);  // empty file
  }
  CHECK_THROWS_AS(load_idx(p), std::invalid_argument);
  {
    std::ofstream out(p, std::ios::binary);
    unsigned char header[] = {1, 2, 0x08, 1};
    out.write(reinterpret_cast<char*>(header), sizeof(header));
  }
  CHECK_THROWS_WITH(load_idx(p), Catch::Matchers::ContainsSubstring("magic"));
  {
    std::ofstream out(p, std::ios::binary);
    unsigned char header[] = {0, 0, 0x0D, 1, 0, 0, 0, 3};  // float type unsupported
    out.write(reinterpret_cast<char*>(header), sizeof(header));
  }
  CHECK_THROWS_WITH(load_idx(p), Catch::Matchers::ContainsSubstring("type"));
  {
    std::ofstream out(p, std::ios::binary);
    unsigned char header[] = {0, 0, 0x08, 1, 0, 0, 0, 5};
    out.write(reinterpret_cast<char*>(header), sizeof(header));
    unsigned char data[] = {1, 2};  // 3 bytes short
    out.write(reinterpret_cast<char*>(data), sizeof(data));
  }
  CHECK_THROWS_WITH(load_idx(p), Catch::Matchers::ContainsSubstring("truncated"));
  std::remove(p.c_str());
}

TEST_CASE("dataset/degenerate standardization is floored, not fatal", "[dataset]") {
  // A glyph image could in principle be constant; drive the floor path
  // directly through the helper.
  Tensor x({1, 4}, 3.3);
  int hits = 0;
  detail::standardize_rows(x, &hits);
  REQUIRE(hits == 1);
  for (int j = 0; j < 4; ++j) REQUIRE(x.at(0, j) == 0.0);
}
