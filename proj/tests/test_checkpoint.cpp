#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>

#include "uda/checkpoint.hpp"
#include "uda/cycle.hpp"
#include "uda/rng.hpp"

using namespace uda;

TEST_CASE("checkpoint/round trip preserves names, shapes and f32 values", "[checkpoint]") {
  Rng rng(3);
  NamedTensors ts;
  Tensor a({2, 3});
  Tensor b({4});
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(rng.normal());
  for (int64_t i = 0; i < b.numel(); ++i) b[i] = static_cast<float>(rng.normal());
  ts.emplace_back("layer0.w", a);
  ts.emplace_back("layer0.b", b);

  std::string p = "/tmp/uda_test_ckpt.bin";
  save_checkpoint(ts, p);
  NamedTensors back = load_checkpoint(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "layer0.w");
  CHECK(back[0].second.shape() == Shape{2, 3});
  CHECK(back[0].second.values() == a.values());
  CHECK(back[1].first == "layer0.b");
  CHECK(back[1].second.values() == b.values());
  std::remove(p.c_str());
}

TEST_CASE("checkpoint/truncated files are rejected", "[checkpoint]") {
  std::string p = "/tmp/uda_test_ckpt_bad.bin";
  {
    std::ofstream out(p, std::ios::binary);
    unsigned char bytes[] = {4, 0, 'a', 'b'};  // name length 4 but only 2 bytes
    out.write(reinterpret_cast<char*>(bytes), sizeof(bytes));
  }
  CHECK_THROWS_AS(load_checkpoint(p), std::invalid_argument);
  CHECK_THROWS_AS(load_checkpoint("/tmp/uda_no_such_ckpt.bin"), std::invalid_argument);
  std::remove(p.c_str());
}

TEST_CASE("checkpoint/translation model dumps one entry per parameter", "[checkpoint]") {
  Rng rng(9);
  TranslationModel m = TranslationModel::make(8, 2, false, 4, 1, rng);
  NamedTensors ts = m.named_tensors();
  // Unshared: 2 fwd + 2 inv generators + 2 discriminators, 2 layers each,
  // weight+bias per layer.
  REQUIRE(ts.size() == 6 * 2 * 2);
  std::string p = "/tmp/uda_test_model_ckpt.bin";
  save_checkpoint(ts, p);
  NamedTensors back = load_checkpoint(p);
  REQUIRE(back.size() == ts.size());
  for (size_t i = 0; i < ts.size(); ++i) {
    REQUIRE(back[i].first == ts[i].first);
    REQUIRE(back[i].second.shape() == ts[i].second.shape());
  }
  std::remove(p.c_str());
}
