#include <catch2/catch_amalgamated.hpp>

#include "uda/train.hpp"

using namespace uda;

namespace {
SyntheticDomainSpec quick_spec(uint64_t seed = 42, double rotation = 50.0) {
  SyntheticDomainSpec spec;
  spec.train_source = 256;
  spec.train_target = 256;
  spec.val_target = 64;
  spec.test_target = 256;
  spec.seed = seed;
  spec.shift.rotation_degrees = rotation;
  spec.shift.scale = rotation == 0.0 ? 1.0 : 1.6;
  spec.shift.scale_coords = {2, 3};
  return spec;
}

RunConfig quick_cfg(ObjectiveKind kind, uint64_t seed = 1) {
  RunConfig cfg;
  cfg.objective = kind;
  cfg.weights = {.lambda = 1.0, .gamma = 0.1, .beta = 1.0 / 3.0};
  cfg.steps = 120;
  cfg.pretrain_steps = 80;
  cfg.batch_size = 32;
  cfg.probe_size = 128;
  cfg.entropy_log_every = 10;
  cfg.seed = seed;
  return cfg;
}
}  // namespace

TEST_CASE("evaluate/crafted perfect model scores 1.0", "[train]") {
  // Identity feature, identity classifier: argmax(x) == label by construction.
  AdversarialModel m;
  m.objective = ObjectiveKind::source_only;
  m.num_classes = 2;
  Mlp feat;
  feat.hidden = Activation::relu;
  Tensor eye({2, 2});
  eye.at(0, 0) = eye.at(1, 1) = 1.0;
  feat.weights.push_back(eye);
  feat.biases.push_back(Tensor({2}));
  m.feature = feat;
  m.classifier = feat;

  DataSplit split;
  split.x = Tensor({4, 2}, {3, 0, 0, 3, 3, 0, 0, 3});
  split.y = {0, 1, 0, 1};
  split.subgroup = {0, 0, 1, 1};
  EvalReport r = evaluate(m, split);
  CHECK(r.top1 == 1.0);
  CHECK(r.subgroup_top1.at(0) == 1.0);
  CHECK(r.subgroup_top1.at(1) == 1.0);
}

TEST_CASE("evaluate/subgroup accuracies aggregate to the overall accuracy", "[train]") {
  Rng rng(3);
  AdversarialModel m;
  m.objective = ObjectiveKind::source_only;
  m.num_classes = 2;
  m.feature = Mlp::make({4, 4}, Activation::relu, rng);
  m.classifier = Mlp::make({4, 2}, Activation::relu, rng);

  DataSplit split;
  split.x = rng.normal_tensor({101, 4});
  for (int i = 0; i < 101; ++i) {
    split.y.push_back(static_cast<int>(rng.uniform_index(2)));
    split.subgroup.push_back(i % 3);  // deliberately unequal sizes
  }
  EvalReport r = evaluate(m, split);
  double weighted = 0;
  for (auto& [sg, acc] : r.subgroup_top1) weighted += acc * r.subgroup_counts.at(sg);
  weighted /= r.examples;
  REQUIRE(weighted == Catch::Approx(r.top1).margin(1e-12));
}

TEST_CASE("evaluate/near-random model on two balanced classes is near half", "[train]") {
  Rng rng(5);
  AdversarialModel m;
  m.objective = ObjectiveKind::source_only;
  m.num_classes = 2;
  m.feature = Mlp::make({4, 4}, Activation::relu, rng);
  m.classifier = Mlp::make({4, 2}, Activation::relu, rng);
  DataSplit split;
  split.x = rng.normal_tensor({2000, 4});
  for (int i = 0; i < 2000; ++i) split.y.push_back(static_cast<int>(rng.uniform_index(2)));
  split.subgroup.assign(2000, 0);
  EvalReport r = evaluate(m, split);
  // Labels are independent of the inputs, so accuracy is binomial(0.5).
  CHECK(r.top1 > 0.4);
  CHECK(r.top1 < 0.6);
}

TEST_CASE("evaluate/augmented argmax excludes the target entry", "[train]") {
  // Crafted augmented classifier: the (N+1)th logit dominates everywhere, yet
  // predictions must come from the first N columns.
  AdversarialModel m;
  m.objective = ObjectiveKind::dann_ss;
  m.num_classes = 2;
  Mlp feat;
  Tensor eye({2, 2});
  eye.at(0, 0) = eye.at(1, 1) = 1.0;
  feat.weights.push_back(eye);
  feat.biases.push_back(Tensor({2}));
  m.feature = feat;
  Mlp head;
  Tensor w({2, 3});
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  head.weights.push_back(w);
  Tensor b({3});
  b[2] = 50.0;  // target logit saturates the softmax
  head.biases.push_back(b);
  m.classifier = head;

  DataSplit split;
  split.x = Tensor({2, 2}, {2, 0, 0, 2});
  split.y = {0, 1};
  split.subgroup = {0, 0};
  EvalReport r = evaluate(m, split);
  CHECK(r.top1 == 1.0);
}

TEST_CASE("train/source-only never touches the target side", "[train][training]") {
  SyntheticDomainSpec spec = quick_spec();
  TwoDomainDataset ds = make_two_domain_dataset(spec);
  TwoDomainDataset swapped = ds;
  for (int64_t i = 0; i < swapped.target_train.x.numel(); ++i)
    swapped.target_train.x[i] = -7.0 + 0.001 * i;  // completely different target set

  RunConfig cfg = quick_cfg(ObjectiveKind::source_only);
  TrainOutcome a = train_uda(cfg, ds);
  TrainOutcome b = train_uda(cfg, swapped);
  auto pa = a.model.feature.params();
  auto pb = b.model.feature.params();
  for (size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i]->values() == pb[i]->values());
  auto ca = a.model.classifier.params();
  auto cb = b.model.classifier.params();
  for (size_t i = 0; i < ca.size(); ++i) REQUIRE(ca[i]->values() == cb[i]->values());
}

TEST_CASE("train/metrics bytes are reproducible for a fixed config and seed", "[train][training]") {
  SyntheticDomainSpec spec = quick_spec();
  TwoDomainDataset ds = make_two_domain_dataset(spec);
  RunConfig cfg = quick_cfg(ObjectiveKind::dann_em);
  std::string csv1 = train_uda(cfg, ds).log.to_csv();
  std::string csv2 = train_uda(cfg, ds).log.to_csv();
  REQUIRE(csv1 == csv2);
  REQUIRE(csv1.rfind("step,loss_c,loss_d_or_aux,loss_f,entropy\n", 0) == 0);
}

TEST_CASE("train/augmented head starts from the mean column", "[train][training]") {
  SyntheticDomainSpec spec = quick_spec();
  TwoDomainDataset ds = make_two_domain_dataset(spec);
  RunConfig cfg = quick_cfg(ObjectiveKind::dann_ss);
  cfg.steps = 0;  // stop right after augmentation
  TrainOutcome out = train_uda(cfg, ds);
  const Tensor& w = out.model.classifier.weights[0];
  REQUIRE(w.extent(1) == ds.classes + 1);
  for (int i = 0; i < w.extent(0); ++i) {
    double mean = 0;
    for (int j = 0; j < ds.classes; ++j) mean += w.at(i, j);
    REQUIRE(w.at(i, ds.classes) == Catch::Approx(mean / ds.classes).margin(1e-12));
  }
}

TEST_CASE("train/dann-ss entropy ends below its starting point", "[train][training]") {
  SyntheticDomainSpec spec = quick_spec(1);
  TwoDomainDataset ds = make_two_domain_dataset(spec);
  RunConfig cfg = quick_cfg(ObjectiveKind::dann_ss, 1);
  cfg.steps = 400;
  TrainOutcome out = train_uda(cfg, ds);
  INFO("entropy first=" << out.log.rows.front().entropy
                        << " last=" << out.log.rows.back().entropy);
  REQUIRE(out.log.rows.back().entropy < out.log.rows.front().entropy);
}

TEST_CASE("train/validation-test overlap is rejected", "[train]") {
  TwoDomainDataset ds = make_two_domain_dataset(quick_spec());
  ds.target_test.ids = ds.target_val.ids;  // force an overlap
  CHECK_THROWS_AS(train_uda(quick_cfg(ObjectiveKind::dann), ds), std::invalid_argument);
}

TEST_CASE("select/single-config grid returns it", "[train][training]") {
  RunConfig only = quick_cfg(ObjectiveKind::source_only);
  only.steps = 40;
  only.pretrain_steps = 40;
  SelectionResult r = select_model({only}, quick_spec(), {1, 2});
  REQUIRE(r.best_index == 0);
  REQUIRE(r.seeds.size() == 2);
  for (const SeedSelection& s : r.seeds) REQUIRE(s.best_index == 0);
}

TEST_CASE("select/standard error matches the definition", "[train][training]") {
  RunConfig only = quick_cfg(ObjectiveKind::source_only);
  only.steps = 30;
  only.pretrain_steps = 30;
  SelectionResult r = select_model({only}, quick_spec(), {1, 2, 3});
  double mean = 0;
  for (const SeedSelection& s : r.seeds) mean += s.test_top1;
  mean /= 3;
  double var = 0;
  for (const SeedSelection& s : r.seeds) var += (s.test_top1 - mean) * (s.test_top1 - mean);
  double expected = std::sqrt(var / 2) / std::sqrt(3.0);
  REQUIRE(r.mean_test_top1 == Catch::Approx(mean).margin(1e-12));
  REQUIRE(r.stderr_test_top1 == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("select/empty grid rejected", "[train]") {
  CHECK_THROWS_AS(select_model({}, quick_spec(), {1}), std::invalid_argument);
}

TEST_CASE("train/zero shift keeps source and target accuracy close", "[train][training]") {
  SyntheticDomainSpec spec = quick_spec(7, 0.0);
  TwoDomainDataset ds = make_two_domain_dataset(spec);
  RunConfig cfg = quick_cfg(ObjectiveKind::source_only, 7);
  cfg.steps = 200;
  TrainOutcome out = train_uda(cfg, ds);
  // Evaluate the trained model on held-out source-like data: with zero shift
  // the target test set IS source-distributed, so compare against the
  // training distribution accuracy.
  DataSplit source_like = ds.source_train;
  EvalReport on_source = evaluate(out.model, source_like);
  INFO("source=" << on_source.top1 << " target=" << out.test_eval.top1);
  REQUIRE(std::fabs(on_source.top1 - out.test_eval.top1) < 0.08);
}
