#pragma once

#include <atomic>
#include <cstdio>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "uda/dataset.hpp"
#include "uda/objectives.hpp"

// End-to-end adaptation runs: source-only pretraining, classifier
// augmentation for the (N+1)-way objectives, the alternating update loop,
// evaluation with subgroup breakdowns, and supervised model selection over a
// config grid.

namespace uda {

struct RunConfig {
  ObjectiveKind objective = ObjectiveKind::source_only;
  ObjectiveWeights weights;
  double learning_rate = 3e-4;
  double pretrain_learning_rate = 0;  // 0 = same as learning_rate
  int batch_size = 64;
  int steps = 1200;
  int pretrain_steps = 300;
  std::vector<int> feature_widths = {16, 8};  // hidden/output widths after the input dim
  int entropy_log_every = 25;
  int probe_size = 512;  // fixed target-train probe for entropy curves
  int discriminator_hidden = 16;  // hidden width of the DANN discriminator; 0 = single affine
  uint64_t seed = 0;

  void validate() const {
    weights.validate();
    if (learning_rate <= 0) throw std::invalid_argument("RunConfig: learning_rate must be positive");
    if (batch_size < 1 || steps < 0 || pretrain_steps < 0 || probe_size < 1 ||
        entropy_log_every < 1 || feature_widths.empty())
      throw std::invalid_argument("RunConfig: counts out of range");
  }
};

struct MetricsRow {
  int step = 0;
  double loss_c = 0, loss_d_or_aux = 0, loss_f = 0, entropy = 0;
};

// Append-only per-step log; the step column is the monotone timestamp
// (wall-clock time would break byte-level reproducibility).
struct MetricsLog {
  std::vector<MetricsRow> rows;

  void append(MetricsRow row) {
    if (!rows.empty() && row.step <= rows.back().step)
      throw std::invalid_argument("MetricsLog: steps must be strictly increasing");
    rows.push_back(row);
  }

  std::string to_csv() const {
    std::string out = "step,loss_c,loss_d_or_aux,loss_f,entropy\n";
    char buf[160];
    for (const MetricsRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss_c,
                    r.loss_d_or_aux, r.loss_f, r.entropy);
      out += buf;
    }
    return out;
  }

  double final_entropy() const {
    if (rows.empty()) throw std::invalid_argument("MetricsLog: empty");
    return rows.back().entropy;
  }
};

struct EvalReport {
  double top1 = 0;
  std::map<int, double> subgroup_top1;   // keyed by subgroup tag
  std::map<int, int> subgroup_counts;
  int examples = 0;
};

namespace detail {
inline Tensor forward_probs(const AdversarialModel& model, const Tensor& x) {
  Graph g;
  BoundMlp feat = bind(g, model.feature, false);
  BoundMlp head = bind(g, model.classifier, false);
  return g.value(softmax(g, head(g, feat(g, g.constant(x)))));
}

// Class scores used for prediction and entropy: conditional scores for the
// augmented objectives (renormalized over the N real classes), raw N-way
// scores otherwise. Renormalizing by the actual row sum keeps the probe
// robust when C~(N+1) saturates.
inline Tensor prediction_scores(const AdversarialModel& model, const Tensor& x) {
  Tensor probs = forward_probs(model, x);
  if (!model.augmented()) return probs;
  int b = probs.extent(0), n = probs.extent(1) - 1;
  Tensor cond({b, n});
  for (int i = 0; i < b; ++i) {
    double sum = 0;
    for (int j = 0; j < n; ++j) sum += probs.at(i, j);
    sum = std::max(sum, 1e-12);
    for (int j = 0; j < n; ++j) cond.at(i, j) = probs.at(i, j) / sum;
  }
  return cond;
}
}  // namespace detail

// Top-1 accuracy overall and per subgroup. For the augmented objectives the
// (N+1)th entry is excluded from the argmax (equivalently, the argmax of the
// conditional scores).
inline EvalReport evaluate(const AdversarialModel& model, const DataSplit& split) {
  if (split.size() < 1) throw std::invalid_argument("evaluate: empty split");
  Tensor scores = detail::prediction_scores(model, split.x);
  EvalReport report;
  report.examples = split.size();
  std::map<int, int> hits;
  for (int i = 0; i < split.size(); ++i) {
    int best = 0;
    for (int j = 1; j < scores.extent(1); ++j)
      if (scores.at(i, j) > scores.at(i, best)) best = j;
    int sg = split.subgroup.empty() ? 0 : split.subgroup[i];
    report.subgroup_counts[sg] += 1;
    if (best == split.y[i]) {
      report.top1 += 1;
      hits[sg] += 1;
    }
  }
  report.top1 /= report.examples;
  for (auto& [sg, count] : report.subgroup_counts)
    report.subgroup_top1[sg] = static_cast<double>(hits[sg]) / count;
  return report;
}

struct TrainOutcome {
  AdversarialModel model;
  MetricsLog log;
  EvalReport val_eval;
  EvalReport test_eval;
};

namespace detail {
inline DomainBatch sample_batch(const TwoDomainDataset& ds, int batch, Rng& rng) {
  DomainBatch b;
  int d = ds.dims;
  b.source_features = Tensor({batch, d});
  b.target_features = Tensor({batch, d});
  b.labels.resize(batch);
  for (int i = 0; i < batch; ++i) {
    int si = static_cast<int>(rng.uniform_index(ds.source_train.size()));
    int ti = static_cast<int>(rng.uniform_index(ds.target_train.size()));
    for (int j = 0; j < d; ++j) {
      b.source_features.at(i, j) = ds.source_train.x.at(si, j);
      b.target_features.at(i, j) = ds.target_train.x.at(ti, j);
    }
    b.labels[i] = ds.source_train.y[si];
  }
  return b;
}

inline Tensor probe_subset(const TwoDomainDataset& ds, int probe_size) {
  int n = std::min(probe_size, ds.target_train.size());
  Tensor probe({n, ds.dims});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < ds.dims; ++j) probe.at(i, j) = ds.target_train.x.at(i, j);
  return probe;
}
}  // namespace detail

// Pipeline: source-only pretraining, classifier-column augmentation for the
// augmented objectives, then the alternating loop (classifier/discriminator
// step first, feature step second). Entropy over the fixed probe subset is
// refreshed every entropy_log_every steps and carried forward in between.
inline TrainOutcome train_uda(const RunConfig& cfg, const TwoDomainDataset& ds) {
  cfg.validate();
  if (ds.source_train.size() < 1 || ds.target_train.size() < 1)
    throw std::invalid_argument("train_uda: dataset splits missing");
  if (!splits_disjoint(ds.target_val, ds.target_test))
    throw std::invalid_argument("train_uda: validation and test splits overlap");

  Rng rng(cfg.seed);
  TrainOutcome out;
  AdversarialModel& model = out.model;
  model.objective = ObjectiveKind::source_only;  // pretraining phase
  model.num_classes = ds.classes;

  std::vector<int> widths = {ds.dims};
  widths.insert(widths.end(), cfg.feature_widths.begin(), cfg.feature_widths.end());
  model.feature = Mlp::make(widths, Activation::relu, rng);
  int feat_dim = widths.back();
  model.classifier = Mlp::make({feat_dim, ds.classes}, Activation::relu, rng);
  model.discriminator = cfg.discriminator_hidden > 0
                            ? Mlp::make({feat_dim, cfg.discriminator_hidden, 1}, Activation::relu, rng)
                            : Mlp::make({feat_dim, 1}, Activation::relu, rng);
  double pre_lr = cfg.pretrain_learning_rate > 0 ? cfg.pretrain_learning_rate : cfg.learning_rate;
  model.opt_classifier = AdamOptimizer({.learning_rate = pre_lr});
  model.opt_feature = AdamOptimizer({.learning_rate = pre_lr});

  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    DomainBatch b = detail::sample_batch(ds, cfg.batch_size, rng);
    alternating_step(model, b, cfg.weights, StepMode::classifier);
    alternating_step(model, b, cfg.weights, StepMode::feature);
  }

  model.objective = cfg.objective;
  if (model.augmented()) {
    auto [w2, b2] = augment_classifier_column(model.classifier.weights[0], model.classifier.biases[0]);
    model.classifier.weights[0] = std::move(w2);
    model.classifier.biases[0] = std::move(b2);
  }
  // Optimizer moments restart with the adaptation phase (shapes change for
  // the augmented head).
  model.opt_classifier = AdamOptimizer({.learning_rate = cfg.learning_rate});
  model.opt_feature = AdamOptimizer({.learning_rate = cfg.learning_rate});

  Tensor probe = detail::probe_subset(ds, cfg.probe_size);
  double entropy = prediction_entropy(detail::prediction_scores(model, probe));

  double initial_magnitude = -1.0;
  int divergent_streak = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    DomainBatch b = detail::sample_batch(ds, cfg.batch_size, rng);
    StepResult rc = alternating_step(model, b, cfg.weights, StepMode::classifier);
    StepResult rf = alternating_step(model, b, cfg.weights, StepMode::feature);

    double magnitude = std::fabs(rc.loss_c) + std::fabs(rf.loss_f);
    if (initial_magnitude < 0) initial_magnitude = std::max(magnitude, 1e-3);
    divergent_streak = magnitude > 10.0 * initial_magnitude ? divergent_streak + 1 : 0;
    if (divergent_streak >= 100)
      throw numeric_error("train_uda: diverged at step " + std::to_string(step) + " (|loss| " +
                          std::to_string(magnitude) + " vs initial " +
                          std::to_string(initial_magnitude) + ")");

    if ((step + 1) % cfg.entropy_log_every == 0 || step + 1 == cfg.steps)
      entropy = prediction_entropy(detail::prediction_scores(model, probe));
    out.log.append({step + 1, rf.loss_c, rf.loss_d_or_aux, rf.loss_f, entropy});
  }
  if (cfg.steps == 0) out.log.append({1, 0, 0, 0, entropy});

  out.val_eval = evaluate(model, ds.target_val);
  out.test_eval = evaluate(model, ds.target_test);
  return out;
}

// ---- supervised model selection ----

struct SeedSelection {
  uint64_t seed = 0;
  int best_index = -1;      // grid index with the highest validation accuracy
  double val_top1 = 0;
  double test_top1 = 0;
  double final_entropy = 0;
};

struct SelectionResult {
  std::vector<SeedSelection> seeds;
  int best_index = -1;          // most frequently selected grid index
  double mean_test_top1 = 0;
  double stderr_test_top1 = 0;  // sample std / sqrt(#seeds)
};

// Trains every grid config for every seed (dataset and run seeds both vary
// with the trial seed), picks the best per seed by validation accuracy, and
// aggregates test accuracy across seeds. Runs are independent, so trials are
// dispatched across threads and merged by index.
inline SelectionResult select_model(const std::vector<RunConfig>& grid,
                                    const SyntheticDomainSpec& base_spec,
                                    const std::vector<uint64_t>& seeds, int threads = 0) {
  if (grid.empty()) throw std::invalid_argument("select_model: empty grid");
  if (seeds.empty()) throw std::invalid_argument("select_model: need at least one seed");
  struct Cell {
    double val = 0, test = 0, entropy = 0;
  };
  std::vector<std::vector<Cell>> table(seeds.size(), std::vector<Cell>(grid.size()));

  std::vector<std::pair<size_t, size_t>> jobs;
  for (size_t s = 0; s < seeds.size(); ++s)
    for (size_t c = 0; c < grid.size(); ++c) jobs.emplace_back(s, c);

  int worker_count = threads > 0 ? threads
                                 : static_cast<int>(std::min<size_t>(
                                       jobs.size(), std::max(1u, std::thread::hardware_concurrency())));
  std::vector<std::thread> workers;
  std::atomic<size_t> next{0};
  std::vector<std::string> failures(jobs.size());
  for (int w = 0; w < worker_count; ++w)
    workers.emplace_back([&] {
      while (true) {
        size_t j = next.fetch_add(1);
        if (j >= jobs.size()) return;
        auto [s, c] = jobs[j];
        try {
          SyntheticDomainSpec spec = base_spec;
          spec.seed = base_spec.seed + seeds[s];
          TwoDomainDataset ds = make_two_domain_dataset(spec);
          RunConfig cfg = grid[c];
          cfg.seed = cfg.seed + seeds[s];
          TrainOutcome outcome = train_uda(cfg, ds);
          table[s][c] = {outcome.val_eval.top1, outcome.test_eval.top1, outcome.log.final_entropy()};
        } catch (const std::exception& e) {
          failures[j] = e.what();
        }
      }
    });
  for (std::thread& t : workers) t.join();
  for (size_t j = 0; j < jobs.size(); ++j)
    if (!failures[j].empty())
      throw numeric_error("select_model: trial failed: " + failures[j]);

  SelectionResult result;
  std::vector<int> votes(grid.size(), 0);
  double mean = 0;
  for (size_t s = 0; s < seeds.size(); ++s) {
    int best = 0;
    for (size_t c = 1; c < grid.size(); ++c)
      if (table[s][c].val > table[s][best].val) best = static_cast<int>(c);
    votes[best] += 1;
    result.seeds.push_back({seeds[s], best, table[s][best].val, table[s][best].test,
                            table[s][best].entropy});
    mean += table[s][best].test;
  }
  mean /= seeds.size();
  double var = 0;
  for (const SeedSelection& s : result.seeds) var += (s.test_top1 - mean) * (s.test_top1 - mean);
  result.mean_test_top1 = mean;
  result.stderr_test_top1 =
      seeds.size() > 1 ? std::sqrt(var / (seeds.size() - 1)) / std::sqrt(double(seeds.size())) : 0.0;
  result.best_index = 0;
  for (size_t c = 1; c < grid.size(); ++c)
    if (votes[c] > votes[result.best_index]) result.best_index = static_cast<int>(c);
  return result;
}

}  // namespace uda
