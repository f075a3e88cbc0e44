#pragma once

#include <functional>
#include <vector>

#include "uda/adam.hpp"
#include "uda/graph.hpp"
#include "uda/nn.hpp"
#include "uda/tensor.hpp"

// Domain-adversarial training objectives. Three variants share one setup:
// a feature extractor f, a classifier over f(x), and (for the baseline) a
// binary domain discriminator. All losses below are the maximization
// objectives as written in the math; training steps minimize their negation.

namespace uda {

// ---- score types ----

inline void check_probability_rows(const Tensor& p, const char* what) {
  auto [rows, cols] = [&] {
    if (p.rank() == 1) return std::pair<int, int>{1, p.extent(0)};
    if (p.rank() == 2) return std::pair<int, int>{p.extent(0), p.extent(1)};
    throw std::invalid_argument(std::string(what) + ": expected rank 1 or 2");
  }();
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      double v = p[static_cast<int64_t>(i) * cols + j];
      if (v < 0.0)
        throw std::invalid_argument(std::string(what) + ": negative probability at row " +
                                    std::to_string(i));
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) +
                                  " sums to " + std::to_string(sum) + ", not 1");
  }
}

// N-way class probabilities C(f(x), y).
struct ClassScore {
  Tensor probs;  // [N]
  static ClassScore checked(Tensor p) {
    check_probability_rows(p, "ClassScore");
    return ClassScore{std::move(p)};
  }
  int num_classes() const { return probs.extent(0); }
};

// (N+1)-way probabilities; the last entry is the target-domain class.
struct AugmentedClassScore {
  Tensor probs;  // [N+1]
  static AugmentedClassScore checked(Tensor p) {
    check_probability_rows(p, "AugmentedClassScore");
    if (p.extent(0) < 2)
      throw std::invalid_argument("AugmentedClassScore: needs at least one real class plus target");
    return AugmentedClassScore{std::move(p)};
  }
  int num_classes() const { return probs.extent(0) - 1; }
  double target_prob() const { return probs[probs.numel() - 1]; }
};

// Conditional score restricted to the N real classes:
// C(y|Y) = C(y) / (1 - C(N+1)).
inline Tensor conditional_class_score(const AugmentedClassScore& s) {
  int n = s.num_classes();
  double denom = 1.0 - s.target_prob();
  if (denom < 1e-12)
    throw std::invalid_argument("conditional_class_score: degenerate denominator, C(N+1) >= 1 - 1e-12");
  Tensor out({n});
  for (int i = 0; i < n; ++i) out[i] = s.probs[i] / denom;
  return out;
}

// Batch version: rows of [B, N+1] -> rows of [B, N].
inline Tensor conditional_scores(const Tensor& probs) {
  if (probs.rank() != 2 || probs.extent(1) < 2)
    throw std::invalid_argument("conditional_scores: expected [B, N+1]");
  int b = probs.extent(0), n = probs.extent(1) - 1;
  Tensor out({b, n});
  for (int i = 0; i < b; ++i) {
    double denom = 1.0 - probs.at(i, n);
    if (denom < 1e-12)
      throw std::invalid_argument("conditional_scores: degenerate denominator at row " +
                                  std::to_string(i));
    for (int j = 0; j < n; ++j) out.at(i, j) = probs.at(i, j) / denom;
  }
  return out;
}

// Mean over rows of -sum_i p_i log p_i, with 0 log 0 := 0.
inline double prediction_entropy(const Tensor& rows) {
  auto [b, n] = [&] {
    if (rows.rank() == 1) return std::pair<int, int>{1, rows.extent(0)};
    if (rows.rank() == 2) return std::pair<int, int>{rows.extent(0), rows.extent(1)};
    throw std::invalid_argument("prediction_entropy: expected rank 1 or 2");
  }();
  double total = 0.0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < n; ++j) {
      double p = rows[static_cast<int64_t>(i) * n + j];
      if (p < 0.0)
        throw std::invalid_argument("prediction_entropy: negative probability at row " +
                                    std::to_string(i));
      if (p > 0.0) total -= p * std::log(p);
    }
  return total / b;
}

// ---- batches and weights ----

// Labeled source examples and unlabeled target examples, as feature rows.
struct DomainBatch {
  Tensor source_features;   // [B_s, d]
  std::vector<int> labels;  // B_s entries in 0..N-1
  Tensor target_features;   // [B_t, d]
};

inline void check_adversarial_batch(const DomainBatch& b) {
  if (b.source_features.rank() != 2 || b.source_features.extent(0) < 1)
    throw std::invalid_argument("DomainBatch: empty source side");
  if (b.target_features.rank() != 2 || b.target_features.extent(0) < 1)
    throw std::invalid_argument("DomainBatch: empty target side");
  if (static_cast<int>(b.labels.size()) != b.source_features.extent(0))
    throw std::invalid_argument("DomainBatch: one label per source example required");
}

struct ObjectiveWeights {
  double lambda = 1.0;  // adversarial weight
  double gamma = 0.0;   // entropy weight; tau = lambda * gamma
  double beta = 1.0;    // target-term weight in the classifier objective

  void validate() const {
    if (lambda < 0 || gamma < 0 || beta < 0)
      throw std::invalid_argument("ObjectiveWeights: lambda, gamma, beta must be nonnegative");
  }
  double tau() const { return lambda * gamma; }
};

// Maps features [B,d] on a graph to probability rows: [B,N] (classifier),
// [B,N+1] (augmented classifier) or [B] in [0,1] (discriminator).
using ScoreFn = std::function<Value(Graph&, Value)>;

namespace detail {
inline Value checked_scores(Graph& g, const ScoreFn& fn, Value feats, int batch, const char* what) {
  Value p = fn(g, feats);
  const Tensor& t = g.value(p);
  if (t.rank() != 2 || t.extent(0) != batch)
    throw std::invalid_argument(std::string(what) + ": expected one probability row per example");
  check_probability_rows(t, what);
  return p;
}

inline Value checked_discriminator(Graph& g, const ScoreFn& fn, Value feats, int batch) {
  Value p = fn(g, feats);
  const Tensor& t = g.value(p);
  if (t.rank() != 1 || t.extent(0) != batch)
    throw std::invalid_argument("discriminator: expected one score per example");
  for (int64_t i = 0; i < t.numel(); ++i)
    if (t[i] < 0.0 || t[i] > 1.0)
      throw std::invalid_argument("discriminator: output outside [0,1] at row " + std::to_string(i));
  return p;
}

// mean_i log(1 - v_i), clamped log.
inline Value mean_log_one_minus(Graph& g, Value v) {
  return mean_all(g, log_op(g, add_scalar(g, neg(g, v), 1.0)));
}
}  // namespace detail

// ---- DANN (separate discriminator) ----

struct DannLosses {
  Value classifier;     // L_C  = E_S log C(f(x), y)
  Value discriminator;  // L_D  = E_S log(1 - D(f)) + E_T log D(f)
  Value feature;        // L_F  = L_C + lambda E_T log(1 - D(f))
};

inline DannLosses dann_losses(Graph& g, Value src_features, const std::vector<int>& labels,
                              Value tgt_features, const ScoreFn& classifier,
                              const ScoreFn& discriminator, double lambda) {
  int bs = g.value(src_features).extent(0);
  int bt = g.value(tgt_features).extent(0);
  Value class_probs = detail::checked_scores(g, classifier, src_features, bs, "classifier");
  Value d_src = detail::checked_discriminator(g, discriminator, src_features, bs);
  Value d_tgt = detail::checked_discriminator(g, discriminator, tgt_features, bt);

  Value loss_c = mean_all(g, log_op(g, row_gather(g, class_probs, labels)));
  Value loss_d = add(g, detail::mean_log_one_minus(g, d_src), mean_all(g, log_op(g, d_tgt)));
  Value loss_f = add(g, loss_c, scale(g, detail::mean_log_one_minus(g, d_tgt), lambda));
  return {loss_c, loss_d, loss_f};
}

inline DannLosses dann_losses(Graph& g, const DomainBatch& batch, const ScoreFn& classifier,
                              const ScoreFn& discriminator, double lambda) {
  check_adversarial_batch(batch);
  Value src = g.constant(batch.source_features);
  Value tgt = g.constant(batch.target_features);
  return dann_losses(g, src, batch.labels, tgt, classifier, discriminator, lambda);
}

// ---- DANN-SS (augmented (N+1)-way classifier) ----

struct DannSsLosses {
  Value classifier;  // L~_C = E_S log C~(y) + beta E_T log C~(N+1)
  Value feature;     // L~_F = E_S log C~(y|Y) + lambda E_T log(1 - C~(N+1))
  Value aux_target;  // beta E_T log C~(N+1), the domain part of L~_C
};

namespace detail {
// log C~(y|Y) per source row, computed in the log domain:
// log C~(y) - log(1 - C~(N+1)).
inline Value mean_log_conditional(Graph& g, Value probs, const std::vector<int>& labels) {
  int n1 = g.value(probs).extent(1);
  int b = g.value(probs).extent(0);
  Value py = row_gather(g, probs, labels);
  Value plast = reshape(g, slice(g, probs, 1, n1 - 1, n1), {b});
  Value log_denom = log_op(g, add_scalar(g, neg(g, plast), 1.0));
  return mean_all(g, sub(g, log_op(g, py), log_denom));
}

inline Value last_column(Graph& g, Value probs) {
  int n1 = g.value(probs).extent(1);
  int b = g.value(probs).extent(0);
  return reshape(g, slice(g, probs, 1, n1 - 1, n1), {b});
}
}  // namespace detail

inline DannSsLosses dann_ss_losses(Graph& g, Value src_features, const std::vector<int>& labels,
                                   Value tgt_features, const ScoreFn& aug_classifier, double lambda,
                                   double beta) {
  int bs = g.value(src_features).extent(0);
  int bt = g.value(tgt_features).extent(0);
  Value p_src = detail::checked_scores(g, aug_classifier, src_features, bs, "augmented classifier");
  Value p_tgt = detail::checked_scores(g, aug_classifier, tgt_features, bt, "augmented classifier");
  int n1 = g.value(p_src).extent(1);
  if (n1 < 2) throw std::invalid_argument("dann_ss_losses: classifier must have N+1 >= 2 outputs");

  Value tgt_last = detail::last_column(g, p_tgt);
  Value aux = scale(g, mean_all(g, log_op(g, tgt_last)), beta);
  Value loss_c = add(g, mean_all(g, log_op(g, row_gather(g, p_src, labels))), aux);
  Value loss_f = add(g, detail::mean_log_conditional(g, p_src, labels),
                     scale(g, detail::mean_log_one_minus(g, tgt_last), lambda));
  return {loss_c, loss_f, aux};
}

inline DannSsLosses dann_ss_losses(Graph& g, const DomainBatch& batch, const ScoreFn& aug_classifier,
                                   double lambda, double beta) {
  check_adversarial_batch(batch);
  Value src = g.constant(batch.source_features);
  Value tgt = g.constant(batch.target_features);
  return dann_ss_losses(g, src, batch.labels, tgt, aug_classifier, lambda, beta);
}

// ---- DANN-EM (entropy-regularized feature objective) ----

// L^_F = E_S log C~(y|Y)
//      + lambda E_T [ gamma sum_{i<=N} C~(i) log C~(i) + log(1 - C~(N+1)) ].
// The entropy term uses the joint scores C~(i), not the conditional ones.
inline Value dann_em_feature_loss(Graph& g, Value src_features, const std::vector<int>& labels,
                                  Value tgt_features, const ScoreFn& aug_classifier, double lambda,
                                  double gamma) {
  int bs = g.value(src_features).extent(0);
  int bt = g.value(tgt_features).extent(0);
  Value p_src = detail::checked_scores(g, aug_classifier, src_features, bs, "augmented classifier");
  Value p_tgt = detail::checked_scores(g, aug_classifier, tgt_features, bt, "augmented classifier");
  int n1 = g.value(p_src).extent(1);
  if (n1 < 2) throw std::invalid_argument("dann_em_feature_loss: classifier must have N+1 >= 2 outputs");

  Value real = slice(g, p_tgt, 1, 0, n1 - 1);  // [B_t, N]
  Value neg_entropy = sum_axis(g, mul(g, real, log_op(g, real)), 1);  // [B_t]
  Value tgt_last = detail::last_column(g, p_tgt);
  Value log_not_target = log_op(g, add_scalar(g, neg(g, tgt_last), 1.0));  // [B_t]
  Value bracket = mean_all(g, add(g, scale(g, neg_entropy, gamma), log_not_target));
  return add(g, detail::mean_log_conditional(g, p_src, labels), scale(g, bracket, lambda));
}

inline Value dann_em_feature_loss(Graph& g, const DomainBatch& batch, const ScoreFn& aug_classifier,
                                  double lambda, double gamma) {
  check_adversarial_batch(batch);
  Value src = g.constant(batch.source_features);
  Value tgt = g.constant(batch.target_features);
  return dann_em_feature_loss(g, src, batch.labels, tgt, aug_classifier, lambda, gamma);
}

// ---- classifier augmentation ----

// Appends an (N+1)st output whose weight column and bias are the mean of the
// existing N. Pre-softmax scores of the first N classes are unchanged.
inline std::pair<Tensor, Tensor> augment_classifier_column(const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2 || bias.rank() != 1 || weights.extent(1) != bias.extent(0))
    throw std::invalid_argument("augment_classifier_column: expected W [d,N] and b [N]");
  int d = weights.extent(0), n = weights.extent(1);
  Tensor w2({d, n + 1});
  Tensor b2({n + 1});
  for (int i = 0; i < d; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) {
      w2.at(i, j) = weights.at(i, j);
      mean += weights.at(i, j);
    }
    w2.at(i, n) = mean / n;
  }
  double bmean = 0.0;
  for (int j = 0; j < n; ++j) {
    b2[j] = bias[j];
    bmean += bias[j];
  }
  b2[n] = bmean / n;
  return {std::move(w2), std::move(b2)};
}

// ---- alternating optimization ----

enum class ObjectiveKind { source_only, dann, dann_ss, dann_em };

enum class StepMode { classifier, feature };

// Feature extractor + classifier head (+ discriminator for plain DANN), with
// one Adam optimizer per parameter partition.
struct AdversarialModel {
  ObjectiveKind objective = ObjectiveKind::source_only;
  int num_classes = 0;
  Mlp feature;
  Mlp classifier;     // outputs N (source_only/dann) or N+1 (ss/em) logits
  Mlp discriminator;  // outputs 1 logit; only used by dann
  AdamOptimizer opt_classifier;
  AdamOptimizer opt_feature;

  bool augmented() const {
    return objective == ObjectiveKind::dann_ss || objective == ObjectiveKind::dann_em;
  }
  bool has_discriminator() const { return objective == ObjectiveKind::dann; }
};

struct StepResult {
  double loss_c = 0.0;         // classifier objective value
  double loss_d_or_aux = 0.0;  // L_D for dann; beta-weighted target term for ss/em
  double loss_f = 0.0;         // feature objective value
};

// One update in the given mode: classifier mode maximizes the classifier
// (and, for DANN, discriminator) objective with theta_f held fixed; feature
// mode maximizes L_F / L~_F / L^_F with the heads held fixed. Implemented by
// one Adam step on the negated objective.
inline StepResult alternating_step(AdversarialModel& model, const DomainBatch& batch,
                                   const ObjectiveWeights& weights, StepMode mode) {
  bool source_only = model.objective == ObjectiveKind::source_only;
  if (source_only) {
    if (batch.source_features.rank() != 2 || batch.source_features.extent(0) < 1)
      throw std::invalid_argument("DomainBatch: empty source side");
    if (static_cast<int>(batch.labels.size()) != batch.source_features.extent(0))
      throw std::invalid_argument("DomainBatch: one label per source example required");
  } else {
    check_adversarial_batch(batch);
  }
  weights.validate();
  Graph g;
  bool feature_mode = mode == StepMode::feature;
  BoundMlp feat = bind(g, model.feature, feature_mode);
  BoundMlp head = bind(g, model.classifier, !feature_mode);
  BoundMlp disc;
  if (model.has_discriminator()) disc = bind(g, model.discriminator, !feature_mode);

  Value src_f = feat(g, g.constant(batch.source_features));
  Value tgt_f;
  if (!source_only) tgt_f = feat(g, g.constant(batch.target_features));
  ScoreFn classify = [&](Graph& gg, Value f) { return softmax(gg, head(gg, f)); };

  StepResult result;
  Value objective;  // maximization value to step on
  switch (model.objective) {
    case ObjectiveKind::source_only: {
      Value probs = detail::checked_scores(g, classify, src_f, g.value(src_f).extent(0), "classifier");
      Value loss_c = mean_all(g, log_op(g, row_gather(g, probs, batch.labels)));
      result.loss_c = g.value(loss_c).item();
      result.loss_f = result.loss_c;
      objective = loss_c;
      break;
    }
    case ObjectiveKind::dann: {
      ScoreFn discriminate = [&](Graph& gg, Value f) {
        return sigmoid(gg, reshape(gg, disc(gg, f), {gg.value(f).extent(0)}));
      };
      DannLosses l = dann_losses(g, src_f, batch.labels, tgt_f, classify, discriminate, weights.lambda);
      result = {g.value(l.classifier).item(), g.value(l.discriminator).item(), g.value(l.feature).item()};
      objective = feature_mode ? l.feature : add(g, l.classifier, l.discriminator);
      break;
    }
    case ObjectiveKind::dann_ss: {
      DannSsLosses l =
          dann_ss_losses(g, src_f, batch.labels, tgt_f, classify, weights.lambda, weights.beta);
      result = {g.value(l.classifier).item(), g.value(l.aux_target).item(), g.value(l.feature).item()};
      objective = feature_mode ? l.feature : l.classifier;
      break;
    }
    case ObjectiveKind::dann_em: {
      DannSsLosses l =
          dann_ss_losses(g, src_f, batch.labels, tgt_f, classify, weights.lambda, weights.beta);
      Value em =
          dann_em_feature_loss(g, src_f, batch.labels, tgt_f, classify, weights.lambda, weights.gamma);
      result = {g.value(l.classifier).item(), g.value(l.aux_target).item(), g.value(em).item()};
      objective = feature_mode ? em : l.classifier;
      break;
    }
  }

  g.backward(neg(g, objective));

  auto step_partition = [&](BoundMlp& bound, Mlp& net, AdamOptimizer& opt) {
    std::vector<Tensor> grads = bound.grads(g);
    for (const Tensor& t : grads)
      if (!t.all_finite())
        throw numeric_error("alternating_step: non-finite gradient, step aborted");
    opt.step(net.params(), grads);
  };

  if (feature_mode) {
    step_partition(feat, model.feature, model.opt_feature);
  } else {
    if (model.has_discriminator()) {
      // One optimizer instance covers both heads; concatenate partitions.
      std::vector<Tensor> grads = head.grads(g);
      std::vector<Tensor> dgrads = disc.grads(g);
      grads.insert(grads.end(), dgrads.begin(), dgrads.end());
      for (const Tensor& t : grads)
        if (!t.all_finite())
          throw numeric_error("alternating_step: non-finite gradient, step aborted");
      std::vector<Tensor*> params = model.classifier.params();
      std::vector<Tensor*> dparams = model.discriminator.params();
      params.insert(params.end(), dparams.begin(), dparams.end());
      model.opt_classifier.step(params, grads);
    } else {
      step_partition(head, model.classifier, model.opt_classifier);
    }
  }
  return result;
}

}  // namespace uda
