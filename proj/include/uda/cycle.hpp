#pragma once

#include <string>
#include <vector>

#include "uda/adam.hpp"
#include "uda/checkpoint.hpp"
#include "uda/nn.hpp"
#include "uda/rng.hpp"

// Attribute-conditioned cycle-consistent translation at desk scale. A
// generator G(x, a) maps source images to target style a; an inverse
// generator maps back; one discriminator per attribute scores real vs
// generated. Least-squares adversarial losses are the default (minimized);
// the log-likelihood form from the written objectives is available as a
// switch (maximized, like the feature-level objectives).

namespace uda {

// Discrete attribute with a one-hot code; codes can be blended with a
// continuous interpolant t in [0, 1].
struct AttributeCode {
  int index = 0;
  int num_attributes = 2;

  Tensor one_hot() const {
    if (index < 0 || index >= num_attributes)
      throw std::invalid_argument("AttributeCode: index out of range");
    Tensor t({num_attributes});
    t[index] = 1.0;
    return t;
  }

  static Tensor interpolated(const AttributeCode& a0, const AttributeCode& a1, double t) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("AttributeCode: t must be in [0,1]");
    if (a0.num_attributes != a1.num_attributes)
      throw std::invalid_argument("AttributeCode: mismatched attribute sets");
    Tensor c0 = a0.one_hot(), c1 = a1.one_hot();
    Tensor out({a0.num_attributes});
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = (1.0 - t) * c0[i] + t * c1[i];
    return out;
  }
};

// Pool of previously generated images; when full, pushes replace a uniformly
// random slot. Samples are drawn without replacement.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity = 1000) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("HistoryBuffer: capacity must be >= 1");
  }

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(items_.size()); }

  void push(const Tensor& rows, Rng& rng) {
    if (rows.rank() != 2) throw std::invalid_argument("HistoryBuffer::push: expected [B, dim]");
    if (dim_ < 0) dim_ = rows.extent(1);
    if (rows.extent(1) != dim_)
      throw std::invalid_argument("HistoryBuffer::push: image size changed");
    for (int i = 0; i < rows.extent(0); ++i) {
      std::vector<double> item(rows.values().begin() + static_cast<int64_t>(i) * dim_,
                               rows.values().begin() + static_cast<int64_t>(i + 1) * dim_);
      if (size() < capacity_) {
        items_.push_back(std::move(item));
      } else {
        items_[static_cast<size_t>(rng.uniform_index(capacity_))] = std::move(item);
      }
    }
  }

  Tensor sample(int count, Rng& rng) const {
    if (items_.empty()) throw std::invalid_argument("HistoryBuffer::sample: buffer is empty");
    if (count < 1 || count > size())
      throw std::invalid_argument("HistoryBuffer::sample: count must be in [1, size]");
    std::vector<int> order = rng.permutation(size());
    Tensor out({count, dim_});
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < dim_; ++j) out.at(i, j) = items_[order[i]][j];
    return out;
  }

 private:
  int capacity_;
  int dim_ = -1;
  std::vector<std::vector<double>> items_;
};

// Pushes new images, then returns a uniform sample mixing old and new.
inline Tensor buffer_push_sample(HistoryBuffer& buffer, const Tensor& new_images, int sample_count,
                                 Rng& rng) {
  if (sample_count > buffer.capacity())
    throw std::invalid_argument("buffer_push_sample: sample_count exceeds capacity");
  buffer.push(new_images, rng);
  return buffer.sample(std::min(sample_count, buffer.size()), rng);
}

// Generators write a residual on top of the input image, so the identity map
// is representable exactly (zero weights). Shared mode conditions one
// generator pair on the attribute code; unshared mode keeps one pair per
// attribute and uses the code only to select it.
struct TranslationModel {
  int num_attributes = 2;
  int image_dim = 0;
  bool shared = true;
  int patch_side = 1;  // discriminator granularity; 1 = per-example scalar

  std::vector<Mlp> gen_fwd;         // shared: size 1; unshared: one per attribute
  std::vector<Mlp> gen_inv;
  std::vector<Mlp> discriminators;  // always one per attribute

  static TranslationModel make(int image_dim, int num_attributes, bool shared, int hidden,
                               int patch_side, Rng& rng) {
    if (patch_side < 1 || image_dim % (patch_side * patch_side) != 0)
      throw std::invalid_argument("TranslationModel: patch_side must divide the image");
    TranslationModel m;
    m.num_attributes = num_attributes;
    m.image_dim = image_dim;
    m.shared = shared;
    m.patch_side = patch_side;
    int gen_in = image_dim + (shared ? num_attributes : 0);
    int copies = shared ? 1 : num_attributes;
    for (int i = 0; i < copies; ++i) {
      m.gen_fwd.push_back(Mlp::make({gen_in, hidden, image_dim}, Activation::relu, rng));
      m.gen_inv.push_back(Mlp::make({gen_in, hidden, image_dim}, Activation::relu, rng));
    }
    int cell = image_dim / (patch_side * patch_side);
    for (int a = 0; a < num_attributes; ++a)
      m.discriminators.push_back(Mlp::make({cell, hidden, 1}, Activation::relu, rng));
    return m;
  }

  void check_attribute(int a) const {
    if (a < 0 || a >= num_attributes)
      throw std::invalid_argument("TranslationModel: unknown attribute " + std::to_string(a));
  }

  NamedTensors named_tensors() const {
    NamedTensors out;
    auto dump = [&](const char* prefix, const std::vector<Mlp>& nets) {
      for (size_t i = 0; i < nets.size(); ++i)
        for (size_t l = 0; l < nets[i].weights.size(); ++l) {
          std::string base = std::string(prefix) + "." + std::to_string(i) + "." + std::to_string(l);
          out.emplace_back(base + ".w", nets[i].weights[l]);
          out.emplace_back(base + ".b", nets[i].biases[l]);
        }
    };
    dump("gen_fwd", gen_fwd);
    dump("gen_inv", gen_inv);
    dump("disc", discriminators);
    return out;
  }
};

// Parameter bindings for one training graph.
struct BoundTranslation {
  const TranslationModel* model = nullptr;
  std::vector<BoundMlp> fwd, inv, disc;

  static BoundTranslation bind_all(Graph& g, const TranslationModel& m, bool gen_grad,
                                   bool disc_grad) {
    BoundTranslation b;
    b.model = &m;
    for (const Mlp& net : m.gen_fwd) b.fwd.push_back(bind(g, net, gen_grad));
    for (const Mlp& net : m.gen_inv) b.inv.push_back(bind(g, net, gen_grad));
    for (const Mlp& net : m.discriminators) b.disc.push_back(bind(g, net, disc_grad));
    return b;
  }

  // x: [B, dim] -> translated [B, dim]. For shared models the code may be any
  // convex blend; for unshared models only a discrete attribute is valid.
  Value generate(Graph& g, Value x, const Tensor& code, int attribute, bool forward_dir) const {
    const std::vector<BoundMlp>& nets = forward_dir ? fwd : inv;
    int b = g.value(x).extent(0);
    if (model->shared) {
      Tensor rows({b, static_cast<int>(code.numel())});
      for (int i = 0; i < b; ++i)
        for (int64_t j = 0; j < code.numel(); ++j) rows.at(i, static_cast<int>(j)) = code[j];
      Value input = concat(g, {x, g.constant(rows)}, 1);
      return add(g, x, nets[0](g, input));
    }
    model->check_attribute(attribute);
    return add(g, x, nets[static_cast<size_t>(attribute)](g, x));
  }

  Value generate(Graph& g, Value x, const AttributeCode& a, bool forward_dir) const {
    return generate(g, x, a.one_hot(), a.index, forward_dir);
  }

  // Raw discriminator scores, one per patch cell: [B, patch_side^2].
  Value discriminate(Graph& g, Value x, int attribute) const {
    model->check_attribute(attribute);
    const BoundMlp& d = disc[static_cast<size_t>(attribute)];
    int cells = model->patch_side * model->patch_side;
    if (cells == 1) return d(g, x);
    int cell_dim = model->image_dim / cells;
    std::vector<Value> scores;
    for (int c = 0; c < cells; ++c)
      scores.push_back(d(g, slice(g, x, 1, c * cell_dim, (c + 1) * cell_dim)));
    return concat(g, scores, 1);
  }
};

struct AcGanLosses {
  Value discriminator;  // least-squares: minimized; log form: maximized
  Value generator;
};

// Adversarial pair for one attribute. `fake` should be G(x_s, a) (or a
// history-buffer sample of such); `real` comes from the target images with
// attribute a.
inline AcGanLosses ac_gan_losses(Graph& g, const BoundTranslation& bound, Value real_images,
                                 Value fake_images, Value gen_output, int attribute,
                                 bool least_squares) {
  if (g.value(real_images).extent(0) < 1 || g.value(fake_images).extent(0) < 1)
    throw std::invalid_argument("ac_gan_losses: empty batch");
  Value d_real = bound.discriminate(g, real_images, attribute);
  Value d_fake = bound.discriminate(g, fake_images, attribute);
  Value d_gen = bound.discriminate(g, gen_output, attribute);
  if (least_squares) {
    Value dr = add_scalar(g, d_real, -1.0);
    Value loss_d = add(g, mean_all(g, mul(g, dr, dr)), mean_all(g, mul(g, d_fake, d_fake)));
    Value dg = add_scalar(g, d_gen, -1.0);
    Value loss_g = mean_all(g, mul(g, dg, dg));
    return {loss_d, loss_g};
  }
  // Written objectives: maximize log D(real) + log(1 - D(fake)) and
  // log D(G(x, a)) respectively, with sigmoid-squashed scores.
  Value p_real = sigmoid(g, d_real);
  Value p_fake = sigmoid(g, d_fake);
  Value p_gen = sigmoid(g, d_gen);
  Value loss_d = add(g, mean_all(g, log_op(g, p_real)),
                     mean_all(g, log_op(g, add_scalar(g, neg(g, p_fake), 1.0))));
  Value loss_g = mean_all(g, log_op(g, p_gen));
  return {loss_d, loss_g};
}

// Convenience form matching the batch-level signature: builds the fake batch
// from the generator itself (no history buffer).
inline AcGanLosses ac_gan_losses(Graph& g, const BoundTranslation& bound, const Tensor& source_batch,
                                 const Tensor& target_batch_a, int attribute, bool least_squares) {
  Value xs = g.constant(source_batch);
  Value xt = g.constant(target_batch_a);
  AttributeCode a{attribute, bound.model->num_attributes};
  Value fake = bound.generate(g, xs, a, true);
  return ac_gan_losses(g, bound, xt, fake, fake, attribute, least_squares);
}

// E_S ||F(G(x,a),a) - x||_1 + E_{T_a} ||G(F(x,a),a) - x||_1, means over
// pixels and batch. Minimized.
inline Value cycle_loss(Graph& g, const BoundTranslation& bound, Value source_batch,
                        Value target_batch_a, int attribute) {
  AttributeCode a{attribute, bound.model->num_attributes};
  Value round_s = bound.generate(g, bound.generate(g, source_batch, a, true), a, false);
  Value round_t = bound.generate(g, bound.generate(g, target_batch_a, a, false), a, true);
  Value l_s = mean_all(g, abs_op(g, sub(g, round_s, source_batch)));
  Value l_t = mean_all(g, abs_op(g, sub(g, round_t, target_batch_a)));
  return add(g, l_s, l_t);
}

inline Value cycle_loss(Graph& g, const BoundTranslation& bound, const Tensor& source_batch,
                        const Tensor& target_batch_a, int attribute) {
  if (source_batch.extent(0) < 1 || target_batch_a.extent(0) < 1)
    throw std::invalid_argument("cycle_loss: empty batch");
  return cycle_loss(g, bound, g.constant(source_batch), g.constant(target_batch_a), attribute);
}

// G(x, (1-t) code(a0) + t code(a1)); t = 0 and t = 1 reduce bitwise to the
// discrete attributes. Only defined for shared-parameter generators.
inline Tensor interpolate_attribute(const TranslationModel& model, const Tensor& image_row,
                                    const AttributeCode& a0, const AttributeCode& a1, double t) {
  if (!model.shared)
    throw std::invalid_argument("interpolate_attribute: requires shared-parameter generators");
  Tensor code = AttributeCode::interpolated(a0, a1, t);
  Graph g;
  BoundTranslation bound = BoundTranslation::bind_all(g, model, false, false);
  Tensor row = image_row;
  if (row.rank() == 1) row = Tensor({1, static_cast<int>(row.numel())}, row.values());
  Value out = bound.generate(g, g.constant(row), code, a0.index, true);
  return g.value(out);
}

// ---- toy task with an analytic ground-truth translation ----

// Source images are smooth random patterns around mid-gray; target images
// with attribute a are independent patterns shifted by a per-attribute
// brightness delta. The exact translation G*(x, a) = x + delta_a is known, so
// the trained generator can be scored against it.
struct TranslationConfig {
  int image_side = 8;
  std::vector<std::string> attribute_names = {"day", "night"};
  std::vector<double> brightness_delta = {0.25, -0.25};
  bool shared_generators = true;
  bool least_squares = true;
  int patch_side = 1;
  double cycle_weight = 10.0;
  int steps = 2000;
  int batch = 32;
  int buffer_capacity = 1000;
  int buffer_sample = 32;
  double learning_rate = 2e-4;
  int hidden = 32;
  int pool = 256;        // pre-generated patterns per domain
  int eval_batch = 64;
  int log_every = 50;
  uint64_t seed = 0;

  int image_dim() const { return image_side * image_side; }
  int num_attributes() const { return static_cast<int>(attribute_names.size()); }

  void validate() const {
    if (attribute_names.size() != brightness_delta.size() || attribute_names.empty())
      throw std::invalid_argument("TranslationConfig: one brightness delta per attribute");
    if (steps < 0 || batch < 1 || pool < batch)
      throw std::invalid_argument("TranslationConfig: bad counts");
  }
};

inline Tensor smooth_pattern_rows(Rng& rng, int count, int side, double level) {
  // Uniform noise box-blurred once; values stay well inside [0,1] so the
  // brightness shifts below are clipping-free.
  Tensor rows({count, side * side});
  for (int n = 0; n < count; ++n) {
    std::vector<double> raw(static_cast<size_t>(side) * side);
    for (double& v : raw) v = rng.uniform(level - 0.12, level + 0.12);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double acc = 0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= side || xx < 0 || xx >= side) continue;
            acc += raw[static_cast<size_t>(yy) * side + xx];
            ++cnt;
          }
        rows.at(n, y * side + x) = acc / cnt;
      }
  }
  return rows;
}

struct TranslationMetricsRow {
  int step = 0;
  std::vector<double> loss_d;  // one per attribute
  double loss_g = 0;
  double cycle = 0;
  double gt_l1 = 0;  // L1 to the analytic ground-truth translation
};

struct TranslationResult {
  TranslationModel model;
  std::vector<TranslationMetricsRow> metrics;
};

namespace detail {
inline Tensor take_rows(const Tensor& pool, Rng& rng, int count) {
  Tensor out({count, pool.extent(1)});
  for (int i = 0; i < count; ++i) {
    int r = static_cast<int>(rng.uniform_index(pool.extent(0)));
    for (int j = 0; j < pool.extent(1); ++j) out.at(i, j) = pool.at(r, j);
  }
  return out;
}
}  // namespace detail

// Alternates discriminator and generator updates. The discriminator sees
// history-buffer samples; the generator objective is adversarial plus
// cycle_weight times the cycle loss. Aborts when the generator loss exceeds
// 10x its initial value for 100 consecutive steps.
inline TranslationResult train_translation(const TranslationConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  int dim = cfg.image_dim();
  int na = cfg.num_attributes();

  Tensor source_pool = smooth_pattern_rows(rng, cfg.pool, cfg.image_side, 0.45);
  std::vector<Tensor> target_pools;
  for (int a = 0; a < na; ++a) {
    Tensor t = smooth_pattern_rows(rng, cfg.pool, cfg.image_side, 0.45);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] += cfg.brightness_delta[a];
    target_pools.push_back(std::move(t));
  }
  Tensor eval_sources = smooth_pattern_rows(rng, cfg.eval_batch, cfg.image_side, 0.45);

  TranslationResult result;
  result.model = TranslationModel::make(dim, na, cfg.shared_generators, cfg.hidden, cfg.patch_side,
                                        rng);
  TranslationModel& model = result.model;

  std::vector<HistoryBuffer> buffers(na, HistoryBuffer(cfg.buffer_capacity));
  std::vector<AdamOptimizer> disc_opts(na, AdamOptimizer({.learning_rate = cfg.learning_rate}));
  AdamOptimizer gen_opt({.learning_rate = cfg.learning_rate});

  auto gen_params = [&] {
    std::vector<Tensor*> out;
    for (Mlp& m : model.gen_fwd)
      for (Tensor* p : m.params()) out.push_back(p);
    for (Mlp& m : model.gen_inv)
      for (Tensor* p : m.params()) out.push_back(p);
    return out;
  };

  // Metrics use a separate stream so logging frequency never perturbs the
  // training trajectory.
  Rng metrics_rng(cfg.seed + 0x9e3779b97f4a7c15ull);
  auto measure = [&](int step) {
    TranslationMetricsRow row;
    row.step = step;
    Graph g;
    BoundTranslation bound = BoundTranslation::bind_all(g, model, false, false);
    Tensor xs = detail::take_rows(source_pool, metrics_rng, cfg.eval_batch);
    Value x = g.constant(xs);
    double gt_total = 0, adv_total = 0, cyc_total = 0;
    for (int a = 0; a < na; ++a) {
      Tensor xt = detail::take_rows(target_pools[a], metrics_rng, cfg.eval_batch);
      AttributeCode code{a, na};
      Value fake = bound.generate(g, x, code, true);
      AcGanLosses l = ac_gan_losses(g, bound, g.constant(xt), fake, fake, a, cfg.least_squares);
      row.loss_d.push_back(g.value(l.discriminator).item());
      adv_total += g.value(l.generator).item();
      cyc_total += g.value(cycle_loss(g, bound, x, g.constant(xt), a)).item();
      Tensor truth = xs;
      for (int64_t i = 0; i < truth.numel(); ++i) truth[i] += cfg.brightness_delta[a];
      gt_total += g.value(mean_all(g, abs_op(g, sub(g, fake, g.constant(truth))))).item();
    }
    row.loss_g = adv_total / na;
    row.cycle = cyc_total / na;
    row.gt_l1 = gt_total / na;
    return row;
  };

  result.metrics.push_back(measure(0));

  double initial_gen_loss = -1.0;
  int divergent_streak = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    Tensor xs = detail::take_rows(source_pool, rng, cfg.batch);

    // Discriminator updates, one per attribute, generator frozen.
    for (int a = 0; a < na; ++a) {
      Tensor fakes;
      {
        Graph g;
        BoundTranslation bound = BoundTranslation::bind_all(g, model, false, false);
        fakes = g.value(bound.generate(g, g.constant(xs), AttributeCode{a, na}, true));
      }
      Tensor mixed = buffer_push_sample(buffers[a], fakes, cfg.buffer_sample, rng);
      Tensor xt = detail::take_rows(target_pools[a], rng, cfg.batch);

      Graph g;
      BoundTranslation bound = BoundTranslation::bind_all(g, model, false, true);
      Value real = g.constant(xt);
      Value fake = g.constant(mixed);
      AcGanLosses l = ac_gan_losses(g, bound, real, fake, fake, a, cfg.least_squares);
      Value target = cfg.least_squares ? l.discriminator : neg(g, l.discriminator);
      g.backward(target);
      std::vector<Tensor> grads = bound.disc[static_cast<size_t>(a)].grads(g);
      for (const Tensor& t : grads)
        if (!t.all_finite()) throw numeric_error("train_translation: non-finite discriminator grad");
      disc_opts[a].step(model.discriminators[static_cast<size_t>(a)].params(), grads);
    }

    // Generator update over all attributes, discriminators frozen.
    {
      Graph g;
      BoundTranslation bound = BoundTranslation::bind_all(g, model, true, false);
      Value x = g.constant(xs);
      Value adv, cyc;
      for (int a = 0; a < na; ++a) {
        Tensor xt = detail::take_rows(target_pools[a], rng, cfg.batch);
        AttributeCode code{a, na};
        Value fake = bound.generate(g, x, code, true);
        Value d_gen = bound.discriminate(g, fake, a);
        Value adv_a;
        if (cfg.least_squares) {
          Value dg = add_scalar(g, d_gen, -1.0);
          adv_a = mean_all(g, mul(g, dg, dg));
        } else {
          adv_a = neg(g, mean_all(g, log_op(g, sigmoid(g, d_gen))));
        }
        Value cyc_a = cycle_loss(g, bound, x, g.constant(xt), a);
        adv = a == 0 ? adv_a : add(g, adv, adv_a);
        cyc = a == 0 ? cyc_a : add(g, cyc, cyc_a);
      }
      Value total = add(g, adv, scale(g, cyc, cfg.cycle_weight));
      double total_value = g.value(total).item();
      if (initial_gen_loss < 0) initial_gen_loss = total_value;
      divergent_streak = total_value > 10.0 * initial_gen_loss ? divergent_streak + 1 : 0;
      if (divergent_streak >= 100)
        throw numeric_error("train_translation: diverged at step " + std::to_string(step) +
                            " (generator loss " + std::to_string(total_value) + " vs initial " +
                            std::to_string(initial_gen_loss) + ")");
      g.backward(total);
      std::vector<Tensor> grads;
      for (BoundMlp& b : bound.fwd)
        for (Tensor& t : b.grads(g)) grads.push_back(std::move(t));
      for (BoundMlp& b : bound.inv)
        for (Tensor& t : b.grads(g)) grads.push_back(std::move(t));
      for (const Tensor& t : grads)
        if (!t.all_finite()) throw numeric_error("train_translation: non-finite generator grad");
      gen_opt.step(gen_params(), grads);
    }

    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps)
      result.metrics.push_back(measure(step + 1));
  }
  return result;
}

}  // namespace uda
