#pragma once

#include <string>
#include <vector>

#include "uda/adam.hpp"
#include "uda/flow.hpp"
#include "uda/image.hpp"
#include "uda/nn.hpp"
#include "uda/rng.hpp"

// Teacher/student appearance-flow predictors on a procedural-shapes dataset.
// The teacher maps (source image, viewpoint code) to a dense flow; the
// student maps (keypoints, viewpoint code) to the same flow and is trained by
// distilling the frozen teacher: L = ||F_kpt - F_pix||_1 + lambda * L1 of the
// warped image against the real target view.

namespace uda {

// K 2-D points in pixel coordinates plus visibility flags.
struct KeypointSet {
  Tensor xy;  // [K, 2], (x, y) rows
  std::vector<bool> visible;

  static KeypointSet of(Tensor pts) {
    if (pts.rank() != 2 || pts.extent(1) != 2 || pts.extent(0) < 1)
      throw std::invalid_argument("KeypointSet: expected [K>=1, 2]");
    if (!pts.all_finite()) throw numeric_error("KeypointSet: non-finite coordinate");
    KeypointSet k;
    k.visible.assign(pts.extent(0), true);
    k.xy = std::move(pts);
    return k;
  }
  int count() const { return xy.extent(0); }
};

// One-hot code over viewpoint bins (the elevation analogue, default 4 bins
// spanning 0..30 degrees).
struct ViewpointCode {
  int bin = 0;
  int num_bins = 4;

  Tensor one_hot() const {
    if (bin < 0 || bin >= num_bins) throw std::invalid_argument("ViewpointCode: bin out of range");
    Tensor t({num_bins});
    t[bin] = 1.0;
    return t;
  }
};

struct ShapeSample {
  Image source;       // base view
  Image target;       // view transformed per the viewpoint bin
  KeypointSet keypoints;
  ViewpointCode viewpoint;
  FlowField gt_flow;  // exact flow for the bin's transform
};

enum class ShapeTask { translations, rotations };

struct ShapesConfig {
  int image_size = 16;
  int num_shapes = 48;      // base shapes; each yields one sample per view bin
  int num_views = 4;
  int num_keypoints = 8;
  ShapeTask task = ShapeTask::rotations;
  uint64_t seed = 0;
};

namespace detail {
// Filled convex polygon with a horizontal intensity ramp, rasterized with
// 2x2 supersampling so edges are soft enough to carry warp gradients.
inline Image rasterize_polygon(const Tensor& vertices, int size) {
  int k = vertices.extent(0);
  Image im(size, size, 1);
  double cx = 0, cy = 0;
  for (int i = 0; i < k; ++i) {
    cx += vertices.at(i, 0);
    cy += vertices.at(i, 1);
  }
  cx /= k;
  cy /= k;
  auto inside = [&](double x, double y) {
    for (int i = 0; i < k; ++i) {
      double x1 = vertices.at(i, 0), y1 = vertices.at(i, 1);
      double x2 = vertices.at((i + 1) % k, 0), y2 = vertices.at((i + 1) % k, 1);
      double cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
      double cref = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1);
      if (cross * cref < 0) return false;
    }
    return true;
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double cover = 0;
      for (double oy : {0.25, 0.75})
        for (double ox : {0.25, 0.75})
          if (inside(x + ox, y + oy)) cover += 0.25;
      double ramp = 0.4 + 0.6 * (x + 0.5) / size;
      im.at(y, x) = cover * ramp;
    }
  return im;
}

inline Tensor random_convex_polygon(Rng& rng, int k, int size) {
  // Jittered angles around a random center; convex by construction.
  double cx = rng.uniform(size * 0.35, size * 0.65);
  double cy = rng.uniform(size * 0.35, size * 0.65);
  double base_r = rng.uniform(size * 0.15, size * 0.24);
  std::vector<double> angles(k);
  for (int i = 0; i < k; ++i)
    angles[i] = 2.0 * 3.14159265358979323846 * (i + rng.uniform(0.1, 0.9)) / k;
  Tensor pts({k, 2});
  for (int i = 0; i < k; ++i) {
    double r = base_r * rng.uniform(0.8, 1.0);
    pts.at(i, 0) = cx + r * std::cos(angles[i]);
    pts.at(i, 1) = cy + r * std::sin(angles[i]);
  }
  return pts;
}

inline AffineTransform view_transform(ShapeTask task, int bin, double cx, double cy) {
  if (task == ShapeTask::translations)
    return AffineTransform::translation(0.0, static_cast<double>(bin));
  // Elevation analogue: rotation about the shape centroid, 0..30 degrees.
  return AffineTransform::rotation_about(cx, cy, 10.0 * bin);
}
}  // namespace detail

// Procedural dataset with exact ground-truth flows per view.
inline std::vector<ShapeSample> make_shapes_dataset(const ShapesConfig& cfg) {
  if (cfg.num_shapes < 1 || cfg.num_views < 1 || cfg.num_keypoints < 3)
    throw std::invalid_argument("ShapesConfig: counts out of range");
  Rng rng(cfg.seed);
  std::vector<ShapeSample> out;
  for (int s = 0; s < cfg.num_shapes; ++s) {
    Tensor poly = detail::random_convex_polygon(rng, cfg.num_keypoints, cfg.image_size);
    double cx = 0, cy = 0;
    for (int i = 0; i < cfg.num_keypoints; ++i) {
      cx += poly.at(i, 0);
      cy += poly.at(i, 1);
    }
    cx /= cfg.num_keypoints;
    cy /= cfg.num_keypoints;
    Image source = detail::rasterize_polygon(poly, cfg.image_size);
    for (int v = 0; v < cfg.num_views; ++v) {
      AffineTransform t = detail::view_transform(cfg.task, v, cx, cy);
      Tensor moved({cfg.num_keypoints, 2});
      for (int i = 0; i < cfg.num_keypoints; ++i) {
        auto [mx, my] = t.apply(poly.at(i, 0), poly.at(i, 1));
        moved.at(i, 0) = mx;
        moved.at(i, 1) = my;
      }
      ShapeSample sample;
      sample.source = source;
      sample.target = detail::rasterize_polygon(moved, cfg.image_size);
      sample.keypoints = KeypointSet::of(poly);
      sample.viewpoint = ViewpointCode{v, cfg.num_views};
      sample.gt_flow = synthetic_flow(t, cfg.image_size, cfg.image_size);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

// Predicts a flow field as identity plus an MLP correction. Teacher input is
// the flattened source image; student input is the normalized keypoint list.
struct FlowPredictor {
  Mlp net;
  bool keypoint_input = false;
  int image_size = 0;
  int num_views = 0;

  static FlowPredictor make_teacher(int image_size, int num_views, int hidden, Rng& rng) {
    FlowPredictor p;
    p.keypoint_input = false;
    p.image_size = image_size;
    p.num_views = num_views;
    p.net = Mlp::make({image_size * image_size + num_views, hidden, 2 * image_size * image_size},
                      Activation::relu, rng);
    return p;
  }

  static FlowPredictor make_student(int image_size, int num_views, int num_keypoints, int hidden,
                                    Rng& rng) {
    FlowPredictor p;
    p.keypoint_input = true;
    p.image_size = image_size;
    p.num_views = num_views;
    p.net = Mlp::make({2 * num_keypoints + num_views, hidden, 2 * image_size * image_size},
                      Activation::relu, rng);
    return p;
  }

  Tensor input_row(const ShapeSample& s) const {
    std::vector<double> row;
    if (keypoint_input) {
      for (int i = 0; i < s.keypoints.count(); ++i) {
        row.push_back(s.keypoints.xy.at(i, 0) / image_size * 2.0 - 1.0);
        row.push_back(s.keypoints.xy.at(i, 1) / image_size * 2.0 - 1.0);
      }
    } else {
      row = s.source.v;
    }
    Tensor code = ViewpointCode{s.viewpoint.bin, num_views}.one_hot();
    for (int64_t i = 0; i < code.numel(); ++i) row.push_back(code[i]);
    int width = static_cast<int>(row.size());
    return Tensor({1, width}, std::move(row));
  }

  // Flow prediction on the graph: [H, W, 2].
  Value predict(Graph& g, const BoundMlp& bound, const ShapeSample& s) const {
    Value raw = bound(g, g.constant(input_row(s)));
    Value delta = reshape(g, raw, {image_size, image_size, 2});
    return add(g, delta, g.constant(FlowField::identity(image_size, image_size).to_tensor()));
  }

  FlowField predict_plain(const ShapeSample& s) const {
    Graph g;
    BoundMlp b = bind(g, net, false);
    return FlowField::from_tensor(g.value(predict(g, b, s)));
  }
};

struct DistillLossValues {
  Value total;  // L = L_flow + lambda * L_image, minimized
  Value flow;   // ||F_kpt - F_pix||_1, mean over entries
  Value image;  // ||warp(I_s, F_kpt) - I_t||_1, mean over pixels
};

inline DistillLossValues distill_loss(Graph& g, Value flow_kpt, Value flow_pix, const Image& source,
                                      const Image& target, double lambda) {
  const Tensor& fk = g.value(flow_kpt);
  if (!fk.same_shape(g.value(flow_pix)))
    throw std::invalid_argument("distill_loss: flow shape mismatch " + shape_str(fk.shape()) +
                                " vs " + shape_str(g.value(flow_pix).shape()));
  if (fk.rank() != 3 || fk.extent(0) != source.height || fk.extent(1) != source.width ||
      source.height != target.height || source.width != target.width || source.channels != 1 ||
      target.channels != 1)
    throw std::invalid_argument("distill_loss: flow/image shape mismatch");
  Value l_flow = mean_all(g, abs_op(g, sub(g, flow_kpt, flow_pix)));
  Value warped = bilinear_warp(g, g.constant(source.to_tensor()), flow_kpt);
  Value l_image = mean_all(g, abs_op(g, sub(g, warped, g.constant(target.to_tensor()))));
  Value total = add(g, l_flow, scale(g, l_image, lambda));
  return {total, l_flow, l_image};
}

struct DistillConfig {
  ShapesConfig shapes;
  int eval_shapes = 16;
  int hidden = 64;
  int teacher_steps = 1500;
  int student_steps = 1500;
  int batch = 16;
  double learning_rate = 3e-4;
  double lambda = 1.0;  // image-term weight in the distillation objective
  uint64_t seed = 0;
};

struct DistillMetrics {
  std::vector<double> teacher_epoch_l1;  // eval L1 recon error per logged step
  std::vector<double> student_epoch_l1;
  double teacher_eval_l1 = 0.0;
  double student_eval_l1 = 0.0;
};

struct DistillResult {
  FlowPredictor teacher;
  FlowPredictor student;
  DistillMetrics metrics;
};

inline double eval_predictor_l1(const FlowPredictor& p, const std::vector<ShapeSample>& samples) {
  double total = 0.0;
  for (const ShapeSample& s : samples)
    total += l1_recon_error(Image::from_tensor([&] {
                              Graph g;
                              BoundMlp b = bind(g, p.net, false);
                              Value flow = p.predict(g, b, s);
                              Value warped = bilinear_warp(g, g.constant(s.source.to_tensor()), flow);
                              Tensor t = g.value(warped);
                              // Warped values are convex combinations of source
                              // values, so they stay in [0, 1].
                              return t;
                            }()),
                            s.target);
  return total / static_cast<double>(samples.size());
}

// Trains the teacher on image reconstruction, then the student by
// distillation against the frozen teacher. Aborts with the step index if the
// loss goes non-finite.
inline DistillResult train_flow_predictors(const DistillConfig& cfg) {
  std::vector<ShapeSample> train = make_shapes_dataset(cfg.shapes);
  ShapesConfig eval_cfg = cfg.shapes;
  eval_cfg.num_shapes = cfg.eval_shapes;
  eval_cfg.seed = cfg.shapes.seed + 1;
  std::vector<ShapeSample> eval = make_shapes_dataset(eval_cfg);

  Rng rng(cfg.seed);
  DistillResult result;
  result.teacher = FlowPredictor::make_teacher(cfg.shapes.image_size, cfg.shapes.num_views,
                                               cfg.hidden, rng);
  result.student = FlowPredictor::make_student(cfg.shapes.image_size, cfg.shapes.num_views,
                                               cfg.shapes.num_keypoints, cfg.hidden, rng);

  auto run = [&](FlowPredictor& model, bool distill, int steps, std::vector<double>& log) {
    AdamOptimizer opt({.learning_rate = cfg.learning_rate});
    int log_every = std::max(1, steps / 10);
    for (int step = 0; step < steps; ++step) {
      Graph g;
      BoundMlp bound = bind(g, model.net, true);
      Value loss;
      for (int b = 0; b < cfg.batch; ++b) {
        const ShapeSample& s = train[rng.uniform_index(static_cast<int64_t>(train.size()))];
        Value flow = model.predict(g, bound, s);
        Value term;
        if (distill) {
          Value teacher_flow = g.constant(result.teacher.predict_plain(s).to_tensor());
          term = distill_loss(g, flow, teacher_flow, s.source, s.target, cfg.lambda).total;
        } else {
          Value warped = bilinear_warp(g, g.constant(s.source.to_tensor()), flow);
          term = mean_all(g, abs_op(g, sub(g, warped, g.constant(s.target.to_tensor()))));
        }
        loss = b == 0 ? term : add(g, loss, term);
      }
      loss = scale(g, loss, 1.0 / cfg.batch);
      double loss_value = g.value(loss).item();
      if (!std::isfinite(loss_value))
        throw numeric_error("train_flow_predictors: non-finite loss at step " + std::to_string(step));
      g.backward(loss);
      opt.step(model.net.params(), bound.grads(g));
      if ((step + 1) % log_every == 0) log.push_back(eval_predictor_l1(model, eval));
    }
  };

  run(result.teacher, false, cfg.teacher_steps, result.metrics.teacher_epoch_l1);
  run(result.student, true, cfg.student_steps, result.metrics.student_epoch_l1);
  result.metrics.teacher_eval_l1 = eval_predictor_l1(result.teacher, eval);
  result.metrics.student_eval_l1 = eval_predictor_l1(result.student, eval);
  return result;
}

}  // namespace uda
