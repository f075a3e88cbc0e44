#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "uda/tensor.hpp"

namespace uda {

class Graph;

// Handle to a node on a Graph. Cheap to copy; only valid together with the
// graph that produced it.
struct Value {
  int idx = -1;
  const Graph* owner = nullptr;
};

// log() arguments are clamped at this value from below so entropy terms never
// produce -inf; the gradient passes through as 1/clamped_value.
inline constexpr double kLogFloor = 1e-12;

// Reverse-mode tape. Nodes are recorded in topological order (inputs always
// precede the ops consuming them); backward() sweeps the tape once in reverse.
// Single-threaded during construction and backward.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Value leaf(Tensor t, bool requires_grad) {
    if (!t.all_finite()) throw numeric_error("leaf: non-finite input tensor");
    return push(std::move(t), requires_grad, nullptr);
  }

  Value constant(Tensor t) { return leaf(std::move(t), false); }
  Value constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

  // Records an op node. `requires_grad` should be the OR over the parents;
  // `back` receives the accumulated output gradient and is responsible for
  // calling accum_grad on each parent that requires grad.
  Value add_node(const char* op, Tensor value, bool requires_grad, BackwardFn back) {
    if (!value.all_finite())
      throw numeric_error(std::string(op) + ": non-finite output, shape " + shape_str(value.shape()));
    return push(std::move(value), requires_grad, requires_grad ? std::move(back) : nullptr);
  }

  const Tensor& value(Value v) const { return node(v).value; }
  const Shape& shape(Value v) const { return node(v).value.shape(); }
  bool requires_grad(Value v) const { return node(v).requires_grad; }

  bool has_grad(Value v) const { return node(v).has_grad; }
  const Tensor& grad(Value v) const {
    const NodeRec& n = node(v);
    if (!n.has_grad)
      throw std::invalid_argument("grad: node has no gradient (did backward run, and does it require grad?)");
    return n.grad;
  }

  void accum_grad(Value v, const Tensor& contribution) {
    NodeRec& n = nodes_[check(v)];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    check_same_shape(n.grad, contribution, "accum_grad");
    double* g = n.grad.data();
    const double* c = contribution.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += c[i];
  }

  // Populates grads of every requires_grad node reachable from `loss`.
  // One reverse sweep; each recorded op is visited exactly once.
  void backward(Value loss) {
    int li = check(loss);
    if (backward_done_)
      throw std::invalid_argument("backward: repeated backward without reset_grads()");
    NodeRec& ln = nodes_[li];
    if (ln.value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(ln.value.shape()));
    if (!ln.requires_grad)
      throw std::invalid_argument("backward: loss is detached (no requires_grad leaf feeds it)");
    backward_done_ = true;
    accum_grad(loss, Tensor(ln.value.shape(), 1.0));
    for (int i = li; i >= 0; --i) {
      NodeRec& n = nodes_[i];
      if (!n.requires_grad || !n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  void reset_grads() {
    for (NodeRec& n : nodes_) {
      n.grad = Tensor();
      n.has_grad = false;
    }
    backward_done_ = false;
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct NodeRec {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  int check(Value v) const {
    if (v.owner != this || v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("value handle does not belong to this graph");
    return v.idx;
  }
  const NodeRec& node(Value v) const { return nodes_[check(v)]; }

  Value push(Tensor value, bool requires_grad, BackwardFn back) {
    nodes_.push_back(NodeRec{std::move(value), Tensor(), requires_grad, false, std::move(back)});
    return Value{static_cast<int>(nodes_.size()) - 1, this};
  }

  std::vector<NodeRec> nodes_;
  bool backward_done_ = false;
};

namespace detail {
inline bool any_grad(Graph& g, std::initializer_list<Value> vs) {
  for (Value v : vs)
    if (g.requires_grad(v)) return true;
  return false;
}
}  // namespace detail

// ---- elementwise ----

inline Value add(Graph& g, Value a, Value b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
  return g.add_node("add", std::move(out), detail::any_grad(g, {a, b}),
                    [a, b](Graph& gg, const Tensor& go) {
                      gg.accum_grad(a, go);
                      gg.accum_grad(b, go);
                    });
}

inline Value sub(Graph& g, Value a, Value b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
  return g.add_node("sub", std::move(out), detail::any_grad(g, {a, b}),
                    [a, b](Graph& gg, const Tensor& go) {
                      gg.accum_grad(a, go);
                      Tensor neg = go;
                      for (int64_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
                      gg.accum_grad(b, neg);
                    });
}

inline Value mul(Graph& g, Value a, Value b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
  return g.add_node("mul", std::move(out), detail::any_grad(g, {a, b}),
                    [a, b](Graph& gg, const Tensor& go) {
                      const Tensor& va = gg.value(a);
                      const Tensor& vb = gg.value(b);
                      Tensor ga = go, gb = go;
                      for (int64_t i = 0; i < go.numel(); ++i) {
                        ga[i] *= vb[i];
                        gb[i] *= va[i];
                      }
                      gg.accum_grad(a, ga);
                      gg.accum_grad(b, gb);
                    });
}

inline Value scale(Graph& g, Value a, double c) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return g.add_node("scale", std::move(out), g.requires_grad(a),
                    [a, c](Graph& gg, const Tensor& go) {
                      Tensor ga = go;
                      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= c;
                      gg.accum_grad(a, ga);
                    });
}

inline Value add_scalar(Graph& g, Value a, double c) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  return g.add_node("add_scalar", std::move(out), g.requires_grad(a),
                    [a](Graph& gg, const Tensor& go) { gg.accum_grad(a, go); });
}

inline Value neg(Graph& g, Value a) { return scale(g, a, -1.0); }

// ---- nonlinearities ----

inline Value relu(Graph& g, Value a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return g.add_node("relu", std::move(out), g.requires_grad(a),
                    [a](Graph& gg, const Tensor& go) {
                      const Tensor& va = gg.value(a);
                      Tensor ga = go;
                      for (int64_t i = 0; i < ga.numel(); ++i)
                        if (va[i] <= 0.0) ga[i] = 0.0;
                      gg.accum_grad(a, ga);
                    });
}

inline Value tanh_op(Graph& g, Value a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  Tensor saved = out;
  return g.add_node("tanh", std::move(out), g.requires_grad(a),
                    [a, saved](Graph& gg, const Tensor& go) {
                      Tensor ga = go;
                      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= 1.0 - saved[i] * saved[i];
                      gg.accum_grad(a, ga);
                    });
}

inline Value sigmoid(Graph& g, Value a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Tensor saved = out;
  return g.add_node("sigmoid", std::move(out), g.requires_grad(a),
                    [a, saved](Graph& gg, const Tensor& go) {
                      Tensor ga = go;
                      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= saved[i] * (1.0 - saved[i]);
                      gg.accum_grad(a, ga);
                    });
}

// log with the argument clamped at kLogFloor; the clamp is outside the
// gradient path (d/dx = 1/max(x, kLogFloor)).
inline Value log_op(Graph& g, Value a) {
  const Tensor& ta = g.value(a);
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(std::max(out[i], kLogFloor));
  return g.add_node("log", std::move(out), g.requires_grad(a),
                    [a](Graph& gg, const Tensor& go) {
                      const Tensor& va = gg.value(a);
                      Tensor ga = go;
                      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] /= std::max(va[i], kLogFloor);
                      gg.accum_grad(a, ga);
                    });
}

inline Value exp_op(Graph& g, Value a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  Tensor saved = out;
  return g.add_node("exp", std::move(out), g.requires_grad(a),
                    [a, saved](Graph& gg, const Tensor& go) {
                      Tensor ga = go;
                      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= saved[i];
                      gg.accum_grad(a, ga);
                    });
}

inline Value abs_op(Graph& g, Value a) {
  Tensor out = g.value(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
  return g.add_node("abs", std::move(out), g.requires_grad(a),
                    [a](Graph& gg, const Tensor& go) {
                      const Tensor& va = gg.value(a);
                      Tensor ga = go;
                      for (int64_t i = 0; i < ga.numel(); ++i)
                        ga[i] *= va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0);
                      gg.accum_grad(a, ga);
                    });
}

// ---- linear algebra ----

inline Value matmul(Graph& g, Value a, Value b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.extent(1) != tb.extent(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(ta.shape()) + " x " +
                                shape_str(tb.shape()));
  int n = ta.extent(0), k = ta.extent(1), m = tb.extent(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = ta.at(i, p);
      if (aip == 0.0) continue;
      for (int j = 0; j < m; ++j) out.at(i, j) += aip * tb.at(p, j);
    }
  return g.add_node("matmul", std::move(out), detail::any_grad(g, {a, b}),
                    [a, b, n, k, m](Graph& gg, const Tensor& go) {
                      const Tensor& va = gg.value(a);
                      const Tensor& vb = gg.value(b);
                      Tensor ga({n, k}), gb({k, m});
                      for (int i = 0; i < n; ++i)
                        for (int j = 0; j < m; ++j) {
                          double goij = go.at(i, j);
                          if (goij == 0.0) continue;
                          for (int p = 0; p < k; ++p) {
                            ga.at(i, p) += goij * vb.at(p, j);
                            gb.at(p, j) += va.at(i, p) * goij;
                          }
                        }
                      gg.accum_grad(a, ga);
                      gg.accum_grad(b, gb);
                    });
}

// x:[B,K] * W:[K,M] + b:[M] broadcast over rows.
inline Value affine(Graph& g, Value x, Value w, Value b) {
  const Tensor& tx = g.value(x);
  const Tensor& tw = g.value(w);
  const Tensor& tb = g.value(b);
  if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1 || tx.extent(1) != tw.extent(0) ||
      tw.extent(1) != tb.extent(0))
    throw std::invalid_argument("affine: incompatible shapes x" + shape_str(tx.shape()) + " W" +
                                shape_str(tw.shape()) + " b" + shape_str(tb.shape()));
  int n = tx.extent(0), k = tx.extent(1), m = tw.extent(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) out.at(i, j) = tb[j];
    for (int p = 0; p < k; ++p) {
      double xip = tx.at(i, p);
      if (xip == 0.0) continue;
      for (int j = 0; j < m; ++j) out.at(i, j) += xip * tw.at(p, j);
    }
  }
  return g.add_node("affine", std::move(out), detail::any_grad(g, {x, w, b}),
                    [x, w, b, n, k, m](Graph& gg, const Tensor& go) {
                      const Tensor& vx = gg.value(x);
                      const Tensor& vw = gg.value(w);
                      Tensor gx({n, k}), gw({k, m}), gb({m});
                      for (int i = 0; i < n; ++i)
                        for (int j = 0; j < m; ++j) {
                          double goij = go.at(i, j);
                          if (goij == 0.0) continue;
                          gb[j] += goij;
                          for (int p = 0; p < k; ++p) {
                            gx.at(i, p) += goij * vw.at(p, j);
                            gw.at(p, j) += vx.at(i, p) * goij;
                          }
                        }
                      gg.accum_grad(x, gx);
                      gg.accum_grad(w, gw);
                      gg.accum_grad(b, gb);
                    });
}

// ---- softmax family (over the last axis; 1-D treated as a single row) ----

namespace detail {
inline std::pair<int, int> rows_cols_last_axis(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.extent(0)};
  if (t.rank() == 2) return {t.extent(0), t.extent(1)};
  throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got " + shape_str(t.shape()));
}
}  // namespace detail

inline Value softmax(Graph& g, Value a) {
  const Tensor& ta = g.value(a);
  auto [rows, cols] = detail::rows_cols_last_axis(ta, "softmax");
  Tensor out = ta;
  for (int i = 0; i < rows; ++i) {
    double* row = out.data() + static_cast<int64_t>(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < cols; ++j) row[j] /= sum;
  }
  Tensor saved = out;
  return g.add_node("softmax", std::move(out), g.requires_grad(a),
                    [a, saved, rows = rows, cols = cols](Graph& gg, const Tensor& go) {
                      Tensor ga(saved.shape());
                      for (int i = 0; i < rows; ++i) {
                        const double* y = saved.data() + static_cast<int64_t>(i) * cols;
                        const double* gy = go.data() + static_cast<int64_t>(i) * cols;
                        double* gx = ga.data() + static_cast<int64_t>(i) * cols;
                        double dot = 0.0;
                        for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
                        for (int j = 0; j < cols; ++j) gx[j] = y[j] * (gy[j] - dot);
                      }
                      gg.accum_grad(a, ga);
                    });
}

// Computed via max-subtraction for stability.
inline Value log_softmax(Graph& g, Value a) {
  const Tensor& ta = g.value(a);
  auto [rows, cols] = detail::rows_cols_last_axis(ta, "log_softmax");
  Tensor out = ta;
  for (int i = 0; i < rows; ++i) {
    double* row = out.data() + static_cast<int64_t>(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (int j = 0; j < cols; ++j) row[j] -= lse;
  }
  Tensor saved = out;
  return g.add_node("log_softmax", std::move(out), g.requires_grad(a),
                    [a, saved, rows = rows, cols = cols](Graph& gg, const Tensor& go) {
                      Tensor ga(saved.shape());
                      for (int i = 0; i < rows; ++i) {
                        const double* ls = saved.data() + static_cast<int64_t>(i) * cols;
                        const double* gy = go.data() + static_cast<int64_t>(i) * cols;
                        double* gx = ga.data() + static_cast<int64_t>(i) * cols;
                        double gsum = 0.0;
                        for (int j = 0; j < cols; ++j) gsum += gy[j];
                        for (int j = 0; j < cols; ++j) gx[j] = gy[j] - std::exp(ls[j]) * gsum;
                      }
                      gg.accum_grad(a, ga);
                    });
}

// ---- reductions ----

inline Value sum_all(Graph& g, Value a) {
  const Tensor& ta = g.value(a);
  double s = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
  return g.add_node("sum", Tensor::scalar(s), g.requires_grad(a),
                    [a](Graph& gg, const Tensor& go) {
                      gg.accum_grad(a, Tensor(gg.value(a).shape(), go[0]));
                    });
}

inline Value mean_all(Graph& g, Value a) {
  const Tensor& ta = g.value(a);
  double n = static_cast<double>(ta.numel());
  double s = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
  return g.add_node("mean", Tensor::scalar(s / n), g.requires_grad(a),
                    [a, n](Graph& gg, const Tensor& go) {
                      gg.accum_grad(a, Tensor(gg.value(a).shape(), go[0] / n));
                    });
}

namespace detail {
inline Value reduce_axis(Graph& g, Value a, int axis, bool mean, const char* op) {
  const Tensor& ta = g.value(a);
  if (ta.rank() != 2 || (axis != 0 && axis != 1))
    throw std::invalid_argument(std::string(op) + ": axis reduction needs rank-2 input and axis 0/1, got " +
                                shape_str(ta.shape()) + " axis " + std::to_string(axis));
  int n = ta.extent(0), m = ta.extent(1);
  double denom = mean ? static_cast<double>(axis == 0 ? n : m) : 1.0;
  Tensor out({axis == 0 ? m : n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[axis == 0 ? j : i] += ta.at(i, j);
  if (mean)
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= denom;
  return g.add_node(op, std::move(out), g.requires_grad(a),
                    [a, axis, denom, n, m](Graph& gg, const Tensor& go) {
                      Tensor ga({n, m});
                      for (int i = 0; i < n; ++i)
                        for (int j = 0; j < m; ++j) ga.at(i, j) = go[axis == 0 ? j : i] / denom;
                      gg.accum_grad(a, ga);
                    });
}
}  // namespace detail

inline Value sum_axis(Graph& g, Value a, int axis) { return detail::reduce_axis(g, a, axis, false, "sum_axis"); }
inline Value mean_axis(Graph& g, Value a, int axis) { return detail::reduce_axis(g, a, axis, true, "mean_axis"); }

// ---- shape ops ----

inline Value reshape(Graph& g, Value a, Shape new_shape) {
  const Tensor& ta = g.value(a);
  if (shape_numel(new_shape) != ta.numel())
    throw std::invalid_argument("reshape: numel mismatch " + shape_str(ta.shape()) + " -> " +
                                shape_str(new_shape));
  Tensor out(new_shape, ta.values());
  return g.add_node("reshape", std::move(out), g.requires_grad(a),
                    [a](Graph& gg, const Tensor& go) {
                      gg.accum_grad(a, Tensor(gg.value(a).shape(), go.values()));
                    });
}

inline Value concat(Graph& g, const std::vector<Value>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& t0 = g.value(parts[0]);
  int rank = t0.rank();
  if (rank == 1) axis = 0;
  if ((rank != 1 && rank != 2) || axis < 0 || axis >= rank)
    throw std::invalid_argument("concat: rank 1/2 only, got " + shape_str(t0.shape()));
  bool rg = false;
  int total = 0;
  for (Value p : parts) {
    const Tensor& t = g.value(p);
    if (t.rank() != rank || (rank == 2 && t.extent(1 - axis) != t0.extent(1 - axis)))
      throw std::invalid_argument("concat: shape mismatch " + shape_str(t0.shape()) + " vs " +
                                  shape_str(t.shape()));
    total += t.extent(axis);
    rg = rg || g.requires_grad(p);
  }
  Shape os = t0.shape();
  os[static_cast<size_t>(axis)] = total;
  Tensor out(os);
  int off = 0;
  for (Value p : parts) {
    const Tensor& t = g.value(p);
    int e = t.extent(axis);
    if (rank == 1 || axis == 0) {
      std::copy(t.values().begin(), t.values().end(),
                out.values().begin() + static_cast<int64_t>(off) * (rank == 2 ? t0.extent(1) : 1));
    } else {
      for (int i = 0; i < t.extent(0); ++i)
        for (int j = 0; j < e; ++j) out.at(i, off + j) = t.at(i, j);
    }
    off += e;
  }
  std::vector<Value> ps = parts;
  return g.add_node("concat", std::move(out), rg,
                    [ps, axis, rank](Graph& gg, const Tensor& go) {
                      int off = 0;
                      for (Value p : ps) {
                        const Tensor& t = gg.value(p);
                        int e = t.extent(axis);
                        Tensor gp(t.shape());
                        if (rank == 1 || axis == 0) {
                          int64_t stride = rank == 2 ? t.extent(1) : 1;
                          std::copy(go.values().begin() + off * stride,
                                    go.values().begin() + (off + e) * stride, gp.values().begin());
                        } else {
                          for (int i = 0; i < t.extent(0); ++i)
                            for (int j = 0; j < e; ++j) gp.at(i, j) = go.at(i, off + j);
                        }
                        gg.accum_grad(p, gp);
                        off += e;
                      }
                    });
}

// Half-open range [begin, end) along `axis`.
inline Value slice(Graph& g, Value a, int axis, int begin, int end) {
  const Tensor& ta = g.value(a);
  int rank = ta.rank();
  if ((rank != 1 && rank != 2) || axis < 0 || axis >= rank)
    throw std::invalid_argument("slice: rank 1/2 only, got " + shape_str(ta.shape()));
  if (begin < 0 || end > ta.extent(axis) || begin >= end)
    throw std::invalid_argument("slice: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") for shape " + shape_str(ta.shape()));
  Shape os = ta.shape();
  os[static_cast<size_t>(axis)] = end - begin;
  Tensor out(os);
  if (rank == 1) {
    for (int i = begin; i < end; ++i) out[i - begin] = ta[i];
  } else if (axis == 0) {
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < ta.extent(1); ++j) out.at(i - begin, j) = ta.at(i, j);
  } else {
    for (int i = 0; i < ta.extent(0); ++i)
      for (int j = begin; j < end; ++j) out.at(i, j - begin) = ta.at(i, j);
  }
  return g.add_node("slice", std::move(out), g.requires_grad(a),
                    [a, axis, begin, end, rank](Graph& gg, const Tensor& go) {
                      const Tensor& t = gg.value(a);
                      Tensor ga(t.shape());
                      if (rank == 1) {
                        for (int i = begin; i < end; ++i) ga[i] = go[i - begin];
                      } else if (axis == 0) {
                        for (int i = begin; i < end; ++i)
                          for (int j = 0; j < t.extent(1); ++j) ga.at(i, j) = go.at(i - begin, j);
                      } else {
                        for (int i = 0; i < t.extent(0); ++i)
                          for (int j = begin; j < end; ++j) ga.at(i, j) = go.at(i, j - begin);
                      }
                      gg.accum_grad(a, ga);
                    });
}

// out[i,j] = a[i,j] / b[i]; divides each row of a by the matching entry of b.
inline Value div_rows(Graph& g, Value a, Value b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.rank() != 2 || tb.rank() != 1 || tb.extent(0) != ta.extent(0))
    throw std::invalid_argument("div_rows: need [B,K] and [B], got " + shape_str(ta.shape()) +
                                " and " + shape_str(tb.shape()));
  int n = ta.extent(0), m = ta.extent(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = ta.at(i, j) / tb[i];
  return g.add_node("div_rows", std::move(out), detail::any_grad(g, {a, b}),
                    [a, b, n, m](Graph& gg, const Tensor& go) {
                      const Tensor& va = gg.value(a);
                      const Tensor& vb = gg.value(b);
                      Tensor ga({n, m}), gb({n});
                      for (int i = 0; i < n; ++i)
                        for (int j = 0; j < m; ++j) {
                          ga.at(i, j) = go.at(i, j) / vb[i];
                          gb[i] -= go.at(i, j) * va.at(i, j) / (vb[i] * vb[i]);
                        }
                      gg.accum_grad(a, ga);
                      gg.accum_grad(b, gb);
                    });
}

// out[i] = a[i, idx[i]] for a batch of row indices.
inline Value row_gather(Graph& g, Value a, const std::vector<int>& idx) {
  const Tensor& ta = g.value(a);
  if (ta.rank() != 2 || static_cast<int>(idx.size()) != ta.extent(0))
    throw std::invalid_argument("row_gather: need rank-2 input with one index per row, got " +
                                shape_str(ta.shape()) + " and " + std::to_string(idx.size()) + " indices");
  int n = ta.extent(0), m = ta.extent(1);
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0 || idx[i] >= m)
      throw std::invalid_argument("row_gather: index " + std::to_string(idx[i]) + " out of range for " +
                                  std::to_string(m) + " columns");
    out[i] = ta.at(i, idx[i]);
  }
  return g.add_node("row_gather", std::move(out), g.requires_grad(a),
                    [a, idx, n, m](Graph& gg, const Tensor& go) {
                      Tensor ga({n, m});
                      for (int i = 0; i < n; ++i) ga.at(i, idx[i]) = go[i];
                      gg.accum_grad(a, ga);
                    });
}

}  // namespace uda
