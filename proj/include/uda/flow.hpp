#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "uda/graph.hpp"
#include "uda/image.hpp"
#include "uda/tensor.hpp"

namespace uda {

// Per-target-pixel absolute source sampling coordinates (F_x, F_y). The warp
// reads the source at these real-valued positions; neighbors falling outside
// the image contribute zero (zero padding), the other common convention
// (clamping) is NOT used.
struct FlowField {
  int height = 0, width = 0;
  std::vector<double> v;  // H*W*2, (F_x, F_y) interleaved, row-major pixels

  FlowField() = default;
  FlowField(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w * 2, 0.0) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("FlowField: bad dimensions");
  }

  double& fx(int y, int x) { return v[(static_cast<size_t>(y) * width + x) * 2]; }
  double fx(int y, int x) const { return v[(static_cast<size_t>(y) * width + x) * 2]; }
  double& fy(int y, int x) { return v[(static_cast<size_t>(y) * width + x) * 2 + 1]; }
  double fy(int y, int x) const { return v[(static_cast<size_t>(y) * width + x) * 2 + 1]; }

  static FlowField identity(int h, int w) {
    FlowField f(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        f.fx(y, x) = x;
        f.fy(y, x) = y;
      }
    return f;
  }

  Tensor to_tensor() const { return Tensor({height, width, 2}, v); }
  static FlowField from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.extent(2) != 2)
      throw std::invalid_argument("FlowField::from_tensor: expected [H,W,2], got " +
                                  shape_str(t.shape()));
    FlowField f(t.extent(0), t.extent(1));
    f.v = t.values();
    return f;
  }

  void check_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) throw numeric_error("FlowField: non-finite coordinate");
  }
};

// Invertible 2-D affine map of image-plane points (x right, y down):
// (x, y) -> (a x + b y + tx, c x + d y + ty).
struct AffineTransform {
  double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

  static AffineTransform translation(double dx, double dy) { return {1, 0, 0, 1, dx, dy}; }
  static AffineTransform rotation_about(double cx, double cy, double degrees) {
    double r = degrees * 3.14159265358979323846 / 180.0;
    double ca = std::cos(r), sa = std::sin(r);
    return {ca, -sa, sa, ca, cx - ca * cx + sa * cy, cy - sa * cx - ca * cy};
  }
  static AffineTransform scale_about(double cx, double cy, double s) {
    return {s, 0, 0, s, cx * (1 - s), cy * (1 - s)};
  }

  double det() const { return a * d - b * c; }

  AffineTransform inverse() const {
    double dt = det();
    if (std::fabs(dt) < 1e-12)
      throw std::invalid_argument("AffineTransform: non-invertible (det ~ 0)");
    double ia = d / dt, ib = -b / dt, ic = -c / dt, id = a / dt;
    return {ia, ib, ic, id, -(ia * tx + ib * ty), -(ic * tx + id * ty)};
  }

  std::pair<double, double> apply(double x, double y) const {
    return {a * x + b * y + tx, c * x + d * y + ty};
  }
};

// Ground-truth flow for a transform: each target pixel samples its exact
// source coordinate under the inverse map.
inline FlowField synthetic_flow(const AffineTransform& transform, int h, int w) {
  AffineTransform inv = transform.inverse();
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto [sx, sy] = inv.apply(x, y);
      f.fx(y, x) = sx;
      f.fy(y, x) = sy;
    }
  return f;
}

// I_p(i,j) = sum over the 4-pixel neighborhood (h,w) of (F_y, F_x) of
// I_s(h,w) (1 - |F_y - h|) (1 - |F_x - w|). Plain (non-differentiable)
// version for any channel count.
inline Image warp_image(const Image& src, const FlowField& flow) {
  if (src.height != flow.height || src.width != flow.width)
    throw std::invalid_argument("warp_image: flow shape does not match image");
  flow.check_finite();
  Image out(src.height, src.width, src.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double px = flow.fx(y, x), py = flow.fy(y, x);
      int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          int h = y0 + dy, w = x0 + dx;
          if (h < 0 || h >= src.height || w < 0 || w >= src.width) continue;
          double wgt = (1.0 - std::fabs(py - h)) * (1.0 - std::fabs(px - w));
          for (int c = 0; c < src.channels; ++c) out.at(y, x, c) += src.at(h, w, c) * wgt;
        }
    }
  return out;
}

// warp(warp(I, first), second) == warp(I, compose_flows(first, second)) on
// pixels whose second-stage coordinates land fully inside the image. The
// first field is a coordinate map, so it is sampled with weight-renormalized
// bilinear interpolation; positions with no valid neighbor map to a far
// out-of-range sentinel and contribute nothing downstream.
inline FlowField compose_flows(const FlowField& first, const FlowField& second) {
  if (first.height != second.height || first.width != second.width)
    throw std::invalid_argument("compose_flows: shape mismatch");
  constexpr double kOutside = -1e6;
  FlowField out(second.height, second.width);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double px = second.fx(y, x), py = second.fy(y, x);
      int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
      double acc_x = 0.0, acc_y = 0.0, total = 0.0;
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          int h = y0 + dy, w = x0 + dx;
          if (h < 0 || h >= first.height || w < 0 || w >= first.width) continue;
          double wgt = (1.0 - std::fabs(py - h)) * (1.0 - std::fabs(px - w));
          acc_x += first.fx(h, w) * wgt;
          acc_y += first.fy(h, w) * wgt;
          total += wgt;
        }
      if (total <= 0.0) {
        out.fx(y, x) = kOutside;
        out.fy(y, x) = kOutside;
      } else {
        out.fx(y, x) = acc_x / total;
        out.fy(y, x) = acc_y / total;
      }
    }
  return out;
}

// Differentiable warp on the graph: image [H,W], flow [H,W,2] -> image [H,W].
// Gradients flow to both the image and the flow; out-of-range neighbors
// contribute zero to the value and to every gradient.
inline Value bilinear_warp(Graph& g, Value image, Value flow) {
  const Tensor& ti = g.value(image);
  const Tensor& tf = g.value(flow);
  if (ti.rank() != 2 || tf.rank() != 3 || tf.extent(0) != ti.extent(0) ||
      tf.extent(1) != ti.extent(1) || tf.extent(2) != 2)
    throw std::invalid_argument("bilinear_warp: expected image [H,W] and flow [H,W,2], got " +
                                shape_str(ti.shape()) + " and " + shape_str(tf.shape()));
  int hh = ti.extent(0), ww = ti.extent(1);
  Tensor out({hh, ww});
  for (int y = 0; y < hh; ++y)
    for (int x = 0; x < ww; ++x) {
      double px = tf.at(y, x, 0), py = tf.at(y, x, 1);
      int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          int h = y0 + dy, w = x0 + dx;
          if (h < 0 || h >= hh || w < 0 || w >= ww) continue;
          double wgt = (1.0 - std::fabs(py - h)) * (1.0 - std::fabs(px - w));
          out.at(y, x) += ti.at(h, w) * wgt;
        }
    }
  return g.add_node(
      "bilinear_warp", std::move(out), detail::any_grad(g, {image, flow}),
      [image, flow, hh, ww](Graph& gg, const Tensor& go) {
        const Tensor& vi = gg.value(image);
        const Tensor& vf = gg.value(flow);
        Tensor gi({hh, ww}), gf({hh, ww, 2});
        auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
        for (int y = 0; y < hh; ++y)
          for (int x = 0; x < ww; ++x) {
            double up = go.at(y, x);
            if (up == 0.0) continue;
            double px = vf.at(y, x, 0), py = vf.at(y, x, 1);
            int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
            for (int dy = 0; dy <= 1; ++dy)
              for (int dx = 0; dx <= 1; ++dx) {
                int h = y0 + dy, w = x0 + dx;
                if (h < 0 || h >= hh || w < 0 || w >= ww) continue;
                double wy = 1.0 - std::fabs(py - h);
                double wx = 1.0 - std::fabs(px - w);
                gi.at(h, w) += up * wy * wx;
                gf.at(y, x, 0) += up * vi.at(h, w) * wy * -sgn(px - w);
                gf.at(y, x, 1) += up * vi.at(h, w) * wx * -sgn(py - h);
              }
          }
        gg.accum_grad(image, gi);
        gg.accum_grad(flow, gf);
      });
}

// ---- binary flow file format ----
// magic "AFLW", u32 LE height, u32 LE width, then H*W*2 f32 LE values in
// (F_x, F_y) row-major order.

namespace detail {
inline void put_u32le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline uint32_t get_u32le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::invalid_argument("flow: truncated file " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
inline void put_f32le(std::ostream& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32le(out, v);
}
inline float get_f32le(std::istream& in, const std::string& path) {
  uint32_t v = get_u32le(in, path);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}
}  // namespace detail

inline void write_flow(const FlowField& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("flow: cannot write " + path);
  out.write("AFLW", 4);
  detail::put_u32le(out, static_cast<uint32_t>(f.height));
  detail::put_u32le(out, static_cast<uint32_t>(f.width));
  for (double v : f.v) detail::put_f32le(out, static_cast<float>(v));
  if (!out) throw std::invalid_argument("flow: write failed for " + path);
}

inline FlowField read_flow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("flow: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "AFLW")
    throw std::invalid_argument("flow: bad magic in " + path);
  uint32_t h = detail::get_u32le(in, path);
  uint32_t w = detail::get_u32le(in, path);
  if (h == 0 || w == 0 || h > 1u << 20 || w > 1u << 20)
    throw std::invalid_argument("flow: implausible dimensions in " + path);
  FlowField f(static_cast<int>(h), static_cast<int>(w));
  for (double& v : f.v) v = detail::get_f32le(in, path);
  return f;
}

}  // namespace uda
