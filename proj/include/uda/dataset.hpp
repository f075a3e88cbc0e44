#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "uda/flow.hpp"
#include "uda/image.hpp"
#include "uda/rng.hpp"
#include "uda/tensor.hpp"

// Synthetic two-domain classification tasks. Source and target share one
// label-generating process; the target is pushed through a deterministic
// shift. Target examples carry a subgroup tag (0 = "day", 1 = "night"): the
// night subgroup receives the photometric part of the shift at full strength,
// the day subgroup is spared it, mirroring the day/night split of the
// surveillance setting.

namespace uda {

enum class BaseTask { blobs, moons, glyphs };

struct ShiftDescriptor {
  double rotation_degrees = 0.0;  // rotation in the (rot_i, rot_j) plane; spatial for glyphs
  int rot_i = 0, rot_j = 1;
  double scale = 1.0;             // brightness-like multiplier, night subgroup only
  std::vector<int> scale_coords;  // affected coordinates (ignored for glyphs: whole image)
  double additive = 0.0;          // additive channel offset, night subgroup only
  int additive_coord = -1;
  std::vector<int> permutation;   // optional feature permutation (empty = none)

  bool is_zero() const {
    return rotation_degrees == 0.0 && scale == 1.0 && additive == 0.0 && permutation.empty();
  }
};

struct SyntheticDomainSpec {
  BaseTask base = BaseTask::blobs;
  int dims = 8;     // feature count (blobs/moons); glyphs are fixed at 16x16
  int classes = 3;
  int train_source = 2000;
  int train_target = 2000;
  int val_target = 1000;  // labeled target examples for supervised model selection
  int test_target = 2000;
  ShiftDescriptor shift;
  uint64_t seed = 0;

  // Blob geometry: class centers live on a circle in the (0,1) plane plus a
  // weaker class-coded anchor in the (4,5) plane that shifts never touch.
  double blob_center_radius = 2.0;
  double blob_anchor = 0.9;
  double blob_sigma = 0.6;

  void validate() const {
    if (classes < 2) throw std::invalid_argument("SyntheticDomainSpec: need at least 2 classes");
    if (train_source < 1 || train_target < 1 || val_target < 1 || test_target < 1)
      throw std::invalid_argument("SyntheticDomainSpec: all split sizes must be positive");
    if (base == BaseTask::blobs && dims < 6)
      throw std::invalid_argument("SyntheticDomainSpec: blobs need dims >= 6");
    if (base == BaseTask::moons && (dims < 2 || classes != 2))
      throw std::invalid_argument("SyntheticDomainSpec: moons need dims >= 2 and classes == 2");
    if (base == BaseTask::glyphs && classes > 4)
      throw std::invalid_argument("SyntheticDomainSpec: glyphs support up to 4 classes");
    if (!shift.permutation.empty() && static_cast<int>(shift.permutation.size()) != feature_dim())
      throw std::invalid_argument("SyntheticDomainSpec: permutation must cover every feature");
  }

  int feature_dim() const { return base == BaseTask::glyphs ? 16 * 16 : dims; }
};

struct DataSplit {
  Tensor x;                    // [n, d]
  std::vector<int> y;          // labels, 0..N-1
  std::vector<int> subgroup;   // 0 = day, 1 = night (source examples are all 0)
  std::vector<int64_t> ids;    // global example ids within the generated pool

  int size() const { return x.rank() == 2 ? x.extent(0) : 0; }
};

struct TwoDomainDataset {
  DataSplit source_train, target_train, target_val, target_test;
  int classes = 0;
  int dims = 0;
  int standardization_floor_hits = 0;
};

namespace detail {

inline void standardize_rows(Tensor& x, int* floor_hits) {
  // Per-example mean and sample standard deviation normalization.
  int n = x.extent(0), d = x.extent(1);
  if (d < 2) throw std::invalid_argument("standardize_rows: need at least 2 features");
  for (int i = 0; i < n; ++i) {
    double mean = 0;
    for (int j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
    double sd = std::sqrt(var / (d - 1));
    if (sd < 1e-8) {
      sd = 1e-8;
      if (floor_hits) {
        if (*floor_hits == 0)
          std::fprintf(stderr, "uda: standardization divisor floored at 1e-8 (degenerate example)\n");
        ++*floor_hits;
      }
    }
    for (int j = 0; j < d; ++j) x.at(i, j) = (x.at(i, j) - mean) / sd;
  }
}

inline std::vector<double> glyph_image(int cls, Rng& rng) {
  // Four 16x16 glyph families: disk, cross, horizontal bar, square outline.
  int n = 16;
  double cx = 7.5 + rng.uniform(-1.5, 1.5);
  double cy = 7.5 + rng.uniform(-1.5, 1.5);
  double size = rng.uniform(3.5, 5.0);
  std::vector<double> img(static_cast<size_t>(n) * n, 0.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double dx = x - cx, dy = y - cy;
      bool on = false;
      switch (cls) {
        case 0: on = dx * dx + dy * dy <= size * size; break;
        case 1: on = std::fabs(dx) <= 1.2 || std::fabs(dy) <= 1.2; break;
        case 2: on = std::fabs(dy) <= 1.8 && std::fabs(dx) <= size + 1.5; break;
        default: {
          double m = std::max(std::fabs(dx), std::fabs(dy));
          on = m <= size && m >= size - 2.0;
          break;
        }
      }
      if (on) img[static_cast<size_t>(y) * n + x] = rng.uniform(0.75, 1.0);
      else img[static_cast<size_t>(y) * n + x] = rng.uniform(0.0, 0.08);
    }
  return img;
}

inline std::vector<double> base_example(const SyntheticDomainSpec& spec, int cls, Rng& rng) {
  int d = spec.feature_dim();
  std::vector<double> x(d);
  switch (spec.base) {
    case BaseTask::blobs: {
      double theta = 1.5707963267948966 + 2.0 * 3.141592653589793 * cls / spec.classes;
      double phi = 0.7 + 2.0 * 3.141592653589793 * cls / spec.classes;
      for (int j = 0; j < d; ++j) x[j] = rng.normal(0.0, spec.blob_sigma);
      x[0] += spec.blob_center_radius * std::cos(theta);
      x[1] += spec.blob_center_radius * std::sin(theta);
      x[4] += spec.blob_anchor * std::cos(phi);
      x[5] += spec.blob_anchor * std::sin(phi);
      break;
    }
    case BaseTask::moons: {
      double t = rng.uniform(0.0, 3.141592653589793);
      double mx = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double my = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
      for (int j = 0; j < d; ++j) x[j] = rng.normal(0.0, 0.15);
      x[0] += 2.0 * mx;
      x[1] += 2.0 * my;
      break;
    }
    case BaseTask::glyphs:
      return glyph_image(cls, rng);
  }
  return x;
}

inline void apply_shift(const SyntheticDomainSpec& spec, std::vector<double>& x, int subgroup) {
  const ShiftDescriptor& s = spec.shift;
  if (spec.base == BaseTask::glyphs) {
    if (s.rotation_degrees != 0.0) {
      Image im(16, 16, 1);
      for (double v : x)
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("glyph shift: pixel outside [0,1]");
      im.v = x;
      Image rotated =
          warp_image(im, synthetic_flow(AffineTransform::rotation_about(7.5, 7.5, s.rotation_degrees),
                                        16, 16));
      x = rotated.v;
    }
    if (subgroup == 1) {
      for (double& v : x) v = std::min(1.0, std::max(0.0, v * s.scale + s.additive));
    }
  } else {
    if (s.rotation_degrees != 0.0) {
      double r = s.rotation_degrees * 3.141592653589793 / 180.0;
      double ca = std::cos(r), sa = std::sin(r);
      double xi = x[s.rot_i], xj = x[s.rot_j];
      x[s.rot_i] = ca * xi - sa * xj;
      x[s.rot_j] = sa * xi + ca * xj;
    }
    if (subgroup == 1) {
      for (int j : s.scale_coords) x[static_cast<size_t>(j)] *= s.scale;
      if (s.additive_coord >= 0) x[static_cast<size_t>(s.additive_coord)] += s.additive;
    }
  }
  if (!s.permutation.empty()) {
    std::vector<double> permuted(x.size());
    for (size_t j = 0; j < x.size(); ++j) permuted[j] = x[s.permutation[j]];
    x = permuted;
  }
}

}  // namespace detail

// Deterministic given the spec seed. Target pool indices are split into
// train/val/test without overlap; the ids record the pool positions so
// disjointness can be asserted downstream.
inline TwoDomainDataset make_two_domain_dataset(const SyntheticDomainSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  int d = spec.feature_dim();
  TwoDomainDataset out;
  out.classes = spec.classes;
  out.dims = d;

  auto fill_split = [&](DataSplit& split, int count, bool shifted, int64_t id_base) {
    split.x = Tensor({count, d});
    split.y.resize(count);
    split.subgroup.resize(count);
    split.ids.resize(count);
    for (int i = 0; i < count; ++i) {
      int cls = static_cast<int>(rng.uniform_index(spec.classes));
      int subgroup = shifted ? i % 2 : 0;
      std::vector<double> x = detail::base_example(spec, cls, rng);
      if (shifted) detail::apply_shift(spec, x, subgroup);
      for (int j = 0; j < d; ++j) split.x.at(i, j) = x[j];
      split.y[i] = cls;
      split.subgroup[i] = subgroup;
      split.ids[i] = id_base + i;
    }
    detail::standardize_rows(split.x, &out.standardization_floor_hits);
  };

  fill_split(out.source_train, spec.train_source, false, 0);
  int64_t target_base = 1'000'000;  // ids disjoint from source by construction
  fill_split(out.target_train, spec.train_target, true, target_base);
  fill_split(out.target_val, spec.val_target, true, target_base + spec.train_target);
  fill_split(out.target_test, spec.test_target, true,
             target_base + spec.train_target + spec.val_target);
  return out;
}

inline bool splits_disjoint(const DataSplit& a, const DataSplit& b) {
  std::vector<int64_t> ia = a.ids, ib = b.ids;
  std::sort(ia.begin(), ia.end());
  std::sort(ib.begin(), ib.end());
  std::vector<int64_t> common;
  std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(common));
  return common.empty();
}

// ---- checksums ----

inline uint64_t fnv1a_update(uint64_t h, const unsigned char* data, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t dataset_checksum(const TwoDomainDataset& ds) {
  uint64_t h = 14695981039346656037ull;
  auto add_split = [&](const DataSplit& s) {
    int32_t dims[2] = {s.size(), s.x.rank() == 2 ? s.x.extent(1) : 0};
    h = fnv1a_update(h, reinterpret_cast<const unsigned char*>(dims), sizeof(dims));
    h = fnv1a_update(h, reinterpret_cast<const unsigned char*>(s.x.data()),
                     static_cast<size_t>(s.x.numel()) * sizeof(double));
    h = fnv1a_update(h, reinterpret_cast<const unsigned char*>(s.y.data()),
                     s.y.size() * sizeof(int));
    h = fnv1a_update(h, reinterpret_cast<const unsigned char*>(s.subgroup.data()),
                     s.subgroup.size() * sizeof(int));
    h = fnv1a_update(h, reinterpret_cast<const unsigned char*>(s.ids.data()),
                     s.ids.size() * sizeof(int64_t));
  };
  add_split(ds.source_train);
  add_split(ds.target_train);
  add_split(ds.target_val);
  add_split(ds.target_test);
  return h;
}

// ---- IDX ingestion (MNIST-format files) ----

// Big-endian magic (0x00, 0x00, type, rank), rank u32 extents, raw bytes.
// Only the unsigned-byte type (0x08) is supported. Rank >= 2 data (images)
// is rescaled to [0, 1]; rank-1 data (labels) is returned as raw values.
inline Tensor load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("idx: cannot open " + path);
  unsigned char magic[4];
  in.read(reinterpret_cast<char*>(magic), 4);
  if (in.gcount() != 4 || magic[0] != 0 || magic[1] != 0)
    throw std::invalid_argument("idx: bad magic in " + path);
  if (magic[2] != 0x08)
    throw std::invalid_argument("idx: unsupported type byte " + std::to_string(magic[2]) + " in " +
                                path + " (only 0x08 unsigned byte supported)");
  int rank = magic[3];
  if (rank < 1 || rank > 4) throw std::invalid_argument("idx: implausible rank in " + path);
  Shape shape(rank);
  int64_t total = 1;
  for (int i = 0; i < rank; ++i) {
    unsigned char eb[4];
    in.read(reinterpret_cast<char*>(eb), 4);
    if (in.gcount() != 4) throw std::invalid_argument("idx: truncated header in " + path);
    uint32_t e = (static_cast<uint32_t>(eb[0]) << 24) | (static_cast<uint32_t>(eb[1]) << 16) |
                 (static_cast<uint32_t>(eb[2]) << 8) | eb[3];
    if (e == 0 || e > (1u << 28)) throw std::invalid_argument("idx: bad extent in " + path);
    shape[i] = static_cast<int>(e);
    total *= e;
  }
  std::vector<unsigned char> bytes(static_cast<size_t>(total));
  in.read(reinterpret_cast<char*>(bytes.data()), total);
  if (in.gcount() != total) throw std::invalid_argument("idx: truncated data in " + path);
  Tensor t(shape);
  if (rank == 1) {
    for (int64_t i = 0; i < total; ++i) t[i] = bytes[i];
  } else {
    for (int64_t i = 0; i < total; ++i) t[i] = bytes[i] / 255.0;
  }
  return t;
}

}  // namespace uda
