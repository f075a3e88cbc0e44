#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "uda/tensor.hpp"

namespace uda {

// H x W x C raster with values in [0, 1]. Grayscale (C=1) round-trips through
// binary PGM (P5), RGB (C=3) through binary PPM (P6), both with maxval 255.
struct Image {
  int height = 0, width = 0, channels = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), v(static_cast<size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3))
      throw std::invalid_argument("Image: bad dimensions " + std::to_string(h) + "x" +
                                  std::to_string(w) + "x" + std::to_string(c));
  }

  double& at(int y, int x, int c = 0) { return v[(static_cast<size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c = 0) const {
    return v[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }

  void check_range() const {
    for (double x : v)
      if (!(x >= 0.0 && x <= 1.0))
        throw std::invalid_argument("Image: value " + std::to_string(x) + " outside [0,1]");
  }

  Tensor to_tensor() const {
    if (channels == 1) return Tensor({height, width}, v);
    return Tensor({height, width, channels}, v);
  }

  static Image from_tensor(const Tensor& t) {
    if (t.rank() == 2) {
      Image im(t.extent(0), t.extent(1), 1);
      im.v = t.values();
      return im;
    }
    if (t.rank() == 3) {
      Image im(t.extent(0), t.extent(1), t.extent(2));
      im.v = t.values();
      return im;
    }
    throw std::invalid_argument("Image::from_tensor: expected rank 2 or 3, got " +
                                shape_str(t.shape()));
  }
};

namespace detail {
inline int pnm_next_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header fields.
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = in.get();
    c = in.get();
  }
  if (c == EOF) throw std::invalid_argument("pnm: truncated header in " + path);
  int value = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw std::invalid_argument("pnm: malformed header in " + path);
  return value;
}
}  // namespace detail

inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("pnm: cannot open " + path);
  char m0 = static_cast<char>(in.get());
  char m1 = static_cast<char>(in.get());
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw std::invalid_argument("pnm: bad magic in " + path + " (want P5 or P6)");
  int channels = m1 == '5' ? 1 : 3;
  int w = detail::pnm_next_int(in, path);
  int h = detail::pnm_next_int(in, path);
  int maxval = detail::pnm_next_int(in, path);
  if (maxval != 255) throw std::invalid_argument("pnm: only maxval 255 supported in " + path);
  // pnm_next_int consumed exactly one byte past the maxval (the separator).
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw std::invalid_argument("pnm: truncated pixel data in " + path);
  Image im(h, w, channels);
  for (size_t i = 0; i < bytes.size(); ++i) im.v[i] = bytes[i] / 255.0;
  return im;
}

inline void write_pnm(const Image& im, const std::string& path) {
  im.check_range();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("pnm: cannot write " + path);
  out << (im.channels == 1 ? "P5" : "P6") << "\n" << im.width << " " << im.height << "\n255\n";
  std::vector<unsigned char> bytes(im.v.size());
  for (size_t i = 0; i < im.v.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(im.v[i] * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::invalid_argument("pnm: write failed for " + path);
}

// Mean absolute difference between a prediction and its target.
inline double l1_recon_error(const Image& predicted, const Image& target) {
  if (predicted.height != target.height || predicted.width != target.width ||
      predicted.channels != target.channels)
    throw std::invalid_argument("l1_recon_error: shape mismatch");
  double total = 0.0;
  for (size_t i = 0; i < predicted.v.size(); ++i) total += std::fabs(predicted.v[i] - target.v[i]);
  return total / static_cast<double>(predicted.v.size());
}

}  // namespace uda
