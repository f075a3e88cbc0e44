#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "uda/tensor.hpp"

namespace uda {

// Flat binary checkpoint of named tensors. Per entry: name length (u16 LE),
// name bytes, rank (u8), extents (u32 LE each), values (f32 LE). Entries are
// concatenated until end of file.

namespace detail {
inline void ckpt_put_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}
inline void ckpt_put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline void ckpt_put_f32(std::ostream& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  ckpt_put_u32(out, v);
}
inline bool ckpt_get(std::istream& in, unsigned char* buf, size_t n) {
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
  return in.gcount() == static_cast<std::streamsize>(n);
}
}  // namespace detail

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void save_checkpoint(const NamedTensors& tensors, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("checkpoint: cannot write " + path);
  for (const auto& [name, t] : tensors) {
    if (name.size() > 65535) throw std::invalid_argument("checkpoint: name too long");
    detail::ckpt_put_u16(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(t.rank()));
    for (int e : t.shape()) detail::ckpt_put_u32(out, static_cast<uint32_t>(e));
    for (int64_t i = 0; i < t.numel(); ++i) detail::ckpt_put_f32(out, static_cast<float>(t[i]));
  }
  if (!out) throw std::invalid_argument("checkpoint: write failed for " + path);
}

inline NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("checkpoint: cannot open " + path);
  NamedTensors out;
  while (true) {
    unsigned char lenb[2];
    if (!detail::ckpt_get(in, lenb, 2)) break;  // clean EOF between entries
    size_t len = lenb[0] | (static_cast<size_t>(lenb[1]) << 8);
    std::string name(len, '\0');
    if (!detail::ckpt_get(in, reinterpret_cast<unsigned char*>(name.data()), len))
      throw std::invalid_argument("checkpoint: truncated name in " + path);
    unsigned char rank;
    if (!detail::ckpt_get(in, &rank, 1))
      throw std::invalid_argument("checkpoint: truncated rank in " + path);
    Shape shape(rank);
    for (int i = 0; i < rank; ++i) {
      unsigned char eb[4];
      if (!detail::ckpt_get(in, eb, 4))
        throw std::invalid_argument("checkpoint: truncated extents in " + path);
      uint32_t e = eb[0] | (static_cast<uint32_t>(eb[1]) << 8) |
                   (static_cast<uint32_t>(eb[2]) << 16) | (static_cast<uint32_t>(eb[3]) << 24);
      if (e == 0 || e > (1u << 28)) throw std::invalid_argument("checkpoint: bad extent in " + path);
      shape[i] = static_cast<int>(e);
    }
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
      unsigned char vb[4];
      if (!detail::ckpt_get(in, vb, 4))
        throw std::invalid_argument("checkpoint: truncated values in " + path);
      uint32_t v = vb[0] | (static_cast<uint32_t>(vb[1]) << 8) | (static_cast<uint32_t>(vb[2]) << 16) |
                   (static_cast<uint32_t>(vb[3]) << 24);
      float f;
      std::memcpy(&f, &v, 4);
      t[i] = f;
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace uda
