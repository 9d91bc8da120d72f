// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/tensor.hpp"

namespace ctmmcp {

// Flat tensor container:
//   "CTMW0001"
//   repeated until EOF:
//     u32 name_length, name bytes (UTF-8), u32 rows, u32 cols,
//     rows*cols little-endian IEEE-754 binary32 values, row-major
// All integers are little-endian.
inline constexpr std::array<char, 8> kWeightMagic = {'C', 'T', 'M', 'W', '0', '0', '0', '1'};

using TensorMap = std::map<std::string, Matrix>;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
      (std::uint32_t{b[3]} << 24);
  return true;
}

}  // namespace detail

inline void write_weights(std::ostream& out, const TensorMap& tensors) {
  out.write(kWeightMagic.data(), kWeightMagic.size());
  for (const auto& [name, m] : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (float v : m.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
}

inline TensorMap read_weights(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kWeightMagic)
    throw Error(ErrorKind::MalformedWeights, "bad magic");
  TensorMap out;
  std::uint32_t name_len = 0;
  while (detail::get_u32(in, name_len)) {
    std::string name(name_len, '\0');
    std::uint32_t rows = 0, cols = 0;
    if (!in.read(name.data(), name_len) || !detail::get_u32(in, rows) ||
        !detail::get_u32(in, cols))
      throw Error(ErrorKind::MalformedWeights, "truncated tensor header", name);
    std::vector<float> data(std::size_t{rows} * cols);
    for (auto& v : data) {
      std::uint32_t bits = 0;
      if (!detail::get_u32(in, bits))
        throw Error(ErrorKind::MalformedWeights, "truncated tensor data", name);
      v = std::bit_cast<float>(bits);
    }
    Matrix m(rows, cols, std::move(data));
    if (!m.all_finite()) throw Error(ErrorKind::MalformedWeights, "non-finite entry", name);
    if (!out.emplace(std::move(name), std::move(m)).second)
      throw Error(ErrorKind::MalformedWeights, "duplicate tensor");
  }
  if (in.gcount() != 0) throw Error(ErrorKind::MalformedWeights, "trailing bytes");
  return out;
}

inline void save_weights(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open for writing", path.string());
  write_weights(out, tensors);
  if (!out) throw Error(ErrorKind::IoError, "write failed", path.string());
}

inline TensorMap load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open", path.string());
  return read_weights(in);
}

}  // namespace ctmmcp
