#pragma once

// FMAT: dense float32 matrix file.
//
//   offset  size  field
//   0       4     magic "FMAT"
//   4       4     version, u32 LE (= 1)
//   8       4     rows, u32 LE
//   12      4     cols, u32 LE
//   16      4*rows*cols  payload, f32 LE, row-major

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/crc.hpp>

#include "sddkit/error.hpp"
#include "sddkit/fileio.hpp"

namespace sdd {

static_assert(std::numeric_limits<float>::is_iec559, "FMAT requires IEEE-754 binary32 floats");

/// Row-major float32 matrix; the in-memory twin of an FMAT file.
struct FloatMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  FloatMatrix() = default;
  FloatMatrix(std::uint32_t r, std::uint32_t c, float fill = 0.0f)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const noexcept { return rows == 0 || cols == 0; }

  /// Bitwise equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
  friend bool operator==(const FloatMatrix& a, const FloatMatrix& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           (a.data.empty() ||
            std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
  }
};

namespace fmat {

inline constexpr char kMagic[4] = {'F', 'M', 'A', 'T'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

}  // namespace detail

/// CRC-32 (IEEE 802.3, as in zlib) over the little-endian payload bytes.
inline std::uint32_t payload_crc32(const FloatMatrix& m) {
  boost::crc_32_type crc;
  if constexpr (std::endian::native == std::endian::little) {
    crc.process_bytes(m.data.data(), m.data.size() * sizeof(float));
  } else {
    for (float f : m.data) {
      auto u = std::bit_cast<std::uint32_t>(f);
      unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                            static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
      crc.process_bytes(b, 4);
    }
  }
  return crc.checksum();
}

inline std::string encode(const FloatMatrix& m) {
  if (m.data.size() != static_cast<std::size_t>(m.rows) * m.cols)
    throw ValidationError("matrix storage does not match its shape");
  std::string out;
  out.reserve(kHeaderBytes + m.data.size() * 4);
  out.append(kMagic, 4);
  detail::put_u32(out, kVersion);
  detail::put_u32(out, m.rows);
  detail::put_u32(out, m.cols);
  for (float f : m.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline FloatMatrix decode(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("truncated FMAT header", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad FMAT magic", 0);
  if (auto v = detail::get_u32(bytes, 4); v != kVersion)
    throw FormatError("unsupported FMAT version " + std::to_string(v), 4);
  FloatMatrix m;
  m.rows = detail::get_u32(bytes, 8);
  m.cols = detail::get_u32(bytes, 12);
  const std::uint64_t expected = kHeaderBytes + std::uint64_t{m.rows} * m.cols * 4;
  if (bytes.size() < expected)
    throw FormatError("truncated FMAT payload: header declares " + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols) + " (" + std::to_string(expected) + " bytes), file has " +
                          std::to_string(bytes.size()),
                      bytes.size());
  if (bytes.size() > expected)
    throw FormatError("trailing bytes after FMAT payload", expected);
  m.data.resize(static_cast<std::size_t>(m.rows) * m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    m.data[i] = std::bit_cast<float>(detail::get_u32(bytes, kHeaderBytes + 4 * i));
  return m;
}

}  // namespace fmat

inline void write_fmat(const std::filesystem::path& path, const FloatMatrix& m) {
  write_file_atomic(path, fmat::encode(m));
}

inline FloatMatrix read_fmat(const std::filesystem::path& path) {
  return fmat::decode(read_file(path));
}

}  // namespace sdd
