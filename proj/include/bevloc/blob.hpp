#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bevloc {

// Tensor blob format: 32-byte header followed by the payload.
//   bytes  0..3   magic "BVL1"
//   bytes  4..7   element kind, little-endian u32 (1 = float32)
//   bytes  8..11  rank, little-endian u32 (1..5)
//   bytes 12..31  five little-endian u32 dimension sizes, unused slots 0
// Payload: row-major little-endian float32 values.

constexpr std::uint32_t kBlobElemF32 = 1;

namespace detail {

inline void put_u32_le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32_le(unsigned char* p, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32_le(p, bits);
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = get_u32_le(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

struct Blob {
  std::vector<std::size_t> dims;
  std::vector<double> values;  // converted from float32 payload

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
};

inline void write_blob(std::ostream& out, const std::vector<std::size_t>& dims,
                       const double* values) {
  if (dims.empty() || dims.size() > 5)
    throw std::invalid_argument("write_blob: rank must be 1..5");
  std::array<unsigned char, 32> header{};
  header[0] = 'B';
  header[1] = 'V';
  header[2] = 'L';
  header[3] = '1';
  detail::put_u32_le(header.data() + 4, kBlobElemF32);
  detail::put_u32_le(header.data() + 8, static_cast<std::uint32_t>(dims.size()));
  std::size_t count = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    detail::put_u32_le(header.data() + 12 + 4 * i, static_cast<std::uint32_t>(dims[i]));
    count *= dims[i];
  }
  out.write(reinterpret_cast<const char*>(header.data()), header.size());
  std::vector<unsigned char> payload(count * 4);
  for (std::size_t i = 0; i < count; ++i)
    detail::put_f32_le(payload.data() + 4 * i, static_cast<float>(values[i]));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write_blob: stream write failed");
}

inline Blob read_blob(std::istream& in) {
  std::array<unsigned char, 32> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (!in) throw std::runtime_error("read_blob: truncated header");
  if (header[0] != 'B' || header[1] != 'V' || header[2] != 'L' || header[3] != '1')
    throw std::runtime_error("read_blob: bad magic");
  const std::uint32_t kind = detail::get_u32_le(header.data() + 4);
  if (kind != kBlobElemF32) throw std::runtime_error("read_blob: unsupported element kind");
  const std::uint32_t rank = detail::get_u32_le(header.data() + 8);
  if (rank < 1 || rank > 5) throw std::runtime_error("read_blob: bad rank");
  Blob blob;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = detail::get_u32_le(header.data() + 12 + 4 * i);
    if (d == 0) throw std::runtime_error("read_blob: zero dimension");
    blob.dims.push_back(d);
    count *= d;
  }
  std::vector<unsigned char> payload(count * 4);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!in) throw std::runtime_error("read_blob: truncated payload");
  blob.values.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    blob.values[i] = static_cast<double>(detail::get_f32_le(payload.data() + 4 * i));
  return blob;
}

inline void write_blob_file(const std::filesystem::path& path,
                            const std::vector<std::size_t>& dims, const double* values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_blob_file: cannot open " + path.string());
  write_blob(out, dims, values);
}

inline Blob read_blob_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_blob_file: cannot open " + path.string());
  return read_blob(in);
}

}  // namespace bevloc
