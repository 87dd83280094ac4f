#ifndef EEGEMO_BYTEIO_HPP
#define EEGEMO_BYTEIO_HPP

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "eegemo/errors.hpp"

// Little-endian primitives for the binary container formats.
namespace eegemo::byteio {

inline void put_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline void put_f32_array(std::ostream& os, const float* v, size_t n) {
  for (size_t i = 0; i < n; ++i) put_f32(os, v[i]);
}

inline void read_exact(std::istream& is, void* dst, size_t n,
                       const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n)
    throw FormatError(std::string("truncated file while reading ") + what);
}

inline uint16_t get_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  read_exact(is, b, 2, what);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_exact(is, b, 4, what);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  read_exact(is, b, 8, what);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline float get_f32(std::istream& is, const char* what) {
  const uint32_t bits = get_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void get_f32_array(std::istream& is, float* dst, size_t n,
                          const char* what) {
  std::vector<unsigned char> buf(n * 4);
  read_exact(is, buf.data(), buf.size(), what);
  for (size_t i = 0; i < n; ++i) {
    uint32_t bits = 0;
    for (int k = 3; k >= 0; --k) bits = (bits << 8) | buf[i * 4 + static_cast<size_t>(k)];
    std::memcpy(&dst[i], &bits, 4);
  }
}

// Remaining bytes from the current position to EOF; restores the position.
inline uint64_t bytes_left(std::istream& is) {
  const auto at = is.tellg();
  is.seekg(0, std::ios::end);
  const auto end = is.tellg();
  is.seekg(at);
  return static_cast<uint64_t>(end - at);
}

}  // namespace eegemo::byteio

#endif
