#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "tforge/errors.hpp"

namespace tforge::io {

// Little-endian scalar writer over any std::ostream.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os_) throw IoError("write failed");
  }

  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
  void str(std::string_view s) { bytes(s.data(), s.size()); }

 private:
  template <typename T>
  void le(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    bytes(buf, sizeof(T));
  }

  std::ostream& os_;
};

// Little-endian scalar reader; throws FormatError with `context` on EOF.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(void* p, std::size_t n, const char* context) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw FormatError(std::string("truncated file while reading ") + context);
  }

  std::uint8_t u8(const char* ctx) {
    std::uint8_t v;
    bytes(&v, 1, ctx);
    return v;
  }
  std::uint16_t u16(const char* ctx) { return le<std::uint16_t>(ctx); }
  std::uint32_t u32(const char* ctx) { return le<std::uint32_t>(ctx); }
  std::uint64_t u64(const char* ctx) { return le<std::uint64_t>(ctx); }
  float f32(const char* ctx) {
    std::uint32_t bits = le<std::uint32_t>(ctx);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n, const char* ctx) {
    std::string s(n, '\0');
    if (n) bytes(s.data(), n, ctx);
    return s;
  }

 private:
  template <typename T>
  T le(const char* ctx) {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T), ctx);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& is_;
};

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  return os;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return is;
}

// Packs a {0,1}-valued buffer into bytes, row-major, MSB first.
template <typename T>
std::vector<std::uint8_t> pack_bits(std::span<const T> values) {
  std::vector<std::uint8_t> out((values.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    bool ink;
    if constexpr (std::is_floating_point_v<T>)
      ink = values[i] >= static_cast<T>(0.5);
    else
      ink = values[i] != 0;
    if (ink) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  return out;
}

template <typename T>
void unpack_bits(std::span<const std::uint8_t> bytes, std::size_t count, T* out) {
  for (std::size_t i = 0; i < count; ++i)
    out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u ? static_cast<T>(1) : static_cast<T>(0);
}

}  // namespace tforge::io
