#pragma once

// Little-endian binary IO helpers for the weights and patch file formats.
// Explicit byte packing keeps the formats portable regardless of host
// endianness.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "cargopatch/error.hpp"

namespace cargopatch {

inline void write_u32le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64le(std::ostream& out, std::uint64_t v) {
  write_u32le(out, static_cast<std::uint32_t>(v));
  write_u32le(out, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32le(std::ostream& out, float v) {
  write_u32le(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t read_u32le(std::istream& in, const std::string& context) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(context, "truncated file while reading " + context);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline std::uint64_t read_u64le(std::istream& in, const std::string& context) {
  const std::uint64_t lo = read_u32le(in, context);
  const std::uint64_t hi = read_u32le(in, context);
  return lo | hi << 32;
}

inline float read_f32le(std::istream& in, const std::string& context) {
  return std::bit_cast<float>(read_u32le(in, context));
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& context) {
  char got[4];
  if (!in.read(got, 4) || got[0] != magic[0] || got[1] != magic[1] || got[2] != magic[2] ||
      got[3] != magic[3])
    throw ParseError(context, "bad magic in " + context + ", expected " + magic);
}

}  // namespace cargopatch
