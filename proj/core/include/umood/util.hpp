#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace umood {

// Locale-independent float formatting; 17 significant digits round-trip a
// double exactly, which is what every CSV in the project uses.
inline std::string format_double(double v, int significant = 17) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general,
                                 significant);
  return std::string(buf, res.ptr);
}

// FNV-1a 64-bit; used for config hashes recorded in run provenance.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace umood
