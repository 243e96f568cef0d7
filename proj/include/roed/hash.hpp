#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace roed {

// 64-bit FNV-1a; stable across platforms, used for cache keys and provenance.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace roed
