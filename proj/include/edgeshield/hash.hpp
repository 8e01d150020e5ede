#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace edgeshield {

/// FNV-1a 64 over raw bytes, as 16 lowercase hex digits.
inline std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace edgeshield
