#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace hsiseg {

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = kFnvOffset) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

// Hash of a file's full contents; throws std::runtime_error if unreadable.
uint64_t fnv1a64_file(const std::string& path);

std::string hash_hex(uint64_t h);

}  // namespace hsiseg
