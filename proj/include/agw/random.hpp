#pragma once

#include <cstdint>
#include <string_view>

namespace agw {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view text,
                                       std::uint64_t hash = 0xCBF29CE484222325ull) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

/// Independent stream seed for a named sub-entity of a run.
inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                           std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ fnv1a64(label)) + index);
}

}  // namespace agw
