#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace elfslam {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Named sub-seed: every random stream in the pipeline is derived from one
/// root seed plus a purpose string and optional integer coordinates, so
/// results never depend on the order in which streams are consumed.
template <typename... Ints>
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                                    Ints... coords) {
  std::uint64_t h = splitmix64(root ^ fnv1a64(purpose));
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(coords))), ...);
  return h;
}

}  // namespace elfslam
