#pragma once

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace ttcshield {

// Every stochastic operation takes one of these by reference; there is no global RNG.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive fold of 64-bit words into one seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t w : words) h = splitmix64(h ^ splitmix64(w));
  return h;
}

inline std::uint64_t double_bits(double v) {
  if (v == 0.0) v = 0.0;  // fold -0.0 onto +0.0
  return std::bit_cast<std::uint64_t>(v);
}

}  // namespace ttcshield
