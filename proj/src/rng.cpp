#include "qagen/rng.hpp"

#include <cmath>
#include <numbers>

namespace qagen {

std::uint64_t Rng::below(std::uint64_t bound) {
  // Rejection sampling on the top of the range keeps draws unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

Rng derive_stream(std::uint64_t master, std::string_view tag, std::uint64_t index) {
  const std::uint64_t a = splitmix64(master);
  const std::uint64_t b = splitmix64(a ^ fnv1a(tag));
  return Rng(splitmix64(b ^ splitmix64(index)));
}

}  // namespace qagen
