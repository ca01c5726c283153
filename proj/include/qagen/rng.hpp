#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qagen {

/// Deterministic random stream. The engine sequence is fixed by the standard
/// and the conversions below avoid implementation-defined distributions, so
/// streams are reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal (Box-Muller).
  double normal();

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t fnv1a(std::string_view s);

/// Counter-based stream for one (tag, index) draw site under `master`.
/// Independent of the order or thread in which sites are visited.
Rng derive_stream(std::uint64_t master, std::string_view tag, std::uint64_t index);

}  // namespace qagen
