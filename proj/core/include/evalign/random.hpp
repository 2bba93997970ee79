#pragma once

#include <cstdint>
#include <random>

namespace evalign {

/// Mixes a 64-bit value (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives an independent stream seed from (seed, index). Used so that
/// per-image / per-pixel randomness does not depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Seeded generator with platform-independent conversions. The standard
/// distributions are implementation-defined, so all draws go through these
/// helpers instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform in [lo, hi]; returns lo when lo == hi.
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t index(std::uint64_t n);

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// Standard normal draw that is a pure function of (seed, index).
double hashed_normal(std::uint64_t seed, std::uint64_t index) noexcept;

}  // namespace evalign
