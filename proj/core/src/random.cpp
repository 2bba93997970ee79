#include "evalign/random.hpp"

#include <cmath>
#include <numbers>

namespace evalign {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (lo == hi) return lo;
  return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % n;
}

namespace {

double box_muller(double u1, double u2) {
  // u1 in (0, 1] keeps the log finite.
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

double Rng::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return box_muller(u1, u2);
}

double hashed_normal(std::uint64_t seed, std::uint64_t index) noexcept {
  const std::uint64_t a = derive_seed(seed, 2 * index);
  const std::uint64_t b = derive_seed(seed, 2 * index + 1);
  const double u1 = 1.0 - static_cast<double>(a >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return box_muller(u1, u2);
}

}  // namespace evalign
