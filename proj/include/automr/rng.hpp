#ifndef AUTOMR_RNG_HPP
#define AUTOMR_RNG_HPP

#include <cstdint>
#include <cstddef>
#include <random>
#include <string_view>

namespace automr {

/// 64-bit FNV-1a. Used for content digests and stream names; stable across
/// platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view text,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded random source. Every draw helper is written out here instead of
/// using <random> distributions so sequences do not depend on the standard
/// library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n) {
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t draw = 0;
    do {
      draw = engine_();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
  }

  /// Derives an independent named stream. Depends only on the seed this
  /// generator was constructed with, never on how many draws were made.
  Rng split(std::string_view stream, std::uint64_t index = 0) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(stream)) + splitmix64(index + 0x5851f42d4c957f2dULL));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace automr

#endif  // AUTOMR_RNG_HPP
