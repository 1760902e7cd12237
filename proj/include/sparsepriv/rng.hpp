#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace sparsepriv {

/// SplitMix64 mixing step. Used for counter-based seed derivation so that a
/// master seed fans out into independent per-trial / per-model / per-point
/// streams without any stream ever depending on how many others were drawn.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a base seed and an ordered path of components.
/// derive_seed(s, {a, b}) != derive_seed(s, {b, a}) by construction.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t c : path) h = splitmix64(h ^ splitmix64(c));
  return h;
}

/// Deterministic random stream. The raw engine is std::mt19937_64 (its output
/// sequence is pinned by the standard); all transforms to floating point are
/// implemented here rather than with std::*_distribution, whose output is
/// implementation-defined. Same seed, same platform-independent stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in the open interval (lo, hi).
  double uniform(double lo, double hi) {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return lo + (hi - lo) * u;
  }

  /// Standard normal via Box-Muller (cosine branch, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Unbiased integer in [0, n) by rejection.
  std::size_t index(std::size_t n) {
    if (n <= 1) return 0;
    std::uint64_t bound = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t x = next_u64();
    while (x >= bound) x = next_u64();
    return static_cast<std::size_t>(x % n);
  }

  /// Seeded Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace sparsepriv
