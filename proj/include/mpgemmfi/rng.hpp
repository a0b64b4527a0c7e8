#pragma once

#include <cmath>
#include <cstdint>

namespace mpgemmfi {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

// Counter-based generator.  Draw n of stream s under seed m is a pure
// function of (m, s, n): streams can be opened in any order, on any thread,
// and replay identically.  One stream per campaign trial keeps trials
// independent of execution schedule.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed + kGamma * (stream + 1))) {}

  std::uint64_t next() { return mix64(key_ + kGamma * ++counter_); }

  // Exactly uniform over [0, n): multiply-shift with rejection, no modulo
  // bias.  n must be nonzero.
  std::uint64_t bounded(std::uint64_t n) {
    unsigned __int128 m = (unsigned __int128)next() * n;
    auto lo = std::uint64_t(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
      while (lo < threshold) {
        m = (unsigned __int128)next() * n;
        lo = std::uint64_t(m);
      }
    }
    return std::uint64_t(m >> 64);
  }

  // Uniform on (0, 1]; never zero, so logarithms are safe.
  double unit() { return double((next() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (double(next() >> 11) * 0x1.0p-53);
  }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + std::int64_t(bounded(std::uint64_t(hi - lo) + 1u));
  }

  // Standard normal via Box-Muller, one cached mate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double r = std::sqrt(-2.0 * std::log(unit()));
    const double a = 6.283185307179586476925287 * (double(next() >> 11) * 0x1.0p-53);
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace mpgemmfi
