#pragma once

#include <cmath>
#include <cstdint>

namespace hst {

/// Deterministic splitmix64 stream. The whole state is one word so snapshots
/// serialize into checkpoints and runs replay bit-for-bit across platforms.
/// Floating-point draws are derived in double and narrowed by the caller when
/// needed, keeping sample sequences identical between precisions.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed = 0) : state(seed) {}

  uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0,n). Multiply-shift map; the residual bias is below
  /// 2^-64 for the small ranges used here.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next()) * n) >> 64);
  }

  int range_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  /// Standard normal via Box-Muller (one sample per call, no cached spare, so
  /// the draw count stays an explicit function of call count).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Normal(0, sigma^2) restricted to [-2 sigma, 2 sigma] by rejection.
  double trunc_normal(double sigma) {
    for (;;) {
      double z = normal();
      if (z >= -2.0 && z <= 2.0) return z * sigma;
    }
  }

  /// Child stream decorrelated from this one; advances this stream once.
  Rng split() { return Rng(next() ^ 0x6a09e667f3bcc909ull); }
};

}  // namespace hst
