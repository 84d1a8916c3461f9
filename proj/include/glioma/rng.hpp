#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace glioma {

// Deterministic random stream. std::*_distribution output is
// implementation-defined, so the distributions are spelled out here; the
// same seed gives bit-identical draws on every platform we build on.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0,1) with 53 random bits
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // uniform integer in [0, n); n > 0
  uint64_t below(uint64_t n) {
    // multiply-shift; bias is < 2^-64 per draw, identical everywhere
    unsigned __int128 m = static_cast<unsigned __int128>(gen_()) * n;
    return static_cast<uint64_t>(m >> 64);
  }

  // standard normal via Box-Muller (cached second value)
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // derive an independent stream (splitmix64 of seed material)
  static uint64_t derive(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace glioma
