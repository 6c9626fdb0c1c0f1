#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gnm {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// PCG32 with explicit Box-Muller normals. std::*_distribution is not
// bit-stable across standard libraries, so everything random in the
// project goes through this generator.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0, uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(uint64_t seed, uint64_t stream = 0) {
    state_ = 0;
    inc_ = (splitmix64(stream ^ 0xda3e39cb94b95bdbull) << 1u) | 1u;
    next_u32();
    state_ += splitmix64(seed);
    next_u32();
    has_spare_ = false;
    spare_ = 0.0;
  }

  // Independent child stream, e.g. one per scene index or train step.
  Rng fork(uint64_t stream) const {
    return Rng(splitmix64(state_ ^ splitmix64(stream)), stream);
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Unbiased integer in [0, n).
  uint32_t uniform_int(uint32_t n) {
    uint64_t m = static_cast<uint64_t>(next_u32()) * n;
    uint32_t lo = static_cast<uint32_t>(m);
    if (lo < n) {
      uint32_t t = (0u - n) % n;
      while (lo < t) {
        m = static_cast<uint64_t>(next_u32()) * n;
        lo = static_cast<uint32_t>(m);
      }
    }
    return static_cast<uint32_t>(m >> 32);
  }

  // Uniform in [0, 1).
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  // Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-12) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 1;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gnm
