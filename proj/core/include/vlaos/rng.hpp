#pragma once

#include <cmath>
#include <cstdint>

namespace vlaos {

// PCG32: small deterministic generator. We do not use <random> distributions
// because their outputs are implementation-defined; every sampled value in
// the project must be bit-stable across platforms.
class Pcg32 {
 public:
  Pcg32() = default;
  explicit Pcg32(uint64_t seed, uint64_t stream = 0xda3e39cb94b95bdbULL) { reseed(seed, stream); }

  void reseed(uint64_t seed, uint64_t stream = 0xda3e39cb94b95bdbULL) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31u));
  }

  // Uniform in [0, 1), 24 bits of entropy.
  double next_double() { return (next_u32() >> 8) * 0x1.0p-24; }
  float next_float() { return static_cast<float>(next_double()); }

  // Uniform integer in [0, n).
  uint32_t next_below(uint32_t n) {
    return static_cast<uint32_t>(next_double() * static_cast<double>(n));
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; consumes two draws per pair, caches the second.
  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 1e-12);
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  uint64_t state() const { return state_; }
  uint64_t inc() const { return inc_; }
  void restore(uint64_t state, uint64_t inc) {
    state_ = state;
    inc_ = inc;
    has_cached_ = false;
  }

 private:
  uint64_t state_ = 0x853c49e6748fea9bULL;
  uint64_t inc_ = 0xda3e39cb94b95bdbULL;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// FNV-1a 64-bit, used for file checksums and parameter digests.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t hash_str(const char* s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s; ++s) {
    h ^= static_cast<unsigned char>(*s);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace vlaos
