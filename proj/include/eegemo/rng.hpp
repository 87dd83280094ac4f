#ifndef EEGEMO_RNG_HPP
#define EEGEMO_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace eegemo::rng {

// Pinned generator stack, used everywhere randomness is needed so that runs
// are reproducible bit-for-bit across implementations:
//
//   * splitmix64 expands a 64-bit seed into stream states.
//   * xoshiro256** 1.0 produces the raw 64-bit stream.
//   * doubles in [0,1) take the top 53 bits: (x >> 11) * 2^-53.
//   * bounded integers use rejection sampling on x % bound.
//   * permutations are Fisher-Yates, i = n-1 .. 1, j = below(i+1).
//   * normals use the Box-Muller transform (see Gaussian below).

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

// Derives an independent substream seed from a base seed and an index.
inline uint64_t substream(uint64_t seed, uint64_t index) {
  SplitMix64 sm(seed ^ (0x9E3779B97F4A7C15ull * (index + 1)));
  return sm.next();
}

class Xoshiro256 {
 public:
  explicit Xoshiro256(uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : state_) s = sm.next();
  }

  uint64_t next() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Unbiased uniform in [0, bound), bound >= 1.
  uint64_t next_below(uint64_t bound) {
    const uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
};

// Standard normal deviates via Box-Muller; generates pairs, hands them out
// one at a time. u1 is mapped to (0,1] so the log never sees zero.
class Gaussian {
 public:
  explicit Gaussian(Xoshiro256& rng) : rng_(rng) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - rng_.next_double();
    const double u2 = rng_.next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  Xoshiro256& rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline std::vector<uint32_t> permutation(uint32_t n, Xoshiro256& rng) {
  std::vector<uint32_t> p(n);
  for (uint32_t i = 0; i < n; ++i) p[i] = i;
  for (uint32_t i = n; i > 1; --i) {
    const uint64_t j = rng.next_below(i);
    const uint32_t tmp = p[i - 1];
    p[i - 1] = p[j];
    p[j] = tmp;
  }
  return p;
}

}  // namespace eegemo::rng

#endif
