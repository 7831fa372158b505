#pragma once

#include <cstdint>
#include <limits>

namespace gradlens {

// SplitMix64, used only to expand a 64-bit seed into generator state and to
// derive independent per-stream seeds.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// xoshiro256** (Blackman & Vigna). State is filled with four SplitMix64
// outputs of the seed. Satisfies UniformRandomBitGenerator.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& word : s_) word = sm.next();
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4];
};

// Standard normal variates by the Box-Muller transform. Each pair of uniforms
// (u1, u2) yields r*cos(2*pi*u2) then r*sin(2*pi*u2), r = sqrt(-2 ln(1 - u1)).
// The second value is cached and returned by the following call.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()();
  double operator()(double mean, double stddev) { return mean + stddev * (*this)(); }

  Xoshiro256& engine() { return rng_; }

 private:
  Xoshiro256 rng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Seed for an independent stream `stream` under a master seed. Used so that
// parallel work items draw the same numbers regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace gradlens
