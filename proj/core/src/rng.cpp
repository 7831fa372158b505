#include "gradlens/rng.hpp"

#include <cmath>
#include <numbers>

namespace gradlens {

double NormalSampler::operator()() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = rng_.uniform();
  const double u2 = rng_.uniform();
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double phase = 2.0 * std::numbers::pi * u2;
  cached_ = radius * std::sin(phase);
  has_cached_ = true;
  return radius * std::cos(phase);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  SplitMix64 outer(master);
  const std::uint64_t base = outer.next();
  SplitMix64 inner(base ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  return inner.next();
}

}  // namespace gradlens
