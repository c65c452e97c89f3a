#pragma once

#include <cmath>
#include <cstdint>

namespace clothspread {

// Deterministic PRNG used for every stochastic quantity in a run (sensor
// noise, retry offsets). splitmix64 plus an explicit Box-Muller transform
// so that identical seeds give bit-identical streams on every platform;
// std::normal_distribution does not guarantee that.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in (0, 1]; never returns 0 so log() below stays finite.
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Zero-mean Gaussian. Draws two uniforms per sample (no cached spare)
  // so the stream position is a pure function of the sample count.
  double next_gaussian(double stddev) {
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t state_;
};

// Collapses (seed, stream id, index) into one well-mixed 64-bit seed so
// independent noise streams can be carved out of a single scenario seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c = 0) {
  SplitMix64 m(a ^ (b * 0x9e3779b97f4a7c15ULL) ^
               (c * 0xc2b2ae3d27d4eb4fULL));
  m.next_u64();
  return m.next_u64();
}

}  // namespace clothspread
