#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mtlopt {

// Deterministic RNG. std::mt19937_64 is fully specified by the standard;
// the distributions below are hand-rolled because the standard library
// distributions are implementation-defined and would break bit-stable
// reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; caches the second value of each pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent sub-seeds from one
// run seed so that the consumers (init, mask, combiner, noise) do not
// share a stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named sub-streams, so call sites read as derive_seed(seed, Stream::kMask).
namespace seed_stream {
constexpr std::uint64_t kTrunkInit = 1;
constexpr std::uint64_t kHeadInit = 2;
constexpr std::uint64_t kMask = 3;
constexpr std::uint64_t kCombiner = 4;
constexpr std::uint64_t kTeacherTrunk = 5;
constexpr std::uint64_t kTeacherBaseHead = 6;
constexpr std::uint64_t kTeacherIndepHead = 7;
constexpr std::uint64_t kInputs = 8;
constexpr std::uint64_t kNoise = 9;
constexpr std::uint64_t kEvalInputs = 10;
constexpr std::uint64_t kEvalNoise = 11;
}  // namespace seed_stream

}  // namespace mtlopt
