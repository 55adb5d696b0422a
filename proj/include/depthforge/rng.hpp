#pragma once

#include <cmath>
#include <cstdint>

namespace depthforge {

// SplitMix64 generator. Chosen over std:: distributions so that every
// stream is bit-reproducible across platforms and standard-library
// versions; all stochastic behaviour in the library routes through this.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Uniform integer in [0, n). Lemire-style multiply-shift (no modulo bias
  // worth caring about at these ranges, and fully deterministic).
  std::uint64_t uniform_int(std::uint64_t n) {
    using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((u128(next_u64()) * u128(n)) >> 64);
  }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(uniform_int(
                    static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  // Standard normal via Box-Muller (hand-rolled for portability;
  // std::normal_distribution is implementation-defined).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 strictly inside (0,1) so the log is finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Declared per-member seed derivation: member i of an ensemble keyed by
// `master` always draws from derive_seed(master, i), so results are
// invariant to how the members are scheduled.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  Rng g(master ^ (index * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL));
  return g.next_u64();
}

}  // namespace depthforge
