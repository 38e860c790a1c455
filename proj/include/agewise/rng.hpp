#pragma once

#include <cstdint>

namespace agewise {

// Deterministic splittable generator (SplitMix64).  Every consumer of
// randomness in this library goes through this type so that results are
// reproducible bit-for-bit across platforms for a given seed.  Independent
// streams are obtained either from distinct seeds or via split().
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Derives an independent stream; the parent stream advances once.
  SplitMix64 split() { return SplitMix64(next() ^ 0x6a09e667f3bcc909ULL); }

 private:
  std::uint64_t state_;
};

}  // namespace agewise
