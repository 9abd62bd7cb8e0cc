#pragma once

#include <cstdint>
#include <random>

namespace ssn {

// Seedable generator with a fixed, portable output sequence.
//
// Raw bits come from std::mt19937_64, whose output is fully specified by the
// standard. Uniform variates take the top 53 bits and are offset by half an
// ulp so they lie strictly inside (0, 1). Normal variates use the inverse CDF,
// z = -sqrt(2) * erfc^-1(2u), one uniform per normal. Standard library
// distributions are avoided because their algorithms are implementation
// defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  // Uniform integer in [0, n) by rejection; n >= 1.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer applied to a combination of two words. Used to derive
// independent child seeds (per iteration, per sweep cell).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace ssn
