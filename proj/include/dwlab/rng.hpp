#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace dwlab::rng {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// A block is a pure function of (counter, key), so any draw addressed by a
// (seed, index...) tuple is identical no matter which thread evaluates it,
// in what order, or how the surrounding loop is partitioned.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Uniform double in [0,1) with 53 random bits, addressed by (seed, c0..c3).
double uniform01(std::uint64_t seed, std::uint32_t c0, std::uint32_t c1,
                 std::uint32_t c2, std::uint32_t c3);

// Stable sub-seed for a named component stream. All randomness in the tool
// flows from one top-level seed through these derivations:
//   derive_seed(seed, label)        = mix(seed ^ fnv1a64(label))
//   derive_seed(seed, label, index) = mix(derive_seed(seed, label)
//                                         ^ (index + 1) * GOLDEN)
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index);

// Sequential convenience view over the counter engine: draw k within a
// (seed, stream) pair is philox(counter = {stream, k}, key = seed).
class SequenceRng {
 public:
  SequenceRng(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  double next_u01();
  std::uint64_t next_u64();
  // Uniform integer in [lo, hi], both ends inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi);
  bool next_bernoulli(double p) { return next_u01() < p; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t n_ = 0;
};

}  // namespace dwlab::rng
