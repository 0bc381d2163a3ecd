#include "dwlab/rng.hpp"

#include <stdexcept>

namespace dwlab::rng {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer; bijective on 64-bit values.
std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(kPhiloxM1) * ctr[2];
    const auto lo0 = std::uint32_t(p0), hi0 = std::uint32_t(p0 >> 32);
    const auto lo1 = std::uint32_t(p1), hi1 = std::uint32_t(p1 >> 32);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

double uniform01(std::uint64_t seed, std::uint32_t c0, std::uint32_t c1,
                 std::uint32_t c2, std::uint32_t c3) {
  const auto block = philox4x32(
      {c0, c1, c2, c3},
      {std::uint32_t(seed), std::uint32_t(seed >> 32)});
  const std::uint64_t bits =
      (std::uint64_t(block[0]) << 32) | std::uint64_t(block[1]);
  return double(bits >> 11) * 0x1.0p-53;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return mix64(seed ^ fnv1a64(label));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index) {
  return mix64(derive_seed(seed, label) ^ ((index + 1) * kGolden));
}

double SequenceRng::next_u01() {
  const std::uint64_t bits = next_u64();
  return double(bits >> 11) * 0x1.0p-53;
}

std::uint64_t SequenceRng::next_u64() {
  const auto block = philox4x32(
      {std::uint32_t(stream_), std::uint32_t(stream_ >> 32),
       std::uint32_t(n_), std::uint32_t(n_ >> 32)},
      {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)});
  ++n_;
  return (std::uint64_t(block[0]) << 32) | std::uint64_t(block[1]);
}

std::int64_t SequenceRng::next_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw std::invalid_argument("next_int: lo > hi");
  const std::uint64_t span = std::uint64_t(hi - lo) + 1;
  return lo + std::int64_t(next_u64() % span);
}

}  // namespace dwlab::rng
