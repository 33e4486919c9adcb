#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace rpk {

// Deterministic randomness. Every stream in the project is a splitmix64
// sequence; named sub-streams are derived by hashing the name (FNV-1a) into
// the seed. The exact update and derivation rules below are part of the
// file-format/reproducibility contract: any reimplementation must match them
// bit for bit.

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = kFnvOffset;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

// One splitmix64 step: advances `state` and returns the next output.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  Rng() : seed_(0), state_(0) {}
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Child streams are derived from the *construction* seed, not the current
  // state, so they are independent of how much of the parent was consumed.
  Rng child(std::string_view name) const {
    std::uint64_t s = seed_ ^ fnv1a64(name);
    return Rng(splitmix64_next(s));
  }

  Rng child(std::uint64_t index) const {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((index >> (8 * i)) & 0xff);
    return child(std::string_view(buf, 8));
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Modulo bias is negligible for the desk-scale
  // ranges used here and keeps the derivation trivial to reproduce.
  std::uint64_t uniform_index(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Box-Muller, consuming exactly two uniforms per draw (no caching).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    double z = std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586476925286766559 * u2);
    return mean + stddev * z;
  }

  // Normal truncated to +-k_sigma standard deviations (rejection).
  double truncated_normal(double mean, double stddev, double k_sigma) {
    if (stddev <= 0.0) return mean;
    for (;;) {
      double z = normal(0.0, 1.0);
      if (std::abs(z) <= k_sigma) return mean + stddev * z;
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace rpk
