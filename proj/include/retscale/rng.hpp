#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

#include <cstdint>
#include <random>

namespace retscale::rng {

// splitmix64 finalizer. Doubles as the feature-hashing mix.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream id from a seed plus coordinates (cell indices etc.).
inline std::uint64_t mix(std::uint64_t seed) { return splitmix64(seed); }

template <class... Rest>
std::uint64_t mix(std::uint64_t seed, std::uint64_t head, Rest... rest) {
  return mix(splitmix64(seed ^ splitmix64(head + 0x632be59bd9b4e019ULL)), rest...);
}

/**
 * mt19937_64 with hand-rolled sampling. std::uniform_int_distribution and
 * friends are implementation-defined, so every draw here goes through fully
 * specified arithmetic: identical sequences on every platform.
 */
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n), n >= 1. Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool next_bernoulli(double p) { return next_real() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace retscale::rng
