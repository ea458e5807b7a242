// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace sdanet {

/// Deterministic random stream: std::mt19937_64 seeded from a 64-bit seed.
///
/// Only the raw engine output is used; the uniform/normal transforms below are
/// written out explicitly because the standard distributions are allowed to
/// differ between library implementations. Streams are split by hashing
/// (seed, key) through SplitMix64, so child streams never depend on how many
/// numbers the parent has already drawn.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), rejection-free via 128-bit multiply.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<unsigned __int128>(hi - lo) + 1;
    const auto r = static_cast<unsigned __int128>(engine_()) * span;
    return lo + static_cast<std::int64_t>(r >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Child stream keyed by an integer. Independent of this stream's position.
  [[nodiscard]] RngState split(std::uint64_t key) const { return RngState(mix(seed_ ^ mix(key + 0x51ed27u))); }

  /// Child stream keyed by a string (e.g. a recording id).
  [[nodiscard]] RngState split(std::string_view key) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : key) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return split(h);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sdanet
