// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Match/mismatch window samplers on the 64 Hz timeline.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdanet/rng.hpp"

namespace sdanet {

inline constexpr std::size_t kWindowSamples = 192;  // 3 s at 64 Hz
inline constexpr double kMaxOverlap = 0.35;

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Window {
  std::size_t start = 0;
  std::size_t length = kWindowSamples;

  [[nodiscard]] std::size_t end() const { return start + length; }
  friend bool operator==(const Window&, const Window&) = default;
};

/// |a ∩ b| / length for equal-length windows.
inline double overlap_fraction(const Window& a, const Window& b) {
  if (a.length != b.length) {
    throw std::invalid_argument("overlap_fraction: window lengths " + std::to_string(a.length) + " and " +
                                std::to_string(b.length) + " differ");
  }
  if (a.length == 0) throw std::invalid_argument("overlap_fraction: zero-length window");
  const std::size_t lo = std::max(a.start, b.start), hi = std::min(a.end(), b.end());
  return hi > lo ? static_cast<double>(hi - lo) / static_cast<double>(a.length) : 0.0;
}

/// One hop between consecutive match windows: round(u * 64) samples, u ~ Uniform[1, 2) seconds.
inline std::size_t draw_shift_samples(RngState& rng) {
  return static_cast<std::size_t>(std::llround(rng.uniform(1.0, 2.0) * 64.0));
}

/// Sliding windows starting at 0 with random 1-2 s hops, up to the last one
/// that fits. A recording shorter than one window yields no windows and a warning.
inline std::vector<Window> sample_match_windows(std::size_t rec_len, std::size_t window, RngState& rng,
                                                std::vector<std::string>* warnings = nullptr) {
  std::vector<Window> out;
  if (rec_len < window) {
    if (warnings) {
      warnings->push_back("recording of " + std::to_string(rec_len) + " samples is shorter than one window of " +
                          std::to_string(window));
    }
    return out;
  }
  for (std::size_t s = 0; s + window <= rec_len; s += draw_shift_samples(rng)) out.push_back({s, window});
  return out;
}

/// Fixed-stride windows (no randomization); the reference sampling scheme.
inline std::vector<Window> stride_windows(std::size_t rec_len, std::size_t window, std::size_t stride) {
  std::vector<Window> out;
  if (stride == 0) throw std::invalid_argument("stride_windows: stride must be positive");
  for (std::size_t s = 0; s + window <= rec_len; s += stride) out.push_back({s, window});
  return out;
}

inline bool mismatch_acceptable(const Window& match, const Window& cand, double max_overlap) {
  return overlap_fraction(match, cand) < max_overlap;
}

/// True when some in-bounds window overlaps `match` by less than `max_overlap`.
inline bool mismatch_feasible(const Window& match, std::size_t rec_len, double max_overlap) {
  if (rec_len < match.length) return false;
  const std::size_t last = rec_len - match.length;
  // The candidates farthest from the match are the two ends of the timeline.
  return mismatch_acceptable(match, {0, match.length}, max_overlap) ||
         mismatch_acceptable(match, {last, match.length}, max_overlap);
}

/// Rejection-samples a uniformly placed window of the same length whose
/// overlap with `match` is below `max_overlap`. Never returns a violating window.
inline Window sample_mismatch(const Window& match, std::size_t rec_len, RngState& rng, double max_overlap = kMaxOverlap,
                              std::size_t max_tries = 1000) {
  if (!mismatch_feasible(match, rec_len, max_overlap)) {
    throw SamplingError("sample_mismatch: no window in a recording of " + std::to_string(rec_len) +
                        " samples overlaps [" + std::to_string(match.start) + "," + std::to_string(match.end()) +
                        ") by less than " + std::to_string(max_overlap));
  }
  const auto last = static_cast<std::int64_t>(rec_len - match.length);
  for (std::size_t i = 0; i < max_tries; ++i) {
    const Window cand{static_cast<std::size_t>(rng.uniform_int(0, last)), match.length};
    if (mismatch_acceptable(match, cand, max_overlap)) return cand;
  }
  throw SamplingError("sample_mismatch: gave up after " + std::to_string(max_tries) + " tries");
}

/// Deterministic mismatch for the fixed-stride scheme: the window starting one
/// second after the match ends, or ending one second before it starts when
/// that runs past the recording.
inline Window stride_mismatch(const Window& match, std::size_t rec_len, std::size_t gap = 64) {
  if (match.end() + gap + match.length <= rec_len) return {match.end() + gap, match.length};
  if (match.start >= gap + match.length) return {match.start - gap - match.length, match.length};
  throw SamplingError("stride_mismatch: recording of " + std::to_string(rec_len) + " samples has no disjoint window");
}

}  // namespace sdanet
