// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// SpecAug-style augmentation of a [T x C] EEG window: one piecewise-linear
// time warp, then time-span and channel-span masks filled with the window mean.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "sdanet/rng.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

struct AugmentConfig {
  std::size_t n_time_masks = 2;
  double max_time_mask_frac = 0.1;
  std::size_t n_channel_masks = 2;
  double max_channel_mask_frac = 0.1;
  std::size_t max_warp_samples = 9;
  bool enabled = true;

  void validate() const {
    if (!(max_time_mask_frac >= 0.0 && max_time_mask_frac < 1.0) ||
        !(max_channel_mask_frac >= 0.0 && max_channel_mask_frac < 1.0)) {
      throw std::invalid_argument("augment config: mask fractions must lie in [0, 1)");
    }
  }
};

/// Moves sample `pivot` to `pivot + shift`, stretching both sides linearly;
/// every output row is a linear interpolation of two input rows.
inline Tensor time_warp(const Tensor& x, std::size_t pivot, std::ptrdiff_t shift) {
  const std::size_t t = x.dim(0), c = x.dim(1);
  const auto dst_pivot = static_cast<std::ptrdiff_t>(pivot) + shift;
  if (pivot == 0 || pivot + 1 >= t || dst_pivot <= 0 || dst_pivot >= static_cast<std::ptrdiff_t>(t) - 1) {
    throw std::invalid_argument("time_warp: pivot/shift leave an empty segment");
  }
  const double p = static_cast<double>(pivot), q = static_cast<double>(dst_pivot);
  const double last = static_cast<double>(t - 1);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < t; ++i) {
    const double ti = static_cast<double>(i);
    const double src = ti <= q ? ti * p / q : p + (ti - q) * (last - p) / (last - q);
    const auto lo = std::min(static_cast<std::size_t>(src), t - 1);
    const std::size_t hi = std::min(lo + 1, t - 1);
    const double frac = src - static_cast<double>(lo);
    for (std::size_t ch = 0; ch < c; ++ch) {
      out.at(i, ch) = frac == 0.0 ? x.at(lo, ch) : x.at(lo, ch) * (1.0 - frac) + x.at(hi, ch) * frac;
    }
  }
  return out;
}

inline double window_mean(const Tensor& x) { return x.sum() / static_cast<double>(x.size()); }

inline void mask_time(Tensor& x, std::size_t start, std::size_t len, double fill) {
  const std::size_t c = x.dim(1);
  for (std::size_t i = start; i < start + len && i < x.dim(0); ++i)
    for (std::size_t ch = 0; ch < c; ++ch) x.at(i, ch) = fill;
}

inline void mask_channels(Tensor& x, std::size_t start, std::size_t len, double fill) {
  for (std::size_t i = 0; i < x.dim(0); ++i)
    for (std::size_t ch = start; ch < start + len && ch < x.dim(1); ++ch) x.at(i, ch) = fill;
}

/// Applies warp and masks to an EEG window. Mask spans stay inside the window
/// and are filled with the mean of the warped, not yet masked, window.
/// A disabled config returns the input unchanged.
inline Tensor specaug(const Tensor& window, const AugmentConfig& cfg, RngState& rng) {
  cfg.validate();
  if (window.rank() != 2) throw ShapeError("specaug: expected [T x C], got " + shape_str(window.shape()));
  if (!cfg.enabled) return window;
  const std::size_t t = window.dim(0), c = window.dim(1);
  Tensor x = window;
  const std::size_t w = cfg.max_warp_samples;
  if (w > 0 && t > 2 * w + 3) {
    const auto pivot = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(w + 1),
                                                                 static_cast<std::int64_t>(t - 2 - w)));
    const auto shift = static_cast<std::ptrdiff_t>(rng.uniform_int(-static_cast<std::int64_t>(w), static_cast<std::int64_t>(w)));
    if (shift != 0) x = time_warp(x, pivot, shift);
  }
  const double fill = window_mean(x);
  const auto max_t = static_cast<std::size_t>(cfg.max_time_mask_frac * static_cast<double>(t));
  for (std::size_t m = 0; m < cfg.n_time_masks; ++m) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_t)));
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(t - len)));
    mask_time(x, start, len, fill);
  }
  const auto max_c = static_cast<std::size_t>(cfg.max_channel_mask_frac * static_cast<double>(c));
  for (std::size_t m = 0; m < cfg.n_channel_masks; ++m) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_c)));
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(c - len)));
    mask_channels(x, start, len, fill);
  }
  return x;
}

}  // namespace sdanet
