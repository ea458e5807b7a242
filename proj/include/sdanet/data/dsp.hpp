// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// FIR low-pass design, zero-phase filtering, integer-ratio decimation to
// 64 Hz, and speech-envelope extraction.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdanet/tensor.hpp"

namespace sdanet {

inline constexpr double kTargetRate = 64.0;

class RateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Hamming-windowed sinc low-pass with an odd number of taps, scaled to unit DC gain.
inline std::vector<double> design_lowpass(double cutoff_hz, double fs, std::size_t taps) {
  if (taps % 2 == 0) throw std::invalid_argument("design_lowpass: taps must be odd");
  if (!(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0)) throw std::invalid_argument("design_lowpass: cutoff outside (0, fs/2)");
  std::vector<double> h(taps);
  const double fc = cutoff_hz / fs;
  const auto half = static_cast<double>(taps / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double m = static_cast<double>(i) - half;
    const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    const double win = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(taps - 1));
    h[i] = sinc * win;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

namespace detail {

/// Whole-sample symmetric reflection about the edges (edge sample not repeated).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(n - 1);
  const std::ptrdiff_t period = 2 * last;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i <= last ? i : period - i);
}

}  // namespace detail

/// Zero-phase (centered) FIR filter of every column of `signal` [N x C],
/// evaluated only at rows start, start+stride, ... < N. Edges are reflected.
inline Tensor fir_filter_strided(const Tensor& signal, const std::vector<double>& h, std::size_t stride) {
  if (signal.rank() != 2) throw ShapeError("fir_filter: expected [N x C], got " + shape_str(signal.shape()));
  const std::size_t n = signal.dim(0), c = signal.dim(1);
  const std::size_t nout = (n + stride - 1) / stride;
  const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
  Tensor out(Shape{nout, c});
  const double* x = signal.ptr();
  for (std::size_t o = 0; o < nout; ++o) {
    const auto center = static_cast<std::ptrdiff_t>(o * stride);
    double* y = out.ptr() + o * c;
    if (center >= half && center + half < static_cast<std::ptrdiff_t>(n)) {
      const double* base = x + static_cast<std::size_t>(center - half) * c;
      if (c == 1) {
        double acc = 0.0;
        for (std::size_t j = 0; j < h.size(); ++j) acc += h[j] * base[j];
        y[0] = acc;
      } else {
        for (std::size_t j = 0; j < h.size(); ++j) {
          const double w = h[j];
          const double* row = base + j * c;
          for (std::size_t ch = 0; ch < c; ++ch) y[ch] += w * row[ch];
        }
      }
      continue;
    }
    for (std::size_t j = 0; j < h.size(); ++j) {
      const std::size_t src = detail::reflect_index(center + static_cast<std::ptrdiff_t>(j) - half, n);
      const double w = h[j];
      const double* row = x + src * c;
      for (std::size_t ch = 0; ch < c; ++ch) y[ch] += w * row[ch];
    }
  }
  return out;
}

/// Decimation factor fs_in / 64; throws unless it is a positive integer.
inline std::size_t decimation_factor(double fs_in) {
  const double r = fs_in / kTargetRate;
  if (!(fs_in >= kTargetRate) || std::abs(r - std::round(r)) > 1e-9) {
    throw RateError("unsupported rate " + std::to_string(fs_in) + " Hz: only integer multiples of 64 Hz are resampled");
  }
  return static_cast<std::size_t>(std::llround(r));
}

/// Anti-aliased decimation to 64 Hz. Low-pass at 0.9 * 32 Hz with 64*r + 1
/// Hamming-windowed taps (r = fs_in / 64), zero-phase, then keep every r-th
/// sample starting at 0. Output length ceil(N / r). fs_in == 64 is a copy.
inline Tensor resample_to_64hz(const Tensor& signal, double fs_in) {
  const std::size_t r = decimation_factor(fs_in);
  if (r == 1) return signal;
  const auto h = design_lowpass(0.9 * kTargetRate / 2.0, fs_in, 64 * r + 1);
  return fir_filter_strided(signal, h, r);
}

inline constexpr double kEnvelopeCutoff = 25.0;

/// Rectified, 25 Hz low-passed and 64 Hz-resampled amplitude envelope, before
/// standardization. Output length ceil(M * 64 / fs_audio).
inline Tensor envelope_unstandardized(const Tensor& audio, double fs_audio) {
  const std::size_t r = decimation_factor(fs_audio);
  if (audio.rank() != 2 || audio.dim(1) != 1) throw ShapeError("envelope: audio must be [M x 1], got " + shape_str(audio.shape()));
  Tensor rect = audio;
  for (double& v : rect.data()) v = std::abs(v);
  if (r == 1) return rect;  // already at 64 Hz; the 25 Hz filter would need fs > 50 Hz anyway
  const auto h = design_lowpass(kEnvelopeCutoff, fs_audio, 64 * r + 1);
  return resample_to_64hz(fir_filter_strided(rect, h, 1), fs_audio);
}

/// Zero-mean, unit-variance columns. Throws RecordingError-style message when a
/// column has zero variance; `what` names the source in the message.
inline Tensor standardize_columns(const Tensor& x, const std::string& what) {
  if (x.rank() != 2 || x.dim(0) < 2) throw ShapeError("standardize: need [N x C] with N >= 2");
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor out = x;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu = 0.0;
    for (std::size_t t = 0; t < n; ++t) mu += x.at(t, ch);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t t = 0; t < n; ++t) var += (x.at(t, ch) - mu) * (x.at(t, ch) - mu);
    var /= static_cast<double>(n);
    if (!(var > 1e-24)) {
      throw std::domain_error(what + ": zero variance in channel " + std::to_string(ch) + ", cannot standardize");
    }
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t t = 0; t < n; ++t) out.at(t, ch) = (x.at(t, ch) - mu) * inv;
  }
  return out;
}

/// Envelope feature fed to the network: envelope_unstandardized followed by
/// per-recording standardization. `recording_id` appears in error messages.
inline Tensor extract_envelope(const Tensor& audio, double fs_audio, const std::string& recording_id = "audio") {
  return standardize_columns(envelope_unstandardized(audio, fs_audio), recording_id);
}

}  // namespace sdanet
