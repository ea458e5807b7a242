// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic EEG/stimulus generator with a known ground truth: a positive,
// band-limited envelope modulates a tone (the stimulus), and a lagged,
// standardized copy of the envelope is mixed linearly into a subset of EEG
// channels on top of spatially correlated Gaussian noise.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "sdanet/data/recording.hpp"
#include "sdanet/model/config.hpp"
#include "sdanet/rng.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

struct SynthConfig {
  std::size_t n_subjects = 8;
  std::size_t recordings_per_subject = 1;
  double duration_s = 150.0;
  double snr = 1.0;  // per mixed channel: var(signal) / var(noise)
  std::size_t lag_samples = 8;
  std::size_t mixing_channels = 16;
  std::size_t eeg_channels = 64;
  double fs_audio = 512.0;
  double carrier_hz = 200.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("synth config: " + m); };
    if (n_subjects == 0 || recordings_per_subject == 0) fail("need at least one subject and recording");
    if (!(duration_s > 0.0)) fail("duration_s must be positive");
    if (!(snr > 0.0)) fail("snr must be positive");
    if (eeg_channels == 0) fail("eeg_channels must be positive");
    if (mixing_channels < 1 || mixing_channels > eeg_channels) fail("mixing_channels must lie in [1, eeg_channels]");
    const double r = fs_audio / 64.0;
    if (!(r >= 1.0) || std::abs(r - std::round(r)) > 1e-9) fail("fs_audio must be an integer multiple of 64");
    if (!(carrier_hz > 0.0 && carrier_hz < fs_audio / 2.0)) fail("carrier_hz must lie below fs_audio / 2");
  }
};

/// Ground truth kept next to each generated recording (not stored in SDRC files).
struct SynthTruth {
  std::vector<std::size_t> mixed;  // channels carrying the envelope
  std::vector<double> alpha;       // mixing gain per channel (0 if unmixed)
  Tensor signal;                   // [N x C] envelope component of the EEG
  Tensor noise;                    // [N x C] noise component of the EEG
};

struct SynthRecording {
  Recording rec;
  SynthTruth truth;
};

namespace detail {

/// Positive, slowly varying process: rectified white noise smoothed by a
/// 17-tap Hann kernel (about 0.25 s at 64 Hz).
inline std::vector<double> smooth_rectified_noise(std::size_t n, RngState& rng) {
  constexpr std::size_t kTaps = 17;
  std::vector<double> k(kTaps);
  double ks = 0.0;
  for (std::size_t i = 0; i < kTaps; ++i) {
    k[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(kTaps + 1));
    ks += k[i];
  }
  std::vector<double> raw(n + kTaps - 1);
  for (double& v : raw) v = std::abs(rng.normal());
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kTaps; ++i) acc += k[i] * raw[t + i];
    out[t] = acc / ks;
  }
  return out;
}

}  // namespace detail

/// Generates n_subjects x recordings_per_subject recordings with EEG at 64 Hz
/// and the stimulus at fs_audio. Each subject gets its own noise covariance
/// and its own set of mixed channels; everything is a function of cfg.seed.
inline std::vector<SynthRecording> generate_synthetic_with_truth(const SynthConfig& cfg) {
  cfg.validate();
  const RngState master(cfg.seed);
  const std::size_t c = cfg.eeg_channels;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * 64.0));
  const auto up = static_cast<std::size_t>(std::llround(cfg.fs_audio / 64.0));
  std::vector<SynthRecording> out;
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    RngState srng = master.split("subject").split(s);
    // Spatial noise mixing L = 0.6 I + A, A_ij ~ N(0, 1/C): channel noise var = sum_j L_cj^2.
    std::vector<double> mix(c * c);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) mix[i * c + j] = (i == j ? 0.6 : 0.0) + srng.normal() / std::sqrt(static_cast<double>(c));
    std::vector<double> noise_var(c, 0.0);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) noise_var[i] += mix[i * c + j] * mix[i * c + j];
    std::vector<std::size_t> perm(c);
    for (std::size_t i = 0; i < c; ++i) perm[i] = i;
    for (std::size_t i = 0; i + 1 < c; ++i) {
      const auto j = static_cast<std::size_t>(srng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(c - 1)));
      std::swap(perm[i], perm[j]);
    }
    std::vector<std::size_t> mixed(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.mixing_channels));
    std::sort(mixed.begin(), mixed.end());
    std::vector<double> alpha(c, 0.0);
    for (std::size_t ch : mixed) alpha[ch] = std::sqrt(cfg.snr * noise_var[ch]);

    for (std::size_t r = 0; r < cfg.recordings_per_subject; ++r) {
      RngState rrng = srng.split(r);
      // env[t] drives the stimulus at time t - lag and the EEG at time t.
      const std::vector<double> env = detail::smooth_rectified_noise(n + cfg.lag_samples + 1, rrng);

      SynthRecording sr;
      sr.rec.subject_id = "S" + std::to_string(s + 1);
      sr.rec.recording_id = sr.rec.subject_id + "_R" + std::to_string(r + 1);
      sr.rec.fs_eeg = 64.0;
      sr.rec.fs_audio = cfg.fs_audio;

      // Stimulus: envelope (linearly interpolated to fs_audio) times a tone.
      Tensor stim(Shape{n * up, 1});
      for (std::size_t i = 0; i < n * up; ++i) {
        const double pos = static_cast<double>(i) / static_cast<double>(up) + static_cast<double>(cfg.lag_samples);
        const auto lo = static_cast<std::size_t>(pos);
        const double fr = pos - static_cast<double>(lo);
        const double e = env[lo] * (1.0 - fr) + env[lo + 1] * fr;
        stim[i] = e * std::sin(2.0 * std::numbers::pi * cfg.carrier_hz * static_cast<double>(i) / cfg.fs_audio);
      }

      // Standardized envelope as seen by the EEG (lagged by lag_samples).
      std::vector<double> z(env.begin(), env.begin() + static_cast<std::ptrdiff_t>(n));
      double mu = 0.0, var = 0.0;
      for (double v : z) mu += v;
      mu /= static_cast<double>(n);
      for (double v : z) var += (v - mu) * (v - mu);
      var /= static_cast<double>(n);
      for (double& v : z) v = (v - mu) / std::sqrt(var);

      sr.truth.mixed = mixed;
      sr.truth.alpha = alpha;
      sr.truth.signal = Tensor(Shape{n, c});
      sr.truth.noise = Tensor(Shape{n, c});
      std::vector<double> w(c);
      for (std::size_t t = 0; t < n; ++t) {
        for (double& v : w) v = rrng.normal();
        for (std::size_t i = 0; i < c; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += mix[i * c + j] * w[j];
          sr.truth.noise.at(t, i) = acc;
          sr.truth.signal.at(t, i) = alpha[i] * z[t];
        }
      }
      sr.rec.eeg = sr.truth.signal;
      for (std::size_t i = 0; i < sr.rec.eeg.size(); ++i) sr.rec.eeg[i] += sr.truth.noise[i];
      sr.rec.stimulus = std::move(stim);
      out.push_back(std::move(sr));
    }
  }
  return out;
}

inline std::vector<Recording> generate_synthetic(const SynthConfig& cfg) {
  std::vector<Recording> out;
  for (auto& s : generate_synthetic_with_truth(cfg)) out.push_back(std::move(s.rec));
  return out;
}

}  // namespace sdanet
