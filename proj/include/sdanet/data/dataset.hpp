// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// From recordings to model batches: 64 Hz preparation, time splits,
// match/mismatch pair generation and subject-balanced batch composition.

#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sdanet/data/dsp.hpp"
#include "sdanet/data/recording.hpp"
#include "sdanet/data/specaug.hpp"
#include "sdanet/data/windows.hpp"
#include "sdanet/rng.hpp"
#include "sdanet/serialize.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

/// A recording (or a time segment of one) at 64 Hz: standardized EEG and envelope.
struct PreparedRecording {
  std::string subject_id;
  std::string recording_id;
  Tensor eeg;       // [N x C]
  Tensor envelope;  // [N x 1]

  [[nodiscard]] std::size_t length() const { return eeg.dim(0); }
};

/// Resamples both streams to 64 Hz, trims them to a common length and
/// standardizes every EEG channel and the envelope over the whole recording.
inline PreparedRecording prepare_recording(const Recording& r) {
  validate_recording(r);
  PreparedRecording p;
  p.subject_id = r.subject_id;
  p.recording_id = r.label();
  Tensor eeg = resample_to_64hz(r.eeg, r.fs_eeg);
  Tensor env = envelope_unstandardized(r.stimulus, r.fs_audio);
  const std::size_t n = std::min(eeg.dim(0), env.dim(0));
  p.eeg = standardize_columns(slice_rows(eeg, 0, n), p.recording_id + " EEG");
  p.envelope = standardize_columns(slice_rows(env, 0, n), p.recording_id + " envelope");
  return p;
}

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  /// Parses "train:val:test", e.g. "0.7:0.1:0.2". Fractions must be positive and sum to 1.
  static SplitFractions parse(const std::string& s) {
    SplitFractions f;
    char c1 = 0, c2 = 0;
    std::istringstream is(s);
    if (!(is >> f.train >> c1 >> f.val >> c2 >> f.test) || c1 != ':' || c2 != ':' || !(is >> std::ws).eof()) {
      throw std::invalid_argument("split spec \"" + s + "\" is not of the form train:val:test");
    }
    f.validate();
    return f;
  }
  void validate() const {
    if (!(train > 0 && val > 0 && test > 0) || std::abs(train + val + test - 1.0) > 1e-9) {
      throw std::invalid_argument("split fractions must be positive and sum to 1");
    }
  }
  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os << train << ':' << val << ':' << test;
    return os.str();
  }
};

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

/// Every recording cut in time into contiguous train | val | test segments,
/// so each subject appears in each split.
struct DatasetSplits {
  std::vector<PreparedRecording> train, val, test;

  [[nodiscard]] const std::vector<PreparedRecording>& get(Split s) const {
    return s == Split::train ? train : s == Split::val ? val : test;
  }
};

inline DatasetSplits split_dataset(const std::vector<PreparedRecording>& recs, const SplitFractions& f) {
  f.validate();
  DatasetSplits out;
  for (const auto& r : recs) {
    const std::size_t n = r.length();
    // The slack keeps e.g. 0.7 + 0.1 from landing one sample short of 0.8 * n.
    const auto cut = [n](double frac) {
      return std::min(n, static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9)));
    };
    const std::size_t a = cut(f.train), b = cut(f.train + f.val);
    auto seg = [&](std::size_t lo, std::size_t hi) {
      return PreparedRecording{r.subject_id, r.recording_id, slice_rows(r.eeg, lo, hi), slice_rows(r.envelope, lo, hi)};
    };
    out.train.push_back(seg(0, a));
    out.val.push_back(seg(a, b));
    out.test.push_back(seg(b, n));
  }
  return out;
}

/// One training instance. Slot A holds the match when label == 1.
struct WindowPair {
  Tensor eeg_window;    // [T x C]
  Tensor match_env;     // [T x 1]
  Tensor mismatch_env;  // [T x 1]
  Window match_window;
  Window mismatch_window;
  std::string subject_id;
  int label = 1;
};

enum class Sampling {
  randomized,  // random 1-2 s hops, rejection-sampled mismatches (< 35 % overlap)
  fixed,       // 1 s stride, mismatch one second after the match (reference scheme)
};

/// Pairs for one prepared segment. Segments too short for a window or a
/// feasible mismatch contribute nothing (reported through `warnings`).
inline std::vector<WindowPair> make_pairs(const PreparedRecording& rec, Sampling mode, std::size_t window, RngState& rng,
                                          std::vector<std::string>* warnings = nullptr) {
  std::vector<WindowPair> out;
  const std::size_t n = rec.length();
  const std::vector<Window> wins =
      mode == Sampling::randomized ? sample_match_windows(n, window, rng, warnings) : stride_windows(n, window, 64);
  for (const Window& m : wins) {
    Window mm;
    try {
      mm = mode == Sampling::randomized ? sample_mismatch(m, n, rng) : stride_mismatch(m, n);
    } catch (const SamplingError& e) {
      if (warnings) warnings->push_back(rec.recording_id + ": " + e.what());
      continue;
    }
    out.push_back({slice_rows(rec.eeg, m.start, m.end()), slice_rows(rec.envelope, m.start, m.end()),
                   slice_rows(rec.envelope, mm.start, mm.end()), m, mm, rec.subject_id, 1});
  }
  return out;
}

using PairPool = std::map<std::string, std::vector<WindowPair>>;  // by subject

/// Pairs of every segment, grouped by subject. Each segment samples from its
/// own stream split off `rng` by recording id.
inline PairPool make_pool(const std::vector<PreparedRecording>& segs, Sampling mode, std::size_t window,
                          const RngState& rng, std::vector<std::string>* warnings = nullptr) {
  PairPool pool;
  for (const auto& s : segs) {
    RngState r = rng.split(s.recording_id);
    auto pairs = make_pairs(s, mode, window, r, warnings);
    auto& dst = pool[s.subject_id];
    for (auto& p : pairs) dst.push_back(std::move(p));
  }
  return pool;
}

inline std::size_t pool_size(const PairPool& pool) {
  std::size_t n = 0;
  for (const auto& [_, v] : pool) n += v.size();
  return n;
}

/// Model-ready batch: [B x T x C] EEG, [B x T x 1] stimuli, labels in {0, 1}.
struct SampleBatch {
  Tensor eeg;
  Tensor stim_a;
  Tensor stim_b;
  Tensor labels;
  std::vector<std::string> subjects;

  [[nodiscard]] std::size_t size() const { return labels.size(); }

  [[nodiscard]] std::uint64_t hash() const {
    Fnv1a h;
    h.add(eeg);
    h.add(stim_a);
    h.add(stim_b);
    h.add(labels);
    return h.value();
  }
};

/// Stacks pairs into a batch, placing the match in slot A when label == 1.
inline SampleBatch assemble_batch(std::span<const WindowPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("assemble_batch: no pairs");
  std::vector<Tensor> eeg, a, b;
  SampleBatch out;
  out.labels = Tensor(Shape{pairs.size()});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    eeg.push_back(p.eeg_window);
    a.push_back(p.label == 1 ? p.match_env : p.mismatch_env);
    b.push_back(p.label == 1 ? p.mismatch_env : p.match_env);
    out.labels[i] = p.label;
    out.subjects.push_back(p.subject_id);
  }
  out.eeg = stack(eeg);
  out.stim_a = stack(a);
  out.stim_b = stack(b);
  return out;
}

namespace detail {

/// First `k` elements of a Fisher-Yates shuffle of [0, n).
inline std::vector<std::size_t> choose(std::size_t n, std::size_t k, RngState& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// Draws `subjects_per_batch` distinct subjects and batch_size/subjects_per_batch
/// distinct pairs from each, and flips a fair coin per pair to decide which
/// slot holds the match.
inline SampleBatch compose_batch(const PairPool& pool, std::size_t batch_size, std::size_t subjects_per_batch,
                                 RngState& rng) {
  if (subjects_per_batch == 0 || batch_size % subjects_per_batch != 0) {
    throw std::invalid_argument("compose_batch: batch_size must be a multiple of subjects_per_batch");
  }
  const std::size_t per = batch_size / subjects_per_batch;
  std::vector<const std::string*> eligible;
  for (const auto& [subj, pairs] : pool)
    if (pairs.size() >= per) eligible.push_back(&subj);
  if (eligible.size() < subjects_per_batch) {
    throw SamplingError("compose_batch: need " + std::to_string(subjects_per_batch) + " subjects with at least " +
                        std::to_string(per) + " pairs each, only " + std::to_string(eligible.size()) + " of " +
                        std::to_string(pool.size()) + " qualify");
  }
  std::vector<WindowPair> chosen;
  chosen.reserve(batch_size);
  for (std::size_t si : detail::choose(eligible.size(), subjects_per_batch, rng)) {
    const auto& pairs = pool.at(*eligible[si]);
    for (std::size_t pi : detail::choose(pairs.size(), per, rng)) {
      WindowPair p = pairs[pi];
      p.label = rng.bernoulli(0.5) ? 1 : 0;
      chosen.push_back(std::move(p));
    }
  }
  return assemble_batch(chosen);
}

/// Applies SpecAug independently to every EEG window of the batch.
inline void augment_batch(SampleBatch& b, const AugmentConfig& cfg, RngState& rng) {
  if (!cfg.enabled) return;
  const std::size_t n = b.eeg.dim(0), t = b.eeg.dim(1), c = b.eeg.dim(2);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor w(Shape{t, c}, std::vector<double>(b.eeg.ptr() + i * t * c, b.eeg.ptr() + (i + 1) * t * c));
    Tensor aug = specaug(w, cfg, rng);
    std::copy(aug.ptr(), aug.ptr() + t * c, b.eeg.ptr() + i * t * c);
  }
}

/// Frozen evaluation pairs: all pairs of the split, match slot decided by a
/// seeded coin, in a fixed order (subject, then time).
inline std::vector<WindowPair> evaluation_pairs(const std::vector<PreparedRecording>& segs, Sampling mode,
                                                std::size_t window, const RngState& rng) {
  PairPool pool = make_pool(segs, mode, window, rng);
  RngState coin = rng.split("order");
  std::vector<WindowPair> out;
  for (auto& [_, pairs] : pool)
    for (auto& p : pairs) {
      p.label = coin.bernoulli(0.5) ? 1 : 0;
      out.push_back(std::move(p));
    }
  return out;
}

/// Consecutive chunks of at most `batch_size` pairs.
inline std::vector<SampleBatch> chunk_batches(std::span<const WindowPair> pairs, std::size_t batch_size) {
  std::vector<SampleBatch> out;
  for (std::size_t i = 0; i < pairs.size(); i += batch_size) {
    out.push_back(assemble_batch(pairs.subspan(i, std::min(batch_size, pairs.size() - i))));
  }
  return out;
}

inline std::uint64_t pairs_hash(std::span<const WindowPair> pairs) {
  Fnv1a h;
  for (const auto& p : pairs) {
    h.add(p.eeg_window);
    h.add(p.match_env);
    h.add(p.mismatch_env);
    h.add(static_cast<std::uint64_t>(p.label));
  }
  return h.value();
}

}  // namespace sdanet
