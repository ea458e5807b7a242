// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Shallow-deep attention network for EEG/stimulus match-mismatch decisions.
//
// Three inputs: an EEG window and two candidate stimulus envelopes. The two
// stimuli run through one auditory encoder (a single set of weights), the EEG
// through its own encoder. Each encoder is a stack of dilated conv blocks
// (conv k=3 -> BatchNorm -> ReLU -> dropout). After every block an optional
// cross-attention module re-weights the audio features using the EEG features
// as keys/values. Channelwise cosine similarities between each stimulus and
// the EEG at a shallow and a deep block feed a one-unit dense classifier.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sdanet/autodiff.hpp"
#include "sdanet/model/config.hpp"
#include "sdanet/model/params.hpp"
#include "sdanet/ops.hpp"
#include "sdanet/rng.hpp"

namespace sdanet {

/// Activations captured during one forward pass. Per-block vectors are indexed
/// from 0 (block 1 at index 0). Audio features are the post-attention values
/// (identical to the encoder output when attention is disabled).
struct ForwardTrace {
  std::vector<Var> x_prime;  // stimulus A features [B x T_n x F]
  std::vector<Var> y_prime;  // stimulus B features
  std::vector<Var> e;        // EEG features
  Var e_shallow;             // [B x 2F]
  Var e_deep;                // [B x 2F]
  Var embedding;             // [B x 4F] (or [B x 2F] without the shallow half)
  Var logit;                 // [B x 1]
  Var prob;                  // [B x 1]
};

struct BlockWeights {
  Var conv_w, conv_b, gamma, beta;
};

inline BlockWeights block_weights(const ParamLeaves& p, const std::string& prefix) {
  return {p.at(prefix + ".conv.weight"), p.at(prefix + ".conv.bias"), p.at(prefix + ".bn.gamma"),
          p.at(prefix + ".bn.beta")};
}

/// conv1d(k) -> BatchNorm -> ReLU -> dropout (training only). Output length T - (k-1)*dilation.
inline Var encoder_block(const Var& input, const BlockWeights& w, BatchNormStats& bn, std::size_t dilation,
                         Mode mode, double dropout_rate, RngState* rng) {
  Var h = conv1d_dilated(input, w.conv_w, w.conv_b, dilation);
  h = batchnorm1d(h, w.gamma, w.beta, bn, mode);
  h = relu(h);
  if (mode == Mode::train && dropout_rate > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("encoder_block: training with dropout needs an RngState");
    h = dropout(h, dropout_rate, *rng, true);
  }
  return h;
}

struct AcmWeights {
  Var wq, bq, wk, bk, wv, bv, wo, bo, w1, b1, w2, b2;
};

inline AcmWeights acm_weights(const ParamLeaves& p, const std::string& prefix) {
  auto g = [&](const char* s) { return p.at(prefix + s); };
  return {g(".q.weight"), g(".q.bias"), g(".k.weight"), g(".k.bias"), g(".v.weight"),   g(".v.bias"),
          g(".o.weight"), g(".o.bias"), g(".ff1.weight"), g(".ff1.bias"), g(".ff2.weight"), g(".ff2.bias")};
}

/// Attention-based correlation module. Queries come from the audio features,
/// keys and values from the EEG features:
///   h   = x + Wo * attention(x Wq, e Wk, e Wv)
///   out = h + ff2(relu(ff1(h)))
/// with dropout on both branch outputs before the residual adds when training.
inline Var acm(const Var& x_audio, const Var& e_eeg, const AcmWeights& w, Mode mode, double dropout_rate,
               RngState* rng) {
  if (x_audio.shape() != e_eeg.shape()) {
    throw ShapeError("acm: audio features " + shape_str(x_audio.shape()) + " and EEG features " +
                     shape_str(e_eeg.shape()) + " must share time and channel extents");
  }
  const bool drop = mode == Mode::train && dropout_rate > 0.0;
  if (drop && rng == nullptr) throw std::invalid_argument("acm: training with dropout needs an RngState");
  Var q = dense(x_audio, w.wq, w.bq);
  Var k = dense(e_eeg, w.wk, w.bk);
  Var v = dense(e_eeg, w.wv, w.bv);
  Var att = dense(scaled_dot_attention(q, k, v), w.wo, w.bo);
  if (drop) att = dropout(att, dropout_rate, *rng, true);
  Var h = add(x_audio, att);
  Var ff = dense(relu(dense(h, w.w1, w.b1)), w.w2, w.b2);
  if (drop) ff = dropout(ff, dropout_rate, *rng, true);
  return add(h, ff);
}

/// Channelwise cosine similarity of each stimulus embedding with the EEG
/// embedding, normalized along time: concat(<x^, e^>_t, <y^, e^>_t).
/// [T x F] inputs give [2F]; [B x T x F] inputs give [B x 2F].
inline Var similarity_embedding(const Var& x, const Var& y, const Var& e, double eps = 1e-8) {
  if (x.shape() != e.shape() || y.shape() != e.shape()) {
    throw ShapeError("similarity_embedding: shapes " + shape_str(x.shape()) + ", " + shape_str(y.shape()) + ", " +
                     shape_str(e.shape()) + " differ");
  }
  const Var eh = l2_normalize(e, -2, eps);
  const Var sx = dot_along_time(l2_normalize(x, -2, eps), eh);
  const Var sy = dot_along_time(l2_normalize(y, -2, eps), eh);
  return concat({sx, sy}, -1);
}

namespace detail {

inline Var as_batched(const Var& v, std::size_t channels, const char* what) {
  if (v.shape().size() == 2) return reshape(v, {1, v.shape()[0], v.shape()[1]});
  if (v.shape().size() != 3) throw ShapeError(std::string(what) + ": expected rank 2 or 3, got " + shape_str(v.shape()));
  if (v.shape()[2] != channels) {
    throw ShapeError(std::string(what) + ": channel axis has " + std::to_string(v.shape()[2]) + ", expected " +
                     std::to_string(channels));
  }
  return v;
}

}  // namespace detail

/// Full forward pass. `eeg` is [B x T x C_eeg], stimuli [B x T x C_stim]
/// (rank-2 inputs are treated as a batch of one). BatchNorm running statistics
/// in `bn` are updated in train mode only. `rng` drives dropout and may be
/// null in eval mode.
inline ForwardTrace forward(const ParamLeaves& p, std::map<std::string, BatchNormStats>& bn, const Var& eeg,
                            const Var& stim_a, const Var& stim_b, const SdanetConfig& cfg, Mode mode,
                            RngState* rng = nullptr) {
  cfg.validate();
  Var e = detail::as_batched(eeg, cfg.eeg_channels, "forward eeg");
  Var xa = detail::as_batched(stim_a, cfg.stimulus_channels, "forward stimulus A");
  Var xb = detail::as_batched(stim_b, cfg.stimulus_channels, "forward stimulus B");
  if (xa.shape() != xb.shape()) throw ShapeError("forward: stimulus shapes differ");
  if (e.shape()[0] != xa.shape()[0] || e.shape()[1] != xa.shape()[1]) {
    throw ShapeError("forward: EEG " + shape_str(e.shape()) + " and stimulus " + shape_str(xa.shape()) +
                     " disagree on batch or time axis");
  }
  if (e.shape()[1] != cfg.window_samples) {
    throw ShapeError("forward: time axis has " + std::to_string(e.shape()[1]) + " samples, config expects " +
                     std::to_string(cfg.window_samples));
  }
  const std::size_t nb = e.shape()[0];
  const std::size_t halves[2] = {nb, nb};
  auto stats = [&](const std::string& key) -> BatchNormStats& {
    if (mode == Mode::train) return bn[key];
    const auto it = bn.find(key);
    if (it == bn.end()) throw std::logic_error("forward: no BatchNorm statistics for " + key);
    return it->second;
  };

  // Both stimuli share one encoder: stack them along the batch axis so the
  // weights (and BatchNorm statistics) are literally the same tensors.
  Var audio = concat({xa, xb}, 0);
  ForwardTrace tr;
  for (std::size_t n = 1; n <= cfg.blocks(); ++n) {
    const std::size_t d = cfg.dilations[n - 1];
    const std::string ep = names::block("eeg", n), ap = names::block("audio", n);
    e = encoder_block(e, block_weights(p, ep), stats(ep + ".bn"), d, mode, cfg.dropout_rate, rng);
    audio = encoder_block(audio, block_weights(p, ap), stats(ap + ".bn"), d, mode, cfg.dropout_rate, rng);
    if (cfg.acm_enabled) {
      audio = acm(audio, concat({e, e}, 0), acm_weights(p, names::acm(n)), mode, cfg.dropout_rate, rng);
    }
    auto xy = split(audio, 0, halves);
    tr.x_prime.push_back(xy[0]);
    tr.y_prime.push_back(xy[1]);
    tr.e.push_back(e);
  }

  const std::size_t s = cfg.shallow_index - 1, dp = cfg.deep_index - 1;
  tr.e_shallow = similarity_embedding(tr.x_prime[s], tr.y_prime[s], tr.e[s]);
  tr.e_deep = similarity_embedding(tr.x_prime[dp], tr.y_prime[dp], tr.e[dp]);
  tr.embedding = cfg.sscm_enabled ? concat({tr.e_shallow, tr.e_deep}, -1) : tr.e_deep;
  tr.logit = dense(tr.embedding, p.at(names::kClassifierWeight), p.at(names::kClassifierBias));
  tr.prob = sigmoid(tr.logit);
  return tr;
}

/// Convenience overload building leaves from Parameters (no gradients).
inline ForwardTrace forward(Parameters& params, const Tensor& eeg, const Tensor& stim_a, const Tensor& stim_b,
                            const SdanetConfig& cfg, Mode mode, RngState* rng = nullptr) {
  return forward(make_leaves(params, false), params.bn, constant(eeg), constant(stim_a), constant(stim_b), cfg, mode,
                 rng);
}

struct Prediction {
  int label = 0;  // 1 when stimulus A is judged the match
  double prob = 0.5;
};

/// Label 1 iff p > 0.5; p == 0.5 resolves to 0.
inline int decide(double p) { return p > 0.5 ? 1 : 0; }

/// Eval-mode predictions for a batch.
inline std::vector<Prediction> predict(const Parameters& params, const Tensor& eeg, const Tensor& stim_a,
                                       const Tensor& stim_b, const SdanetConfig& cfg) {
  auto bn = params.bn;  // eval mode never writes, but forward takes a mutable map
  auto tr = forward(make_leaves(params, false), bn, constant(eeg), constant(stim_a), constant(stim_b), cfg, Mode::eval);
  std::vector<Prediction> out;
  for (double p : tr.prob.value().data()) out.push_back({decide(p), p});
  return out;
}

}  // namespace sdanet
