// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Named parameter set of the network, its initialization and snapshot averaging.

#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdanet/autodiff.hpp"
#include "sdanet/model/config.hpp"
#include "sdanet/ops.hpp"
#include "sdanet/rng.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

struct Parameters {
  std::map<std::string, Tensor> weights;
  std::map<std::string, BatchNormStats> bn;  // keyed by layer prefix, e.g. "eeg.block1.bn"

  [[nodiscard]] const Tensor& at(const std::string& name) const {
    auto it = weights.find(name);
    if (it == weights.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }
  Tensor& at(const std::string& name) {
    auto it = weights.find(name);
    if (it == weights.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : weights) n += t.size();
    return n;
  }

  [[nodiscard]] bool bit_equal(const Parameters& o) const {
    if (weights.size() != o.weights.size() || bn.size() != o.bn.size()) return false;
    for (const auto& [k, t] : weights) {
      auto it = o.weights.find(k);
      if (it == o.weights.end() || !t.bit_equal(it->second)) return false;
    }
    for (const auto& [k, s] : bn) {
      auto it = o.bn.find(k);
      if (it == o.bn.end() || s.initialized != it->second.initialized) return false;
      if (s.initialized && (!s.mean.bit_equal(it->second.mean) || !s.var.bit_equal(it->second.var))) return false;
    }
    return true;
  }
};

namespace names {

inline std::string block(std::string_view branch, std::size_t n) {
  return std::string(branch) + ".block" + std::to_string(n);
}
inline std::string acm(std::size_t n) { return "acm.block" + std::to_string(n); }
inline constexpr const char* kClassifierWeight = "classifier.weight";
inline constexpr const char* kClassifierBias = "classifier.bias";

}  // namespace names

/// True for tensors exempt from weight decay (biases and BatchNorm affine terms).
inline bool is_decay_exempt(const std::string& name) {
  auto ends_with = [&](std::string_view suf) {
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  return ends_with(".bias") || ends_with(".gamma") || ends_with(".beta");
}

/// Shapes of every trainable tensor, derived from the config alone.
inline std::map<std::string, Shape> parameter_shapes(const SdanetConfig& cfg) {
  cfg.validate();
  std::map<std::string, Shape> s;
  const std::size_t f = cfg.feature_channels, k = cfg.kernel_size, h = cfg.ff_width();
  for (std::size_t n = 1; n <= cfg.blocks(); ++n) {
    for (const auto& [branch, cin0] : {std::pair<const char*, std::size_t>{"audio", cfg.stimulus_channels},
                                       std::pair<const char*, std::size_t>{"eeg", cfg.eeg_channels}}) {
      const std::string p = names::block(branch, n);
      const std::size_t cin = n == 1 ? cin0 : f;
      s[p + ".conv.weight"] = {k, cin, f};
      s[p + ".conv.bias"] = {f};
      s[p + ".bn.gamma"] = {f};
      s[p + ".bn.beta"] = {f};
    }
    if (cfg.acm_enabled) {
      const std::string p = names::acm(n);
      for (const char* proj : {".q", ".k", ".v", ".o"}) {
        s[p + proj + ".weight"] = {f, f};
        s[p + proj + ".bias"] = {f};
      }
      s[p + ".ff1.weight"] = {f, h};
      s[p + ".ff1.bias"] = {h};
      s[p + ".ff2.weight"] = {h, f};
      s[p + ".ff2.bias"] = {f};
    }
  }
  s[names::kClassifierWeight] = {cfg.embedding_width(), 1};
  s[names::kClassifierBias] = {1};
  return s;
}

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases, BatchNorm gamma 1 / beta 0,
/// running statistics unset. Each tensor draws from its own stream split off `rng`
/// by name, so the result does not depend on iteration order.
inline Parameters init_params(const SdanetConfig& cfg, const RngState& rng) {
  Parameters p;
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    Tensor t(shape);
    if (name.ends_with(".gamma")) {
      t.fill(1.0);
    } else if (name.ends_with(".weight")) {
      // conv [k x Cin x Cout] and dense [Din x Dout]: fan_in is everything but the last axis
      const std::size_t fan_in = t.size() / shape.back();
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      RngState r = rng.split(name);
      for (double& v : t.data()) v = r.normal(0.0, sd);
    }
    p.weights.emplace(name, std::move(t));
    if (name.ends_with(".bn.gamma")) p.bn[name.substr(0, name.size() - 6)] = BatchNormStats{};
  }
  return p;
}

/// Graph leaves for one forward pass, keyed like Parameters::weights.
using ParamLeaves = std::map<std::string, Var>;

inline ParamLeaves make_leaves(const Parameters& p, bool requires_grad) {
  ParamLeaves out;
  for (const auto& [k, t] : p.weights) out.emplace(k, requires_grad ? param(t) : constant(t));
  return out;
}

namespace detail {

/// Mean of `xs` rounded from a compensated (double-double) sum, so k copies of
/// the same value average to exactly that value and the result is the
/// correctly rounded mean in all but pathological cases.
inline double compensated_mean(std::span<const double> xs) {
  double s = 0.0, c = 0.0;
  for (double x : xs) {
    const double t = s + x;
    if (std::abs(s) >= std::abs(x)) {
      c += (s - t) + x;
    } else {
      c += (x - t) + s;
    }
    s = t;
  }
  const auto k = static_cast<double>(xs.size());
  const double q = s / k;
  const double r = std::fma(-q, k, s);  // exact remainder
  return q + (r + c) / k;
}

inline Tensor average_tensors(std::span<const Tensor* const> ts, const std::string& name) {
  Tensor out(ts[0]->shape());
  std::vector<double> column(ts.size());
  for (const Tensor* t : ts) {
    if (t->shape() != out.shape()) {
      throw ShapeError("average_params: tensor " + name + " has shape " + shape_str(t->shape()) + " vs " +
                       shape_str(out.shape()));
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t s = 0; s < ts.size(); ++s) column[s] = (*ts[s])[i];
    out[i] = compensated_mean(column);
  }
  return out;
}

}  // namespace detail

/// Elementwise mean of the last `k` snapshots, BatchNorm running statistics included.
inline Parameters average_params(std::span<const Parameters> snapshots, std::size_t k) {
  if (k == 0 || snapshots.size() < k) {
    throw std::invalid_argument("average_params: need at least k=" + std::to_string(k) + " snapshots, have " +
                                std::to_string(snapshots.size()));
  }
  const auto last = snapshots.subspan(snapshots.size() - k);
  Parameters out;
  std::vector<const Tensor*> ptrs(k);
  for (const auto& [name, t0] : last[0].weights) {
    for (std::size_t s = 0; s < k; ++s) {
      auto it = last[s].weights.find(name);
      if (it == last[s].weights.end()) throw ShapeError("average_params: snapshot missing tensor " + name);
      ptrs[s] = &it->second;
    }
    out.weights.emplace(name, detail::average_tensors(ptrs, name));
  }
  for (const auto& [name, st0] : last[0].bn) {
    BatchNormStats avg;
    avg.initialized = st0.initialized;
    std::vector<const Tensor*> means(k), vars(k);
    for (std::size_t s = 0; s < k; ++s) {
      auto it = last[s].bn.find(name);
      if (it == last[s].bn.end() || it->second.initialized != st0.initialized) {
        throw ShapeError("average_params: BatchNorm statistics of " + name + " differ in presence");
      }
      means[s] = &it->second.mean;
      vars[s] = &it->second.var;
    }
    if (avg.initialized) {
      avg.mean = detail::average_tensors(means, name + ".running_mean");
      avg.var = detail::average_tensors(vars, name + ".running_var");
    }
    out.bn.emplace(name, std::move(avg));
  }
  for (std::size_t s = 1; s < k; ++s) {
    if (last[s].weights.size() != out.weights.size()) throw ShapeError("average_params: tensor sets differ");
  }
  return out;
}

}  // namespace sdanet
