// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "sdanet/model/params.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const Parameters& p) {
    AdamState s;
    for (const auto& [k, t] : p.weights) {
      s.m.emplace(k, Tensor::zeros_like(t));
      s.v.emplace(k, Tensor::zeros_like(t));
    }
    return s;
  }
};

/// One Adam step with decoupled weight decay:
///   p <- p * (1 - lr*wd)        (skipped for biases and BatchNorm gamma/beta)
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// Gradients are checked for NaN/Inf before anything is modified.
inline void adam_step(Parameters& params, const std::map<std::string, Tensor>& grads, AdamState& st, double lr,
                      double weight_decay) {
  for (const auto& [name, g] : grads) {
    auto it = params.weights.find(name);
    if (it == params.weights.end()) throw TrainingError("adam_step: gradient for unknown parameter " + name);
    if (g.shape() != it->second.shape()) {
      throw ShapeError("adam_step: gradient of " + name + " has shape " + shape_str(g.shape()) + ", parameter " +
                       shape_str(it->second.shape()));
    }
    if (!g.all_finite()) throw TrainingError("adam_step: non-finite gradient in parameter " + name);
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.weights.at(name);
    auto mit = st.m.try_emplace(name, Tensor::zeros_like(p)).first;
    auto vit = st.v.try_emplace(name, Tensor::zeros_like(p)).first;
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    const bool decay = weight_decay != 0.0 && !is_decay_exempt(name);
    const double shrink = 1.0 - lr * weight_decay;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (decay) p[i] *= shrink;
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace sdanet
