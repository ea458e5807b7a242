// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op takes and returns Var; the
// returned node carries the backward rule for its inputs. Shapes follow
// (time x channels) or (batch x time x channels) conventions.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdanet/autodiff.hpp"
#include "sdanet/detail/gemm.hpp"
#include "sdanet/fault.hpp"
#include "sdanet/rng.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

enum class Mode { train, eval };

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

/// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  require(a >= 0 && a < r, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

inline AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

/// (batch, time, channels) view of a rank-2 or rank-3 sequence tensor.
struct SeqView {
  std::size_t batch = 1, time = 0, channels = 0;
};

inline SeqView seq_view(const Shape& s, const char* what) {
  require(s.size() == 2 || s.size() == 3,
          std::string(what) + ": expected [T x C] or [B x T x C], got " + shape_str(s));
  if (s.size() == 2) return {1, s[0], s[1]};
  return {s[0], s[1], s[2]};
}

inline Shape seq_shape(const Shape& like, std::size_t time, std::size_t channels) {
  if (like.size() == 2) return {time, channels};
  return {like[0], time, channels};
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  detail::require(a.shape() == b.shape(), "add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require(a.shape() == b.shape(), "sub: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    n.parents[0]->accumulate(n.grad);
    Tensor g = n.grad;
    for (double& v : g.data()) v = -v;
    n.parents[1]->accumulate(std::move(g));
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require(a.shape() == b.shape(), "mul: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    Tensor ga(n.grad.shape()), gb(n.grad.shape());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] = n.grad[i] * bv[i];
      gb[i] = n.grad[i] * av[i];
    }
    n.parents[0]->accumulate(std::move(ga));
    n.parents[1]->accumulate(std::move(gb));
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return make_op(std::move(out), {a}, [s](Node& n) {
    Tensor g = n.grad;
    for (double& v : g.data()) v *= s;
    n.parents[0]->accumulate(std::move(g));
  });
}

/// Sum of all elements, as a scalar.
inline Var sum(const Var& a) {
  return make_op(Tensor::scalar(a.value().sum()), {a}, [](Node& n) {
    n.parents[0]->accumulate(Tensor(n.parents[0]->value.shape(), n.grad[0]));
  });
}

inline Var mean(const Var& a) {
  const auto cnt = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / cnt);
}

inline Var reshape(const Var& a, Shape s) {
  Tensor out = a.value().reshaped(std::move(s));
  return make_op(std::move(out), {a}, [](Node& n) {
    n.parents[0]->accumulate(n.grad.reshaped(n.parents[0]->value.shape()));
  });
}

enum class Pointwise { relu, sigmoid };

/// Elementwise activation. The ReLU subgradient at exactly 0 is 0.
inline Var pointwise(const Var& x, Pointwise kind) {
  Tensor out = x.value();
  if (kind == Pointwise::relu) {
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  } else {
    for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  }
  return make_op(std::move(out), {x}, [kind](Node& n) {
    Tensor g = n.grad;
    const auto& in = n.parents[0]->value;
    if (kind == Pointwise::relu) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = in[i] > 0.0 ? g[i] : 0.0;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = n.value[i];
        g[i] *= s * (1.0 - s);
      }
    }
    n.parents[0]->accumulate(std::move(g));
  });
}

inline Var relu(const Var& x) { return pointwise(x, Pointwise::relu); }
inline Var sigmoid(const Var& x) { return pointwise(x, Pointwise::sigmoid); }

// ---------------------------------------------------------------- convolution

/// Valid (unpadded) dilated 1-D convolution along time.
///
/// input [T x Cin] or [B x T x Cin], weight [k x Cin x Cout], bias [Cout].
/// Output length is T - (k-1)*dilation:
///   out[t, o] = bias[o] + sum_{j,i} input[t + j*dilation, i] * weight[j, i, o]
inline Var conv1d_dilated(const Var& input, const Var& weight, const Var& bias, std::size_t dilation) {
  using detail::require;
  const auto sv = detail::seq_view(input.shape(), "conv1d_dilated input");
  const Shape& ws = weight.shape();
  require(ws.size() == 3, "conv1d_dilated: weight must be [k x Cin x Cout], got " + shape_str(ws));
  require(dilation >= 1, "conv1d_dilated: dilation must be positive");
  const std::size_t k = ws[0], cin = ws[1], cout = ws[2];
  require(k >= 1, "conv1d_dilated: kernel axis (weight axis 0) must be >= 1");
  require(cin == sv.channels, "conv1d_dilated: input channel axis has " + std::to_string(sv.channels) +
                                  " but weight axis 1 expects " + std::to_string(cin));
  require(bias.shape() == Shape{cout}, "conv1d_dilated: bias axis 0 must equal Cout=" + std::to_string(cout) +
                                           ", got " + shape_str(bias.shape()));
  const std::size_t span = (k - 1) * dilation;
  if (sv.time <= span) {
    throw ShapeError("conv1d_dilated: window too short: T=" + std::to_string(sv.time) +
                     " must exceed (k-1)*dilation=" + std::to_string(span));
  }
  const std::size_t tout = sv.time - span;

  Tensor out(detail::seq_shape(input.shape(), tout, cout));
  const double* x = input.value().ptr();
  const double* w = weight.value().ptr();
  const double* b = bias.value().ptr();
  double* y = out.ptr();
  for (std::size_t bi = 0; bi < sv.batch; ++bi) {
    double* yb = y + bi * tout * cout;
    for (std::size_t t = 0; t < tout; ++t) std::copy(b, b + cout, yb + t * cout);
    const double* xb = x + bi * sv.time * cin;
    for (std::size_t j = 0; j < k; ++j) {
      detail::gemm_nn(xb + j * dilation * cin, w + j * cin * cout, yb, tout, cin, cout);
    }
  }

  return make_op(std::move(out), {input, weight, bias}, [sv, k, cin, cout, tout, dilation](Node& n) {
    const Tensor& xin = n.parents[0]->value;
    const Tensor& wt = n.parents[1]->value;
    const double* dy = n.grad.ptr();
    if (n.parents[0]->requires_grad) {
      Tensor dx = Tensor::zeros_like(xin);
      for (std::size_t bi = 0; bi < sv.batch; ++bi) {
        for (std::size_t j = 0; j < k; ++j) {
          detail::gemm_nt(dy + bi * tout * cout, wt.ptr() + j * cin * cout,
                          dx.ptr() + (bi * sv.time + j * dilation) * cin, tout, cout, cin);
        }
      }
      n.parents[0]->accumulate(std::move(dx));
    }
    if (n.parents[1]->requires_grad) {
      Tensor dw = Tensor::zeros_like(wt);
      for (std::size_t bi = 0; bi < sv.batch; ++bi) {
        for (std::size_t j = 0; j < k; ++j) {
          detail::gemm_tn(xin.ptr() + (bi * sv.time + j * dilation) * cin, dy + bi * tout * cout,
                          dw.ptr() + j * cin * cout, cin, tout, cout);
        }
      }
      if (fault::on(fault::Kind::conv_backward)) {
        for (double& v : dw.data()) v *= 1.1;
      }
      n.parents[1]->accumulate(std::move(dw));
    }
    if (n.parents[2]->requires_grad) {
      Tensor db(Shape{cout});
      for (std::size_t r = 0; r < sv.batch * tout; ++r) {
        for (std::size_t o = 0; o < cout; ++o) db[o] += dy[r * cout + o];
      }
      n.parents[2]->accumulate(std::move(db));
    }
  });
}

// ---------------------------------------------------------------- batch norm

/// Running statistics of one BatchNorm layer. Unset until the first training batch.
struct BatchNormStats {
  Tensor mean;
  Tensor var;
  bool initialized = false;
};

struct BatchNormOptions {
  double momentum = 0.1;  // weight of the new batch statistic
  double eps = 1e-5;
};

/// Per-channel normalization over batch x time.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into `running` with exponential momentum; the very first
/// training batch initializes the running statistics directly. Eval mode uses
/// the running statistics and fails if they were never set.
inline Var batchnorm1d(const Var& input, const Var& gamma, const Var& beta, BatchNormStats& running, Mode mode,
                       BatchNormOptions opt = {}) {
  using detail::require;
  const auto sv = detail::seq_view(input.shape(), "batchnorm1d input");
  const std::size_t c = sv.channels;
  require(gamma.shape() == Shape{c}, "batchnorm1d: gamma axis 0 must equal C=" + std::to_string(c));
  require(beta.shape() == Shape{c}, "batchnorm1d: beta axis 0 must equal C=" + std::to_string(c));
  require(opt.eps > 0.0, "batchnorm1d: eps must be positive");
  const std::size_t rows = sv.batch * sv.time;
  const double* x = input.value().ptr();
  const double* g = gamma.value().ptr();
  const double* be = beta.value().ptr();

  Tensor mu(Shape{c}), var(Shape{c});
  if (mode == Mode::train) {
    require(rows >= 2, "batchnorm1d: train mode needs batch*time >= 2");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mu[j] += x[r * c + j];
    for (std::size_t j = 0; j < c; ++j) mu[j] /= static_cast<double>(rows);
    // Second pass correction so a constant channel yields its exact value.
    Tensor corr(Shape{c});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) corr[j] += x[r * c + j] - mu[j];
    for (std::size_t j = 0; j < c; ++j) mu[j] += corr[j] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x[r * c + j] - mu[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(rows);

    const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
    if (!running.initialized) {
      running.mean = mu;
      running.var = var;
      for (double& v : running.var.data()) v *= unbias;
      running.initialized = true;
    } else {
      require(running.mean.shape() == Shape{c}, "batchnorm1d: running stats channel axis mismatch");
      for (std::size_t j = 0; j < c; ++j) {
        running.mean[j] = (1.0 - opt.momentum) * running.mean[j] + opt.momentum * mu[j];
        running.var[j] = (1.0 - opt.momentum) * running.var[j] + opt.momentum * var[j] * unbias;
      }
    }
  } else {
    if (!running.initialized) {
      throw std::logic_error("batchnorm1d: eval mode with uninitialized running statistics");
    }
    require(running.mean.shape() == Shape{c}, "batchnorm1d: running stats channel axis mismatch");
    mu = running.mean;
    var = running.var;
  }

  Tensor invstd(Shape{c});
  for (std::size_t j = 0; j < c; ++j) invstd[j] = 1.0 / std::sqrt(var[j] + opt.eps);
  Tensor xhat(input.shape());
  Tensor out(input.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (x[r * c + j] - mu[j]) * invstd[j];
      xhat[r * c + j] = h;
      out[r * c + j] = g[j] * h + be[j];
    }

  const bool batch_stats = mode == Mode::train;
  return make_op(std::move(out), {input, gamma, beta},
                 [rows, c, batch_stats, xhat = std::move(xhat), invstd = std::move(invstd)](Node& n) {
                   const double* dy = n.grad.ptr();
                   const double* gm = n.parents[1]->value.ptr();
                   Tensor dgamma(Shape{c}), dbeta(Shape{c});
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t j = 0; j < c; ++j) {
                       dgamma[j] += dy[r * c + j] * xhat[r * c + j];
                       dbeta[j] += dy[r * c + j];
                     }
                   if (n.parents[0]->requires_grad) {
                     Tensor dx(n.value.shape());
                     if (batch_stats) {
                       // dx = invstd/N * (N*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)), dxhat = dy*gamma
                       const double nr = static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double dxh = dy[r * c + j] * gm[j];
                           dx[r * c + j] = invstd[j] / nr *
                                           (nr * dxh - dbeta[j] * gm[j] - xhat[r * c + j] * dgamma[j] * gm[j]);
                         }
                       if (fault::on(fault::Kind::batchnorm_backward)) {
                         for (double& v : dx.data()) v *= 0.9;
                       }
                     } else {
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < c; ++j) dx[r * c + j] = dy[r * c + j] * gm[j] * invstd[j];
                     }
                     n.parents[0]->accumulate(std::move(dx));
                   }
                   n.parents[1]->accumulate(std::move(dgamma));
                   n.parents[2]->accumulate(std::move(dbeta));
                 });
}

// ---------------------------------------------------------------- attention

/// Single-head scaled dot-product attention: softmax(Q K^T / sqrt(d)) V.
/// Q [Tq x d], K [Tk x d], V [Tk x dv], optionally with a shared leading batch axis.
inline Var scaled_dot_attention(const Var& q, const Var& k, const Var& v) {
  using detail::require;
  const auto qs = detail::seq_view(q.shape(), "attention Q");
  const auto ks = detail::seq_view(k.shape(), "attention K");
  const auto vs = detail::seq_view(v.shape(), "attention V");
  require(q.shape().size() == k.shape().size() && k.shape().size() == v.shape().size(),
          "attention: Q, K, V must have the same rank");
  require(qs.batch == ks.batch && ks.batch == vs.batch, "attention: batch axis mismatch");
  require(qs.channels == ks.channels, "attention: feature axis of Q (" + std::to_string(qs.channels) +
                                          ") and K (" + std::to_string(ks.channels) + ") differ");
  require(ks.time == vs.time, "attention: time axis of K and V differ");
  if (qs.channels == 0) throw ShapeError("attention: feature dimension d = 0");
  require(ks.time >= 1, "attention: need at least one key");

  const std::size_t nb = qs.batch, tq = qs.time, tk = ks.time, d = qs.channels, dv = vs.channels;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor attn(Shape{nb, tq, tk});
  Tensor out(detail::seq_shape(q.shape(), tq, dv));
  Eigen::ArrayXd buf(detail::idx(tk));
  for (std::size_t b = 0; b < nb; ++b) {
    double* a = attn.ptr() + b * tq * tk;
    detail::gemm_nt(q.value().ptr() + b * tq * d, k.value().ptr() + b * tk * d, a, tq, d, tk);
    for (std::size_t i = 0; i < tq; ++i) {
      // Work on an aligned copy: Eigen's vectorized exp and sums would
      // otherwise depend on where the row happens to sit in memory.
      double* row = a + i * tk;
      buf = Eigen::Map<const Eigen::ArrayXd>(row, detail::idx(tk)) * s;
      buf = (buf - buf.maxCoeff()).exp();
      buf *= 1.0 / buf.sum();
      std::copy(buf.data(), buf.data() + tk, row);
    }
    detail::gemm_nn(a, v.value().ptr() + b * tk * dv, out.ptr() + b * tq * dv, tq, tk, dv);
  }

  return make_op(std::move(out), {q, k, v}, [nb, tq, tk, d, dv, s, attn = std::move(attn)](Node& n) {
    const double* dout = n.grad.ptr();
    const Tensor& qv = n.parents[0]->value;
    const Tensor& kv = n.parents[1]->value;
    const Tensor& vv = n.parents[2]->value;
    Tensor dq = Tensor::zeros_like(qv), dk = Tensor::zeros_like(kv), dvv = Tensor::zeros_like(vv);
    std::vector<double> da(tq * tk);
    Eigen::ArrayXd ga(detail::idx(tk)), ar(detail::idx(tk));
    for (std::size_t b = 0; b < nb; ++b) {
      const double* a = attn.ptr() + b * tq * tk;
      const double* go = dout + b * tq * dv;
      detail::gemm_tn(a, go, dvv.ptr() + b * tk * dv, tk, tq, dv);
      std::fill(da.begin(), da.end(), 0.0);
      detail::gemm_nt(go, vv.ptr() + b * tk * dv, da.data(), tq, dv, tk);
      // softmax backward: dS = A * (dA - rowsum(dA * A)), then the 1/sqrt(d) scale
      for (std::size_t i = 0; i < tq; ++i) {
        ga = Eigen::Map<const Eigen::ArrayXd>(da.data() + i * tk, detail::idx(tk));
        ar = Eigen::Map<const Eigen::ArrayXd>(a + i * tk, detail::idx(tk));
        const double dot = (ga * ar).sum();
        ga = ar * (ga - dot) * s;
        std::copy(ga.data(), ga.data() + tk, da.data() + i * tk);
      }
      detail::gemm_nn(da.data(), kv.ptr() + b * tk * d, dq.ptr() + b * tq * d, tq, tk, d);
      detail::gemm_tn(da.data(), qv.ptr() + b * tq * d, dk.ptr() + b * tk * d, tk, tq, d);
    }
    if (fault::on(fault::Kind::attention_backward)) {
      for (double& x : dk.data()) x = -x;
    }
    n.parents[0]->accumulate(std::move(dq));
    n.parents[1]->accumulate(std::move(dk));
    n.parents[2]->accumulate(std::move(dvv));
  });
}

// ---------------------------------------------------------------- dense

/// Affine map on the trailing axis: input [... x Din] * W [Din x Dout] + b [Dout].
inline Var dense(const Var& input, const Var& w, const Var& b) {
  using detail::require;
  const Shape& is = input.shape();
  require(!is.empty(), "dense: input must have a trailing axis");
  require(w.shape().size() == 2, "dense: W must be [Din x Dout], got " + shape_str(w.shape()));
  const std::size_t din = w.shape()[0], dout = w.shape()[1];
  require(is.back() == din, "dense: input trailing axis " + std::to_string(is.back()) +
                                " does not match W axis 0 (Din=" + std::to_string(din) + ")");
  require(b.shape() == Shape{dout}, "dense: bias axis 0 must equal Dout=" + std::to_string(dout));
  const std::size_t rows = input.value().size() / din;
  Shape os = is;
  os.back() = dout;
  Tensor out(os);
  for (std::size_t r = 0; r < rows; ++r) std::copy(b.value().ptr(), b.value().ptr() + dout, out.ptr() + r * dout);
  detail::gemm_nn(input.value().ptr(), w.value().ptr(), out.ptr(), rows, din, dout);
  return make_op(std::move(out), {input, w, b}, [rows, din, dout](Node& n) {
    const double* dy = n.grad.ptr();
    if (n.parents[0]->requires_grad) {
      Tensor dx = Tensor::zeros_like(n.parents[0]->value);
      detail::gemm_nt(dy, n.parents[1]->value.ptr(), dx.ptr(), rows, dout, din);
      n.parents[0]->accumulate(std::move(dx));
    }
    if (n.parents[1]->requires_grad) {
      Tensor dw = Tensor::zeros_like(n.parents[1]->value);
      detail::gemm_tn(n.parents[0]->value.ptr(), dy, dw.ptr(), din, rows, dout);
      n.parents[1]->accumulate(std::move(dw));
    }
    if (n.parents[2]->requires_grad) {
      Tensor db(Shape{dout});
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < dout; ++o) db[o] += dy[r * dout + o];
      n.parents[2]->accumulate(std::move(db));
    }
  });
}

// ---------------------------------------------------------------- normalization / similarity

/// x / max(||x||_2 along axis, eps). Slices with norm <= eps are divided by eps
/// (an all-zero slice stays zero).
inline Var l2_normalize(const Var& input, int axis, double eps = 1e-8) {
  detail::require(eps > 0.0, "l2_normalize: eps must be positive");
  const std::size_t ax = detail::norm_axis(axis, input.shape().size());
  const auto av = detail::axis_view(input.shape(), ax);
  const double* x = input.value().ptr();
  Tensor denom(Shape{av.outer * av.inner});
  Tensor out(input.shape());
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t i = 0; i < av.inner; ++i) {
      double ss = 0.0;
      for (std::size_t t = 0; t < av.extent; ++t) {
        const double v = x[(o * av.extent + t) * av.inner + i];
        ss += v * v;
      }
      const double nrm = std::sqrt(ss);
      const double den = nrm > eps ? nrm : eps;
      denom[o * av.inner + i] = nrm > eps ? nrm : -eps;  // sign marks the clamped branch
      for (std::size_t t = 0; t < av.extent; ++t) {
        const std::size_t p = (o * av.extent + t) * av.inner + i;
        out[p] = x[p] / den;
      }
    }
  return make_op(std::move(out), {input}, [av, denom = std::move(denom)](Node& n) {
    Tensor dx(n.value.shape());
    const double* y = n.value.ptr();
    const double* g = n.grad.ptr();
    for (std::size_t o = 0; o < av.outer; ++o)
      for (std::size_t i = 0; i < av.inner; ++i) {
        const double den = denom[o * av.inner + i];
        if (den > 0.0) {
          double yg = 0.0;
          for (std::size_t t = 0; t < av.extent; ++t) {
            const std::size_t p = (o * av.extent + t) * av.inner + i;
            yg += y[p] * g[p];
          }
          for (std::size_t t = 0; t < av.extent; ++t) {
            const std::size_t p = (o * av.extent + t) * av.inner + i;
            dx[p] = (g[p] - y[p] * yg) / den;
          }
        } else {
          for (std::size_t t = 0; t < av.extent; ++t) {
            const std::size_t p = (o * av.extent + t) * av.inner + i;
            dx[p] = g[p] / -den;
          }
        }
      }
    n.parents[0]->accumulate(std::move(dx));
  });
}

/// Per-channel inner product over the time axis: [T x C] -> [C], [B x T x C] -> [B x C].
inline Var dot_along_time(const Var& a, const Var& b) {
  detail::require(a.shape() == b.shape(),
                  "dot_along_time: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto sv = detail::seq_view(a.shape(), "dot_along_time");
  Shape os = a.shape().size() == 2 ? Shape{sv.channels} : Shape{sv.batch, sv.channels};
  Tensor out(os);
  const double* x = a.value().ptr();
  const double* y = b.value().ptr();
  for (std::size_t bi = 0; bi < sv.batch; ++bi)
    for (std::size_t t = 0; t < sv.time; ++t)
      for (std::size_t c = 0; c < sv.channels; ++c) {
        const std::size_t p = (bi * sv.time + t) * sv.channels + c;
        out[bi * sv.channels + c] += x[p] * y[p];
      }
  return make_op(std::move(out), {a, b}, [sv](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    Tensor da(av.shape()), db(bv.shape());
    for (std::size_t bi = 0; bi < sv.batch; ++bi)
      for (std::size_t t = 0; t < sv.time; ++t)
        for (std::size_t c = 0; c < sv.channels; ++c) {
          const std::size_t p = (bi * sv.time + t) * sv.channels + c;
          const double g = n.grad[bi * sv.channels + c];
          da[p] = g * bv[p];
          db[p] = g * av[p];
        }
    n.parents[0]->accumulate(std::move(da));
    n.parents[1]->accumulate(std::move(db));
  });
}

// ---------------------------------------------------------------- concat / split

inline Var concat(std::span<const Var> parts, int axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  const std::size_t ax = detail::norm_axis(axis, s0.size());
  std::vector<std::size_t> extents;
  Shape os = s0;
  os[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    detail::require(s.size() == s0.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != s0[i]) {
        throw ShapeError("concat: axis " + std::to_string(i) + " extent " + std::to_string(s[i]) +
                         " differs from " + std::to_string(s0[i]));
      }
    }
    extents.push_back(s[ax]);
    os[ax] += s[ax];
  }
  const auto ov = detail::axis_view(os, ax);
  Tensor out(os);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t chunk = extents[k] * ov.inner;
    const double* src = parts[k].value().ptr();
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.ptr() + o * ov.extent * ov.inner + off);
    }
    off += chunk;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), std::move(inputs), [ov, extents](Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      const std::size_t chunk = extents[k] * ov.inner;
      if (n.parents[k]->requires_grad) {
        Tensor g(n.parents[k]->value.shape());
        for (std::size_t o = 0; o < ov.outer; ++o) {
          const double* src = n.grad.ptr() + o * ov.extent * ov.inner + off;
          std::copy(src, src + chunk, g.ptr() + o * chunk);
        }
        n.parents[k]->accumulate(std::move(g));
      }
      off += chunk;
    }
  });
}

inline Var concat(std::initializer_list<Var> parts, int axis) {
  std::vector<Var> v(parts);
  return concat(std::span<const Var>(v), axis);
}

/// Inverse of concat: cuts `input` along `axis` into pieces of the given extents.
inline std::vector<Var> split(const Var& input, int axis, std::span<const std::size_t> extents) {
  const Shape& s = input.shape();
  const std::size_t ax = detail::norm_axis(axis, s.size());
  std::size_t total = 0;
  for (auto e : extents) total += e;
  detail::require(total == s[ax], "split: extents sum to " + std::to_string(total) + " but axis " +
                                      std::to_string(ax) + " has " + std::to_string(s[ax]));
  const auto iv = detail::axis_view(s, ax);
  std::vector<Var> outs;
  std::size_t off = 0;
  for (auto e : extents) {
    Shape ps = s;
    ps[ax] = e;
    Tensor piece(ps);
    const std::size_t chunk = e * iv.inner;
    for (std::size_t o = 0; o < iv.outer; ++o) {
      const double* src = input.value().ptr() + o * iv.extent * iv.inner + off;
      std::copy(src, src + chunk, piece.ptr() + o * chunk);
    }
    outs.push_back(make_op(std::move(piece), {input}, [iv, off, chunk](Node& n) {
      Tensor g = Tensor::zeros_like(n.parents[0]->value);
      for (std::size_t o = 0; o < iv.outer; ++o) {
        const double* src = n.grad.ptr() + o * chunk;
        std::copy(src, src + chunk, g.ptr() + o * iv.extent * iv.inner + off);
      }
      n.parents[0]->accumulate(std::move(g));
    }));
    off += chunk;
  }
  return outs;
}

// ---------------------------------------------------------------- regularization / loss

/// Inverted dropout. Training: each element is zeroed with probability `rate`,
/// survivors are scaled by 1/(1-rate). Eval, or rate 0: identity (returns `input`).
inline Var dropout(const Var& input, double rate, RngState& rng, bool training) {
  detail::require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(input.shape());
  Tensor out = input.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] *= mask[i];
  }
  return make_op(std::move(out), {input}, [mask = std::move(mask)](Node& n) {
    Tensor g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    n.parents[0]->accumulate(std::move(g));
  });
}

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy. `p` is clamped to [1e-7, 1-1e-7]; clamped
/// elements receive zero gradient.
inline Var bce_loss(const Var& p, const Tensor& labels) {
  detail::require(p.value().size() == labels.size(),
                  "bce_loss: " + std::to_string(p.value().size()) + " probabilities vs " +
                      std::to_string(labels.size()) + " labels");
  const std::size_t n = labels.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::clamp(p.value()[i], kBceClamp, 1.0 - kBceClamp);
    const double y = labels[i];
    total += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
  }
  return make_op(Tensor::scalar(total / static_cast<double>(n)), {p}, [labels, n](Node& nd) {
    const Tensor& pv = nd.parents[0]->value;
    Tensor g(pv.shape());
    const double scale = nd.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = pv[i];
      if (raw < kBceClamp || raw > 1.0 - kBceClamp) continue;
      const double y = labels[i];
      g[i] = -scale * (y / raw - (1.0 - y) / (1.0 - raw));
    }
    nd.parents[0]->accumulate(std::move(g));
  });
}

}  // namespace sdanet
