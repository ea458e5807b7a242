// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient suite over every differentiable op and a tiny
// full model. Used by the `gradcheck` command and by the test suite.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sdanet/fault.hpp"
#include "sdanet/gradcheck.hpp"
#include "sdanet/model/sdanet.hpp"
#include "sdanet/ops.hpp"
#include "sdanet/rng.hpp"

namespace sdanet::verify {

inline constexpr double kOpTolerance = 1e-5;
inline constexpr double kModelTolerance = 1e-4;

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  std::size_t seeds = 0;
  bool passed = true;
};

/// Small model used for the full-model check: 8 EEG channels, F = 4, 64-sample
/// windows (block extents 62/58/50/34), no dropout.
inline SdanetConfig tiny_config() {
  SdanetConfig c;
  c.feature_channels = 4;
  c.eeg_channels = 8;
  c.window_samples = 64;
  c.ff_hidden = 8;
  c.dropout_rate = 0.0;
  return c;
}

inline Tensor random_tensor(const Shape& s, RngState& rng, double sd = 1.0) {
  Tensor t(s);
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

/// sum(out * w) with a fixed random w, so every output element matters.
inline Var project(const Var& out, const Tensor& w) { return sum(mul(out, constant(w))); }

struct Case {
  std::string name;
  double tol = kOpTolerance;
  // Builds inputs and the scalar function for one seed.
  std::function<std::pair<std::vector<Tensor>, ScalarFn>(RngState&)> make;
};

namespace detail {

template <class Op>
Case unary(std::string name, Shape in_shape, Shape out_shape, Op op) {
  return {std::move(name), kOpTolerance, [=](RngState& r) {
            std::vector<Tensor> in{random_tensor(in_shape, r)};
            Tensor w = random_tensor(out_shape, r);
            ScalarFn f = [=](std::span<const Var> x) { return project(op(x[0]), w); };
            return std::make_pair(in, f);
          }};
}

}  // namespace detail

inline std::vector<Case> op_cases() {
  using detail::unary;
  std::vector<Case> c;
  c.push_back({"add", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({3, 4}, r), random_tensor({3, 4}, r)};
                 Tensor w = random_tensor({3, 4}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) { return project(add(x[0], x[1]), w); }));
               }});
  c.push_back({"sub", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({3, 4}, r), random_tensor({3, 4}, r)};
                 Tensor w = random_tensor({3, 4}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) { return project(sub(x[0], x[1]), w); }));
               }});
  c.push_back({"mul", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({3, 4}, r), random_tensor({3, 4}, r)};
                 Tensor w = random_tensor({3, 4}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) { return project(mul(x[0], x[1]), w); }));
               }});
  c.push_back(unary("scale", {3, 4}, {3, 4}, [](const Var& x) { return scale(x, -1.7); }));
  c.push_back({"sum", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({3, 4}, r)};
                 return std::make_pair(in, ScalarFn([](std::span<const Var> x) { return sum(x[0]); }));
               }});
  c.push_back({"mean", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({3, 4}, r)};
                 return std::make_pair(in, ScalarFn([](std::span<const Var> x) { return mean(x[0]); }));
               }});
  c.push_back(unary("reshape", {3, 4}, {2, 6}, [](const Var& x) { return reshape(x, {2, 6}); }));
  c.push_back(unary("relu", {4, 5}, {4, 5}, [](const Var& x) { return relu(x); }));
  c.push_back(unary("sigmoid", {4, 5}, {4, 5}, [](const Var& x) { return sigmoid(x); }));
  for (std::size_t d : {1, 2, 4}) {
    c.push_back({"conv1d_dilated(d=" + std::to_string(d) + ")", kOpTolerance, [d](RngState& r) {
                   const std::size_t t = 12, tout = t - 2 * d;
                   std::vector<Tensor> in{random_tensor({2, t, 3}, r), random_tensor({3, 3, 4}, r),
                                          random_tensor({4}, r)};
                   Tensor w = random_tensor({2, tout, 4}, r);
                   return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                           return project(conv1d_dilated(x[0], x[1], x[2], d), w);
                                         }));
                 }});
  }
  c.push_back({"batchnorm1d(train)", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 6, 3}, r), random_tensor({3}, r), random_tensor({3}, r)};
                 Tensor w = random_tensor({2, 6, 3}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         BatchNormStats st;
                                         return project(batchnorm1d(x[0], x[1], x[2], st, Mode::train), w);
                                       }));
               }});
  c.push_back({"batchnorm1d(eval)", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 6, 3}, r), random_tensor({3}, r), random_tensor({3}, r)};
                 Tensor w = random_tensor({2, 6, 3}, r);
                 BatchNormStats st{random_tensor({3}, r), Tensor({3}, 0.5), true};
                 for (double& v : st.var.data()) v += r.uniform();
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         BatchNormStats s = st;
                                         return project(batchnorm1d(x[0], x[1], x[2], s, Mode::eval), w);
                                       }));
               }});
  c.push_back({"scaled_dot_attention", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 5, 4}, r), random_tensor({2, 6, 4}, r),
                                        random_tensor({2, 6, 3}, r)};
                 Tensor w = random_tensor({2, 5, 3}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         return project(scaled_dot_attention(x[0], x[1], x[2]), w);
                                       }));
               }});
  c.push_back({"dense", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 5, 4}, r), random_tensor({4, 3}, r), random_tensor({3}, r)};
                 Tensor w = random_tensor({2, 5, 3}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         return project(dense(x[0], x[1], x[2]), w);
                                       }));
               }});
  c.push_back(unary("l2_normalize", {2, 6, 3}, {2, 6, 3}, [](const Var& x) { return l2_normalize(x, -2); }));
  c.push_back({"dot_along_time", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 6, 3}, r), random_tensor({2, 6, 3}, r)};
                 Tensor w = random_tensor({2, 3}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         return project(dot_along_time(x[0], x[1]), w);
                                       }));
               }});
  c.push_back({"concat", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 3, 2}, r), random_tensor({2, 3, 4}, r)};
                 Tensor w = random_tensor({2, 3, 6}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         return project(concat({x[0], x[1]}, -1), w);
                                       }));
               }});
  c.push_back({"split", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({4, 3}, r)};
                 Tensor w0 = random_tensor({1, 3}, r), w1 = random_tensor({3, 3}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         const std::size_t ext[2] = {1, 3};
                                         auto parts = split(x[0], 0, ext);
                                         return add(project(parts[0], w0), project(parts[1], w1));
                                       }));
               }});
  c.push_back({"dropout", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({4, 5}, r)};
                 Tensor w = random_tensor({4, 5}, r);
                 const std::uint64_t mask_seed = r.next_u64();
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         RngState m(mask_seed);
                                         return project(dropout(x[0], 0.3, m, true), w);
                                       }));
               }});
  c.push_back({"bce_loss", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({6, 1}, r)};
                 Tensor y({6, 1});
                 for (double& v : y.data()) v = r.bernoulli(0.5) ? 1.0 : 0.0;
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) { return bce_loss(sigmoid(x[0]), y); }));
               }});
  c.push_back({"similarity_embedding", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 6, 3}, r), random_tensor({2, 6, 3}, r),
                                        random_tensor({2, 6, 3}, r)};
                 Tensor w = random_tensor({2, 6}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         return project(similarity_embedding(x[0], x[1], x[2]), w);
                                       }));
               }});
  c.push_back({"encoder_block", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 10, 3}, r), random_tensor({3, 3, 4}, r, 0.5),
                                        random_tensor({4}, r), random_tensor({4}, r), random_tensor({4}, r)};
                 Tensor w = random_tensor({2, 6, 4}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         BatchNormStats st;
                                         BlockWeights bw{x[1], x[2], x[3], x[4]};
                                         return project(encoder_block(x[0], bw, st, 2, Mode::train, 0.0, nullptr), w);
                                       }));
               }});
  c.push_back({"acm", kOpTolerance, [](RngState& r) {
                 std::vector<Tensor> in{random_tensor({2, 5, 4}, r), random_tensor({2, 5, 4}, r)};
                 for (int i = 0; i < 4; ++i) {
                   in.push_back(random_tensor({4, 4}, r, 0.5));
                   in.push_back(random_tensor({4}, r, 0.1));
                 }
                 in.push_back(random_tensor({4, 8}, r, 0.5));
                 in.push_back(random_tensor({8}, r, 0.1));
                 in.push_back(random_tensor({8, 4}, r, 0.5));
                 in.push_back(random_tensor({4}, r, 0.1));
                 Tensor w = random_tensor({2, 5, 4}, r);
                 return std::make_pair(in, ScalarFn([=](std::span<const Var> x) {
                                         AcmWeights aw{x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10], x[11], x[12], x[13]};
                                         return project(acm(x[0], x[1], aw, Mode::train, 0.0, nullptr), w);
                                       }));
               }});
  return c;
}

/// Full tiny model: BCE of train-mode forward w.r.t. every parameter.
inline Case model_case() {
  return {"sdanet_full_model", kModelTolerance, [](RngState& r) {
            const SdanetConfig cfg = tiny_config();
            const Parameters p = init_params(cfg, r.split("init"));
            std::vector<std::string> names;
            std::vector<Tensor> in;
            for (const auto& [k, t] : p.weights) {
              names.push_back(k);
              Tensor v = t;
              // Non-trivial biases and BN affine terms.
              if (k.ends_with(".bias") || k.ends_with(".beta")) for (double& e : v.data()) e = r.normal(0.0, 0.1);
              if (k.ends_with(".gamma")) for (double& e : v.data()) e = 1.0 + r.normal(0.0, 0.1);
              in.push_back(std::move(v));
            }
            const std::size_t np = in.size(), b = 2, t = cfg.window_samples;
            const Tensor eeg = random_tensor({b, t, cfg.eeg_channels}, r);
            const Tensor sa = random_tensor({b, t, 1}, r), sb = random_tensor({b, t, 1}, r);
            Tensor y({b, 1});
            y[0] = 1.0;
            y[1] = 0.0;
            ScalarFn f = [=](std::span<const Var> x) {
              ParamLeaves leaves;
              for (std::size_t i = 0; i < np; ++i) leaves.emplace(names[i], x[i]);
              std::map<std::string, BatchNormStats> bn;
              auto tr = forward(leaves, bn, constant(eeg), constant(sa), constant(sb), cfg, Mode::train);
              return bce_loss(tr.prob, y);
            };
            return std::make_pair(in, f);
          }};
}

inline CheckResult run_case(const Case& c, std::size_t seeds, std::uint64_t base_seed = 0) {
  CheckResult res{c.name, 0.0, c.tol, seeds, true};
  const RngState master(base_seed);
  for (std::size_t s = 0; s < seeds; ++s) {
    RngState r = master.split(c.name).split(s);
    auto [inputs, f] = c.make(r);
    GradCheckOptions opt;
    opt.tol = c.tol;
    opt.refinements = c.tol == kModelTolerance ? 3 : 2;
    const auto rep = grad_check(f, inputs, opt);
    res.max_rel_err = std::max(res.max_rel_err, rep.max_rel_err);
  }
  res.passed = res.max_rel_err <= c.tol;
  return res;
}

/// Every op case plus the full model, `seeds` random draws each.
inline std::vector<CheckResult> run_gradient_suite(std::size_t seeds, std::uint64_t base_seed = 0) {
  std::vector<CheckResult> out;
  for (const auto& c : op_cases()) out.push_back(run_case(c, seeds, base_seed));
  out.push_back(run_case(model_case(), seeds, base_seed));
  return out;
}

}  // namespace sdanet::verify
