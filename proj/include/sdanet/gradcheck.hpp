// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sdanet/autodiff.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

using ScalarFn = std::function<Var(std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-5;
  /// Denominator floor of the relative error, so elements whose true gradient
  /// is zero are compared absolutely at this scale.
  double floor = 1e-8;
  /// When an element's error exceeds refine_fraction * tol, retry with step/10,
  /// step/100, ... this many times and keep the best. Finite differences straddling a ReLU kink improve
  /// as the step shrinks; a wrong backward rule does not.
  int refinements = 0;
  double refine_fraction = 0.01;
  /// Roundoff resolution of a central difference is about ulps * eps * |f| / h.
  /// Differences below it cannot be resolved, so the floor is raised to
  /// resolution / tol: gradients that small are compared absolutely.
  double resolution_ulps = 64.0;
};

struct GradCheckEntry {
  std::size_t input = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool passed = true;
  std::size_t elements_checked = 0;
  std::vector<GradCheckEntry> worst;  // worst element of each input
};

inline double grad_rel_err(double a, double n, double floor) {
  const double den = std::max({std::abs(a), std::abs(n), floor});
  return std::abs(a - n) / den;
}

/// Central-difference check of the analytic gradient of scalar `f` at `inputs`.
inline GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, GradCheckOptions opt = {}) {
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(param(t));
  Var out = f(leaves);
  backward(out);
  const double f0 = std::abs(out.value().item());
  std::vector<Tensor> analytic;
  for (const auto& l : leaves) analytic.push_back(l.grad());

  auto eval_at = [&](std::size_t which, std::size_t elem, double delta) {
    std::vector<Var> xs;
    xs.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor t = inputs[i];
      if (i == which) t[elem] += delta;
      xs.push_back(constant(std::move(t)));
    }
    return f(xs).value().item();
  };

  GradCheckReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    GradCheckEntry worst{i, 0, 0.0, 0.0, -1.0};
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double a = analytic[i][e];
      double h = opt.step;
      double err = 0.0, num = 0.0;
      for (int attempt = 0; attempt <= opt.refinements; ++attempt, h /= 10.0) {
        const double cand = (eval_at(i, e, h) - eval_at(i, e, -h)) / (2.0 * h);
        const double resolution = opt.resolution_ulps * std::numeric_limits<double>::epsilon() * std::max(1.0, f0) / h;
        const double cand_err = grad_rel_err(a, cand, std::max(opt.floor, resolution / opt.tol));
        if (attempt == 0 || cand_err < err) {
          err = cand_err;
          num = cand;
        }
        if (attempt == 0 && err <= opt.refine_fraction * opt.tol) break;
      }
      ++rep.elements_checked;
      if (err > worst.rel_err) worst = {i, e, a, num, err};
    }
    if (worst.rel_err < 0.0) worst.rel_err = 0.0;
    rep.max_rel_err = std::max(rep.max_rel_err, worst.rel_err);
    rep.worst.push_back(worst);
  }
  rep.passed = rep.max_rel_err <= opt.tol;
  return rep;
}

}  // namespace sdanet
