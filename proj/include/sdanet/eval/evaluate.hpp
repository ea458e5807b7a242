// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Test-set scoring and the ablation grid (three model variants plus the
// fixed-stride vs randomized sampling contrast).

#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdanet/data/dataset.hpp"
#include "sdanet/model/sdanet.hpp"
#include "sdanet/train/trainer.hpp"

namespace sdanet {

struct SubjectScore {
  std::size_t correct = 0;
  std::size_t n = 0;
  [[nodiscard]] double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

struct EvalReport {
  double accuracy = 0.0;
  std::map<std::string, SubjectScore> per_subject;
  std::size_t n_samples = 0;
  double ci_half_width = 0.0;
  std::uint64_t pairs_hash = 0;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json subj = nlohmann::json::object();
    for (const auto& [k, s] : per_subject) subj[k] = {{"accuracy", s.accuracy()}, {"n", s.n}};
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(pairs_hash));
    return {{"accuracy", accuracy}, {"n_samples", n_samples}, {"ci_half_width", ci_half_width},
            {"per_subject", subj}, {"pairs_hash", hash}};
  }
};

/// 95% normal-approximation half-width 1.96 * sqrt(p (1 - p) / n).
inline double binomial_ci_half_width(double p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("binomial_ci_half_width: n must be positive");
  return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

/// Builds a report from per-sample outcomes; `correct[i]` belongs to `subjects[i]`.
inline EvalReport make_report(const std::vector<bool>& correct, std::span<const std::string> subjects) {
  if (correct.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (correct.size() != subjects.size()) throw std::invalid_argument("make_report: outcome/subject count mismatch");
  EvalReport r;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    auto& s = r.per_subject[subjects[i]];
    ++s.n;
    if (correct[i]) {
      ++s.correct;
      ++hits;
    }
  }
  r.n_samples = correct.size();
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.n_samples);
  r.ci_half_width = binomial_ci_half_width(r.accuracy, r.n_samples);
  return r;
}

/// Eval-mode accuracy of `params` on `pairs` (scored in chunks of `batch`).
inline EvalReport evaluate(const Parameters& params, std::span<const WindowPair> pairs, const SdanetConfig& cfg,
                           std::size_t batch = 64) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<bool> correct;
  std::vector<std::string> subjects;
  for (const auto& b : chunk_batches(pairs, batch)) {
    const auto preds = predict(params, b.eeg, b.stim_a, b.stim_b, cfg);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      correct.push_back(preds[i].label == static_cast<int>(b.labels[i]));
      subjects.push_back(b.subjects[i]);
    }
  }
  EvalReport r = make_report(correct, subjects);
  r.pairs_hash = pairs_hash(pairs);
  return r;
}

struct AblationArm {
  std::string name;
  bool acm = false;
  bool sscm = false;
  Sampling sampling = Sampling::randomized;
  std::optional<EvalReport> report;
  std::string error;  // non-empty if training or evaluation failed
  std::uint64_t first_batch_hash = 0;

  [[nodiscard]] bool ok() const { return report.has_value(); }

  [[nodiscard]] nlohmann::json to_json() const {
    char h[20];
    std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(first_batch_hash));
    nlohmann::json j = {{"name", name},
                        {"backbone", true},
                        {"dscm", true},
                        {"acm", acm},
                        {"sscm", sscm},
                        {"sampling", sampling == Sampling::randomized ? "randomized" : "fixed"},
                        {"first_batch_hash", h}};
    if (report) j["report"] = report->to_json();
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct AblationInputs {
  const DatasetSplits& data;
  SdanetConfig model;
  TrainConfig train;
  AugmentConfig augment;
};

/// Trains and scores one arm; failures are captured in the arm, not thrown.
inline AblationArm run_arm(const AblationInputs& in, std::span<const WindowPair> test_pairs, AblationArm arm) {
  SdanetConfig m = in.model;
  m.acm_enabled = arm.acm;
  m.sscm_enabled = arm.sscm;
  TrainConfig t = in.train;
  t.sampling = arm.sampling;
  try {
    log::info("ablation arm: " + arm.name);
    const FitResult fr = fit(in.data, m, t, in.augment);
    arm.first_batch_hash = fr.first_batch_hash;
    arm.report = evaluate(fr.averaged, test_pairs, m);
  } catch (const std::exception& e) {
    arm.error = e.what();
    log::warn("ablation arm " + arm.name + " failed: " + e.what());
  }
  return arm;
}

/// The three model variants, all with randomized sampling and identical seeds.
inline std::vector<AblationArm> run_ablation(const AblationInputs& in) {
  const auto test = frozen_pairs(in.data, Split::test, in.model.window_samples, in.train.seed);
  std::vector<AblationArm> out;
  out.push_back(run_arm(in, test, {"backbone+DSCM", false, false, Sampling::randomized}));
  out.push_back(run_arm(in, test, {"+ACM", true, false, Sampling::randomized}));
  out.push_back(run_arm(in, test, {"+ACM+SSCM", true, true, Sampling::randomized}));
  return out;
}

struct SamplingComparison {
  AblationArm baseline;  // fixed-stride reconstruction of the reference scheme
  AblationArm randomized;  // randomized sampler
};

/// Backbone+DSCM trained with each sampling scheme. `randomized_arm` lets a caller
/// reuse an already trained randomized backbone+DSCM arm.
inline SamplingComparison compare_sampling(const AblationInputs& in, std::optional<AblationArm> randomized_arm = {}) {
  const auto test = frozen_pairs(in.data, Split::test, in.model.window_samples, in.train.seed);
  SamplingComparison c;
  c.baseline = run_arm(in, test, {"backbone+DSCM (fixed-stride sampling)", false, false, Sampling::fixed});
  c.randomized = randomized_arm ? *randomized_arm : run_arm(in, test, {"backbone+DSCM", false, false, Sampling::randomized});
  return c;
}

/// The four experiment arms: sampling baseline followed by the three variants.
struct AblationTable {
  std::vector<AblationArm> arms;

  [[nodiscard]] bool all_ok() const {
    for (const auto& a : arms)
      if (!a.ok()) return false;
    return true;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& a : arms) j.push_back(a.to_json());
    return {{"arms", j}, {"note", "fixed-stride sampling approximates the reference data generation"}};
  }

  [[nodiscard]] std::string to_text() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-40s %-4s %-5s %-10s %9s %8s %7s\n", "arm", "ACM", "SSCM", "sampling",
                  "accuracy", "ci95", "n");
    os << line;
    for (const auto& a : arms) {
      const char* smp = a.sampling == Sampling::randomized ? "randomized" : "fixed";
      if (a.report) {
        std::snprintf(line, sizeof line, "%-40s %-4s %-5s %-10s %9.4f %8.4f %7zu\n", a.name.c_str(),
                      a.acm ? "yes" : "no", a.sscm ? "yes" : "no", smp, a.report->accuracy, a.report->ci_half_width,
                      a.report->n_samples);
      } else {
        std::snprintf(line, sizeof line, "%-40s %-4s %-5s %-10s  FAILED: %s\n", a.name.c_str(), a.acm ? "yes" : "no",
                      a.sscm ? "yes" : "no", smp, a.error.c_str());
      }
      os << line;
    }
    return os.str();
  }
};

inline AblationTable run_full_ablation(const AblationInputs& in) {
  AblationTable t;
  auto rows = run_ablation(in);
  auto cmp = compare_sampling(in, rows.front());
  t.arms.push_back(std::move(cmp.baseline));
  for (auto& r : rows) t.arms.push_back(std::move(r));
  return t;
}

}  // namespace sdanet
