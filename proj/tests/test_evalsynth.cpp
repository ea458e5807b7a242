// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sdanet/eval/evaluate.hpp"
#include "sdanet/eval/synth.hpp"

using namespace sdanet;
using Catch::Approx;

namespace {

double column_var(const Tensor& x, std::size_t c) {
  const std::size_t n = x.dim(0);
  double m = 0, v = 0;
  for (std::size_t t = 0; t < n; ++t) m += x.at(t, c);
  m /= static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) v += (x.at(t, c) - m) * (x.at(t, c) - m);
  return v / static_cast<double>(n);
}

// Pearson correlation of eeg[t, c] with env[t - lag].
double lagged_corr(const Tensor& eeg, std::size_t c, const Tensor& env, std::size_t lag) {
  const std::size_t n = eeg.dim(0) - lag;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = eeg.at(t + lag, c), y = env[t];
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double dn = static_cast<double>(n);
  return (sxy - sx * sy / dn) / std::sqrt((sxx - sx * sx / dn) * (syy - sy * sy / dn));
}

SynthConfig small_synth(double snr, std::uint64_t seed) {
  SynthConfig s;
  s.duration_s = 80.0;
  s.eeg_channels = 8;
  s.mixing_channels = 4;
  s.snr = snr;
  s.seed = seed;
  return s;
}

DatasetSplits prepare(const SynthConfig& sc) {
  std::vector<PreparedRecording> prep;
  for (const auto& r : generate_synthetic(sc)) prep.push_back(prepare_recording(r));
  return split_dataset(prep, SplitFractions{});
}

SdanetConfig small_model() {
  SdanetConfig c;
  c.eeg_channels = 8;
  c.feature_channels = 4;
  return c;
}

}  // namespace

TEST_CASE("synthetic generator", "[evalsynth][synth]") {
  SynthConfig cfg;
  cfg.n_subjects = 3;
  cfg.recordings_per_subject = 2;
  cfg.duration_s = 150.0;
  cfg.snr = 0.8;
  cfg.seed = 7;
  const auto recs = generate_synthetic_with_truth(cfg);
  REQUIRE(recs.size() == 6);
  CHECK(recs[0].rec.subject_id == "S1");
  CHECK(recs[1].rec.recording_id == "S1_R2");
  CHECK(recs[5].rec.subject_id == "S3");

  for (const auto& r : recs) {
    CHECK(r.rec.eeg.shape() == Shape{9600, 64});
    CHECK(r.rec.stimulus.shape() == Shape{9600 * 8, 1});
    CHECK_NOTHROW(validate_recording(r.rec));
    REQUIRE(r.truth.mixed.size() == 16);
    for (std::size_t i = 0; i < r.rec.eeg.size(); ++i) REQUIRE(r.rec.eeg[i] == r.truth.signal[i] + r.truth.noise[i]);
    std::vector<bool> is_mixed(64, false);
    for (std::size_t c : r.truth.mixed) is_mixed[c] = true;
    for (std::size_t c = 0; c < 64; ++c) {
      if (is_mixed[c]) {
        const double snr = column_var(r.truth.signal, c) / column_var(r.truth.noise, c);
        INFO("channel " << c << " snr " << snr);
        CHECK(std::abs(snr / cfg.snr - 1.0) < 0.1);
      } else {
        CHECK(r.truth.alpha[c] == 0.0);
        CHECK(column_var(r.truth.signal, c) == 0.0);
      }
    }
  }
  // Subjects differ in their mixed channels or noise; recordings of one subject share them.
  CHECK(recs[0].truth.mixed == recs[1].truth.mixed);
  CHECK(recs[0].truth.alpha == recs[1].truth.alpha);
  CHECK(recs[0].truth.alpha != recs[2].truth.alpha);

  SECTION("the prepared envelope predicts the mixed channels at the configured lag") {
    const PreparedRecording p = prepare_recording(recs[0].rec);
    std::vector<bool> is_mixed(64, false);
    for (std::size_t c : recs[0].truth.mixed) is_mixed[c] = true;
    const double expect = std::sqrt(cfg.snr / (1.0 + cfg.snr));
    for (std::size_t c = 0; c < 64; ++c) {
      const double r = lagged_corr(p.eeg, c, p.envelope, cfg.lag_samples);
      if (is_mixed[c]) {
        CHECK(r > 0.8 * expect);
        CHECK(r < 1.05 * expect);
        CHECK(r > lagged_corr(p.eeg, c, p.envelope, cfg.lag_samples + 16));
      } else {
        CHECK(std::abs(r) < 0.1);
      }
    }
  }
  SECTION("same seed is bitwise identical, another seed is not") {
    const auto again = generate_synthetic(cfg);
    for (std::size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].eeg.bit_equal(recs[i].rec.eeg));
      CHECK(again[i].stimulus.bit_equal(recs[i].rec.stimulus));
    }
    cfg.seed = 8;
    CHECK_FALSE(generate_synthetic(cfg)[0].eeg.bit_equal(recs[0].rec.eeg));
  }
  SECTION("invalid configs") {
    SynthConfig bad;
    bad.snr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.mixing_channels = 65;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.fs_audio = 500.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("evaluation reports", "[evalsynth][report]") {
  SECTION("all correct") {
    const std::vector<bool> ok(50, true);
    const std::vector<std::string> subj(50, "S1");
    const EvalReport r = make_report(ok, subj);
    CHECK(r.accuracy == 1.0);
    CHECK(r.ci_half_width == 0.0);
    CHECK(r.n_samples == 50);
  }
  SECTION("coin flip on 10^4 samples") {
    RngState rng(1);
    std::vector<bool> ok;
    std::vector<std::string> subj;
    for (int i = 0; i < 10000; ++i) {
      ok.push_back(rng.bernoulli(0.5));
      subj.push_back("S" + std::to_string(i % 7));
    }
    const EvalReport r = make_report(ok, subj);
    CHECK(r.accuracy >= 0.49);
    CHECK(r.accuracy <= 0.51);
    CHECK(r.ci_half_width == Approx(0.0098).margin(1e-4));
    CHECK(r.ci_half_width == Approx(1.96 * std::sqrt(r.accuracy * (1 - r.accuracy) / 10000.0)).epsilon(1e-15));
    double weighted = 0;
    std::size_t total = 0;
    for (const auto& [k, s] : r.per_subject) {
      weighted += s.accuracy() * static_cast<double>(s.n);
      total += s.n;
    }
    CHECK(total == 10000);
    CHECK(std::abs(weighted / 10000.0 - r.accuracy) <= 1e-12);
    CHECK(r.per_subject.size() == 7);
  }
  SECTION("errors") {
    CHECK_THROWS(make_report({}, {}));
    const std::vector<std::string> one{"S1"};
    CHECK_THROWS(make_report({true, false}, one));
    CHECK_THROWS(binomial_ci_half_width(0.5, 0));
  }
  SECTION("json") {
    const std::vector<std::string> subj{"S1", "S2"};
    EvalReport r = make_report({true, false}, subj);
    r.pairs_hash = 0xabc;
    const auto j = r.to_json();
    CHECK(j.at("accuracy") == 0.5);
    CHECK(j.at("pairs_hash") == "0000000000000abc");
    CHECK(j.at("per_subject").at("S2").at("n") == 1);
  }
}

TEST_CASE("evaluate scores a model on frozen pairs", "[evalsynth][report]") {
  const DatasetSplits data = prepare(small_synth(1.0, 2));
  const SdanetConfig cfg = small_model();
  Parameters p = init_params(cfg, RngState(1));
  p.at(names::kClassifierWeight).fill(0.0);
  for (auto& [k, s] : p.bn) s = {Tensor({4}, 0.0), Tensor({4}, 1.0), true};
  const auto pairs = frozen_pairs(data, Split::test, cfg.window_samples, 11);
  REQUIRE_FALSE(pairs.empty());
  std::size_t zeros = 0;
  for (const auto& q : pairs) zeros += q.label == 0;
  SECTION("p = 0.5 predicts label 0 everywhere") {
    const EvalReport r = evaluate(p, pairs, cfg, 16);
    CHECK(r.n_samples == pairs.size());
    CHECK(r.accuracy == static_cast<double>(zeros) / static_cast<double>(pairs.size()));
    CHECK(r.pairs_hash == pairs_hash(pairs));
    CHECK(r.per_subject.size() == 8);
  }
  SECTION("a positive bias predicts label 1 everywhere") {
    p.at(names::kClassifierBias).fill(1.0);
    const EvalReport r = evaluate(p, pairs, cfg);
    CHECK(r.accuracy == 1.0 - static_cast<double>(zeros) / static_cast<double>(pairs.size()));
  }
  SECTION("splits use disjoint pairs") {
    const auto val = frozen_pairs(data, Split::val, cfg.window_samples, 11);
    CHECK(pairs_hash(val) != pairs_hash(pairs));
    CHECK(pairs_hash(frozen_pairs(data, Split::test, cfg.window_samples, 11)) == pairs_hash(pairs));
  }
  CHECK_THROWS(evaluate(p, std::span<const WindowPair>{}, cfg));
}

TEST_CASE("ablation harness", "[evalsynth][ablation]") {
  const DatasetSplits data = prepare(small_synth(1.0, 3));
  TrainConfig tc;
  tc.epochs = 2;
  tc.average_last_k = 2;
  tc.seed = 5;
  const AblationInputs in{data, small_model(), tc, AugmentConfig{}};
  const AblationTable t = run_full_ablation(in);
  REQUIRE(t.arms.size() == 4);
  CHECK(t.all_ok());
  CHECK(t.arms[0].sampling == Sampling::fixed);
  CHECK(t.arms[0].name.find("fixed-stride") != std::string::npos);
  const std::vector<std::tuple<std::string, bool, bool>> rows{
      {"backbone+DSCM", false, false}, {"+ACM", true, false}, {"+ACM+SSCM", true, true}};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& a = t.arms[i + 1];
    CHECK(a.name == std::get<0>(rows[i]));
    CHECK(a.acm == std::get<1>(rows[i]));
    CHECK(a.sscm == std::get<2>(rows[i]));
    CHECK(a.sampling == Sampling::randomized);
    CHECK(a.first_batch_hash == t.arms[1].first_batch_hash);
  }
  CHECK(t.arms[0].first_batch_hash != t.arms[1].first_batch_hash);
  for (const auto& a : t.arms) {
    REQUIRE(a.report.has_value());
    CHECK(a.report->pairs_hash == t.arms[1].report->pairs_hash);
  }
  const auto j = t.to_json();
  CHECK(j.at("arms").size() == 4);
  const std::string text = t.to_text();
  for (const auto& a : t.arms) CHECK(text.find(a.name) != std::string::npos);

  SECTION("rerun is bit-identical") {
    const AblationTable again = run_full_ablation(in);
    CHECK(again.to_json() == j);
  }
  SECTION("a failing arm is reported without aborting the others") {
    DatasetSplits broken = data;
    broken.train.resize(3);  // too few subjects for 8-subject batches
    const AblationInputs bad{broken, small_model(), tc, AugmentConfig{}};
    const auto arms = run_ablation(bad);
    REQUIRE(arms.size() == 3);
    for (const auto& a : arms) {
      CHECK_FALSE(a.ok());
      CHECK_FALSE(a.error.empty());
    }
    CHECK_FALSE(AblationTable{arms}.all_ok());
    CHECK(AblationTable{arms}.to_text().find("FAILED") != std::string::npos);
  }
}

TEST_CASE("accuracy grows with the signal-to-noise ratio", "[evalsynth][slow]") {
  // Three seeds per level; the mean trained accuracy must not decrease with snr.
  SdanetConfig cfg = small_model();
  cfg.feature_channels = 8;
  cfg.dropout_rate = 0.0;
  AugmentConfig aug;
  aug.enabled = false;
  TrainConfig tc;
  tc.epochs = 12;
  tc.average_last_k = 3;
  tc.lr0 = 1e-3;
  std::vector<double> means;
  for (double snr : {1e-12, 0.05, 2.0}) {
    double sum = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const DatasetSplits data = prepare(small_synth(snr, seed));
      tc.seed = seed;
      const FitResult fr = fit(data, cfg, tc, aug);
      const auto test = frozen_pairs(data, Split::test, cfg.window_samples, seed);
      const EvalReport r = evaluate(fr.averaged, test, cfg);
      if (snr < 1e-6) {
        INFO("chance arm accuracy " << r.accuracy << " ci " << r.ci_half_width);
        CHECK(r.accuracy - 0.5 <= 3.0 * r.ci_half_width);
      }
      sum += r.accuracy;
    }
    means.push_back(sum / 3.0);
  }
  INFO("mean accuracy " << means[0] << " " << means[1] << " " << means[2]);
  CHECK(means[0] <= means[1]);
  CHECK(means[1] <= means[2]);
  CHECK(means[2] - means[0] > 0.1);
}
