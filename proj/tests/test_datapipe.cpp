// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "sdanet/data/dataset.hpp"
#include "sdanet/data/dsp.hpp"
#include "sdanet/data/recording.hpp"
#include "sdanet/data/specaug.hpp"
#include "sdanet/data/windows.hpp"

using namespace sdanet;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor sine(std::size_t n, double fs, double hz, double amp = 1.0) {
  Tensor x({n, 1});
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * kPi * hz * static_cast<double>(i) / fs);
  return x;
}

double rms(const Tensor& x, std::size_t lo = 0, std::size_t hi = 0) {
  if (hi == 0) hi = x.dim(0);
  double s = 0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(hi - lo));
}

double mean_rows(const Tensor& x, std::size_t lo, std::size_t hi) {
  double s = 0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i];
  return s / static_cast<double>(hi - lo);
}

Tensor randn(const Shape& s, RngState& r) {
  Tensor t(s);
  for (double& v : t.data()) v = r.normal();
  return t;
}

// 1% critical value of the one-sample KS statistic for large n.
double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

Recording small_recording(const std::string& subj, std::size_t seconds, RngState& r) {
  Recording rec;
  rec.subject_id = subj;
  rec.recording_id = subj + "_R1";
  rec.fs_eeg = 128.0;
  rec.fs_audio = 512.0;
  rec.eeg = randn({seconds * 128, 4}, r);
  rec.stimulus = randn({seconds * 512, 1}, r);
  return rec;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("sdanet_test_datapipe_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

PairPool toy_pool(std::size_t subjects, std::size_t pairs_each) {
  PairPool pool;
  for (std::size_t s = 0; s < subjects; ++s) {
    const std::string id = "S" + std::to_string(s);
    for (std::size_t k = 0; k < pairs_each; ++k) {
      WindowPair p;
      p.eeg_window = Tensor({2, 1}, static_cast<double>(s * 1000 + k));
      p.match_env = Tensor({2, 1}, 1.0);
      p.mismatch_env = Tensor({2, 1}, -1.0);
      p.subject_id = id;
      pool[id].push_back(p);
    }
  }
  return pool;
}

}  // namespace

TEST_CASE("resample_to_64hz", "[datapipe][dsp]") {
  SECTION("DC is preserved") {
    const Tensor dc({1000, 3}, 2.5);
    const Tensor y = resample_to_64hz(dc, 512.0);
    REQUIRE(y.shape() == Shape{125, 3});
    for (double v : y.data()) CHECK(std::abs(v - 2.5) < 1e-9);
  }
  SECTION("64 Hz input is passed through") {
    RngState r(1);
    const Tensor x = randn({100, 2}, r);
    CHECK(resample_to_64hz(x, 64.0).bit_equal(x));
  }
  SECTION("a 40 Hz tone is removed") {
    const Tensor x = sine(512 * 20, 512.0, 40.0);
    const Tensor y = resample_to_64hz(x, 512.0);
    CHECK(rms(y, 64, y.dim(0) - 64) < 0.01 * rms(x));
    // Independent check on the designed taps: |H(40 Hz)| from the DTFT.
    const auto h = design_lowpass(0.9 * 32.0, 512.0, 64 * 8 + 1);
    CHECK(h.size() == 513);
    std::complex<double> resp = 0;
    for (std::size_t k = 0; k < h.size(); ++k)
      resp += h[k] * std::polar(1.0, -2.0 * kPi * 40.0 / 512.0 * static_cast<double>(k));
    CHECK(std::abs(resp) < 0.01);
  }
  SECTION("a 5 Hz tone passes") {
    const Tensor y = resample_to_64hz(sine(512 * 20, 512.0, 5.0), 512.0);
    CHECK(rms(y, 64, y.dim(0) - 64) == Approx(std::sqrt(0.5)).epsilon(0.01));
  }
  SECTION("output length") {
    CHECK(resample_to_64hz(Tensor({1001, 1}), 256.0).dim(0) == 251);
    CHECK(resample_to_64hz(Tensor({1000, 1}), 128.0).dim(0) == 500);
  }
  SECTION("unsupported rates") {
    CHECK_THROWS_AS(resample_to_64hz(Tensor({100, 1}), 100.0), RateError);
    CHECK_THROWS_AS(resample_to_64hz(Tensor({100, 1}), 32.0), RateError);
    CHECK_THROWS_WITH(resample_to_64hz(Tensor({100, 1}), 44100.0), Catch::Matchers::ContainsSubstring("unsupported rate"));
  }
}

TEST_CASE("extract_envelope", "[datapipe][dsp]") {
  SECTION("constant amplitude tone: envelope is 2A/pi") {
    const double a = 1.7;
    const Tensor env = envelope_unstandardized(sine(512 * 10, 512.0, 200.0, a), 512.0);
    REQUIRE(env.dim(0) == 640);
    const double dc = 2.0 * a / kPi;
    for (std::size_t i = 32; i < env.dim(0) - 32; ++i) REQUIRE(std::abs(env[i] / dc - 1.0) < 0.05);
  }
  SECTION("amplitude step doubles the envelope") {
    Tensor x = sine(512 * 10, 512.0, 200.0, 1.0);
    for (std::size_t i = 512 * 5; i < x.dim(0); ++i) x[i] *= 2.0;
    const Tensor env = envelope_unstandardized(x, 512.0);
    const double lo = mean_rows(env, 16, 300), hi = mean_rows(env, 340, 624);
    CHECK(hi / lo == Approx(2.0).epsilon(0.05));
  }
  SECTION("standardized output and length") {
    RngState r(2);
    const Tensor env = extract_envelope(randn({512 * 4, 1}, r), 512.0);
    CHECK(env.dim(0) == 256);
    CHECK(mean_rows(env, 0, 256) == Approx(0.0).margin(1e-12));
    CHECK(rms(env) == Approx(1.0).epsilon(1e-12));
  }
  SECTION("silent audio names the recording") {
    CHECK_THROWS_WITH(extract_envelope(Tensor({512, 1}), 512.0, "S3_R2"), Catch::Matchers::ContainsSubstring("S3_R2"));
  }
}

TEST_CASE("overlap_fraction", "[datapipe][windows]") {
  CHECK(overlap_fraction({0, 192}, {0, 192}) == 1.0);
  CHECK(overlap_fraction({0, 192}, {192, 192}) == 0.0);
  CHECK(overlap_fraction({0, 192}, {500, 192}) == 0.0);
  CHECK(overlap_fraction({0, 192}, {128, 192}) == Approx(64.0 / 192.0).epsilon(1e-15));
  CHECK(overlap_fraction({128, 192}, {0, 192}) == overlap_fraction({0, 192}, {128, 192}));
  CHECK_THROWS_AS(overlap_fraction({0, 192}, {0, 100}), std::invalid_argument);
}

TEST_CASE("sample_match_windows", "[datapipe][windows]") {
  RngState r(3);
  const auto one = sample_match_windows(192, 192, r);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Window{0, 192});
  std::vector<std::string> warn;
  CHECK(sample_match_windows(191, 192, r, &warn).empty());
  CHECK(warn.size() == 1);

  const auto w = sample_match_windows(64 * 600, 192, r);
  REQUIRE(w.size() > 100);
  CHECK(w.front().start == 0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    REQUIRE(w[i].end() <= 64 * 600);
    if (i) {
      REQUIRE(w[i].start > w[i - 1].start);
      REQUIRE(w[i].start - w[i - 1].start >= 64);
      REQUIRE(w[i].start - w[i - 1].start <= 128);
    }
  }
  // Stops only when the next hop might not fit.
  CHECK(w.back().end() + 128 > 64 * 600);
  RngState a(9), b(9);
  CHECK(sample_match_windows(5000, 192, a) == sample_match_windows(5000, 192, b));
}

TEST_CASE("shift distribution", "[datapipe][windows]") {
  constexpr std::size_t n = 100000;
  RngState r(4), twin(4);
  std::vector<double> cont(n);
  std::vector<std::size_t> counts(129, 0);
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = draw_shift_samples(r);
    cont[i] = twin.uniform(1.0, 2.0) * 64.0;
    REQUIRE(s == static_cast<std::size_t>(std::llround(cont[i])));
    REQUIRE(s >= 64);
    REQUIRE(s <= 128);
    ++counts[s];
    sum += static_cast<double>(s);
  }
  CHECK(std::abs(sum / n - 96.0) < 1.0);

  // Continuous draws against Uniform(64, 128).
  std::sort(cont.begin(), cont.end());
  double d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = (cont[i] - 64.0) / 64.0;
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  CHECK(d < ks_critical_1pct(n));

  // Rounded shifts against the exact law of round(U(64, 128)):
  // P(64) = P(128) = 1/128, every other integer 1/64.
  double emp = 0, dd = 0;
  for (std::size_t k = 64; k <= 128; ++k) {
    emp += static_cast<double>(counts[k]) / n;
    const double cdf = k == 128 ? 1.0 : (static_cast<double>(k) - 63.5) / 64.0;
    dd = std::max(dd, std::abs(emp - cdf));
  }
  CHECK(dd < ks_critical_1pct(n));
}

TEST_CASE("sample_mismatch", "[datapipe][windows]") {
  RngState r(5);
  CHECK_THROWS_AS(sample_mismatch({0, 192}, 192, r), SamplingError);
  CHECK_FALSE(mismatch_feasible({0, 192}, 192, kMaxOverlap));

  SECTION("acceptance region on a short recording") {
    // Enumerate every start for match [0,192) in 384 samples.
    std::set<std::size_t> allowed;
    for (std::size_t s = 0; s <= 192; ++s)
      if (static_cast<double>(192 - std::min<std::size_t>(s, 192)) / 192.0 < 0.35) allowed.insert(s);
    CHECK(*allowed.begin() == 125);
    std::set<std::size_t> seen;
    for (int i = 0; i < 10000; ++i) {
      const Window m = sample_mismatch({0, 192}, 384, r);
      REQUIRE(allowed.count(m.start) == 1);
      seen.insert(m.start);
    }
    CHECK(seen == allowed);
  }
  SECTION("every draw on a longer recording satisfies the constraint") {
    for (int i = 0; i < 10000; ++i) {
      const Window match{static_cast<std::size_t>(r.uniform_int(0, 1920 - 192)), 192};
      const Window m = sample_mismatch(match, 1920, r);
      REQUIRE(overlap_fraction(match, m) < 0.35);
      REQUIRE(m.end() <= 1920);
    }
  }
  SECTION("fixed-stride mismatch") {
    CHECK(stride_mismatch({0, 192}, 1000) == Window{256, 192});
    CHECK(stride_mismatch({700, 192}, 900) == Window{444, 192});
    CHECK_THROWS_AS(stride_mismatch({0, 192}, 400), SamplingError);
  }
}

TEST_CASE("pair generation keeps the overlap constraint", "[datapipe][windows]") {
  RngState r(6);
  std::size_t n = 0;
  while (n < 100000) {
    const auto len = static_cast<std::size_t>(r.uniform_int(442, 6000));
    for (const Window& m : sample_match_windows(len, 192, r)) {
      const Window mm = sample_mismatch(m, len, r);
      REQUIRE(overlap_fraction(m, mm) < 0.35);
      REQUIRE(m.length == 192);
      ++n;
    }
  }
}

TEST_CASE("specaug", "[datapipe][specaug]") {
  RngState r(7);
  const Tensor x = randn({192, 64}, r);
  AugmentConfig cfg;
  SECTION("disabled is the identity") {
    cfg.enabled = false;
    CHECK(specaug(x, cfg, r).bit_equal(x));
  }
  SECTION("no warp and no masks is the identity") {
    cfg.max_warp_samples = 0;
    cfg.n_time_masks = cfg.n_channel_masks = 0;
    const Tensor y = specaug(x, cfg, r);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(y[i] - x[i]) <= 1e-12);
    const Tensor z = time_warp(x, 50, 0);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(z[i] - x[i]) <= 1e-12);
  }
  SECTION("masked frames hold the window mean") {
    cfg.max_warp_samples = 0;
    cfg.n_channel_masks = 0;
    cfg.n_time_masks = 2;
    cfg.max_time_mask_frac = 0.5;
    const double mu = window_mean(x);
    std::size_t masked = 0;
    for (int it = 0; it < 50; ++it) {
      const Tensor y = specaug(x, cfg, r);
      for (std::size_t t = 0; t < 192; ++t) {
        bool same = true, filled = true;
        for (std::size_t c = 0; c < 64; ++c) {
          same = same && y.at(t, c) == x.at(t, c);
          filled = filled && y.at(t, c) == mu;
        }
        REQUIRE((same || filled));
        masked += filled;
      }
    }
    CHECK(masked > 0);
  }
  SECTION("channel masks") {
    cfg.max_warp_samples = 0;
    cfg.n_time_masks = 0;
    cfg.max_channel_mask_frac = 0.3;
    const double mu = window_mean(x);
    for (int it = 0; it < 50; ++it) {
      const Tensor y = specaug(x, cfg, r);
      for (std::size_t c = 0; c < 64; ++c) {
        bool same = true, filled = true;
        for (std::size_t t = 0; t < 192; ++t) {
          same = same && y.at(t, c) == x.at(t, c);
          filled = filled && y.at(t, c) == mu;
        }
        REQUIRE((same || filled));
      }
    }
  }
  SECTION("warp keeps endpoints and moves the pivot") {
    Tensor ramp({11, 1});
    for (std::size_t i = 0; i < 11; ++i) ramp[i] = static_cast<double>(i);
    const Tensor w = time_warp(ramp, 5, 2);
    CHECK(w[0] == 0.0);
    CHECK(w[10] == 10.0);
    CHECK(w[7] == Approx(5.0).margin(1e-12));
    CHECK_THROWS(time_warp(ramp, 5, 6));
  }
  SECTION("shape is preserved under the default config") {
    for (int it = 0; it < 20; ++it) CHECK(specaug(x, cfg, r).shape() == x.shape());
  }
  SECTION("invalid fractions") {
    cfg.max_time_mask_frac = 1.0;
    CHECK_THROWS(specaug(x, cfg, r));
  }
}

TEST_CASE("compose_batch", "[datapipe][batch]") {
  const PairPool pool = toy_pool(12, 20);
  RngState r(8);
  SECTION("eight subjects, eight distinct pairs each") {
    for (int it = 0; it < 200; ++it) {
      const SampleBatch b = compose_batch(pool, 64, 8, r);
      REQUIRE(b.size() == 64);
      std::map<std::string, std::set<double>> per;
      for (std::size_t i = 0; i < 64; ++i) per[b.subjects[i]].insert(b.eeg.at(i, 0, 0));
      REQUIRE(per.size() == 8);
      for (const auto& [s, ids] : per) REQUIRE(ids.size() == 8);
      for (std::size_t i = 0; i < 64; ++i) {
        // Slot A holds the match (+1 envelope) exactly when label is 1.
        REQUIRE((b.stim_a.at(i, 0, 0) == 1.0) == (b.labels[i] == 1.0));
        REQUIRE(b.stim_a.at(i, 0, 0) == -b.stim_b.at(i, 0, 0));
      }
    }
  }
  SECTION("labels are balanced") {
    double sum = 0;
    for (int it = 0; it < 10000; ++it) sum += compose_batch(pool, 64, 8, r).labels.sum();
    const double mean = sum / (64.0 * 10000.0);
    CHECK(mean >= 0.49);
    CHECK(mean <= 0.51);
  }
  SECTION("deterministic under a seed") {
    RngState a(11), b(11);
    for (int it = 0; it < 20; ++it) REQUIRE(compose_batch(pool, 64, 8, a).hash() == compose_batch(pool, 64, 8, b).hash());
  }
  SECTION("shortfall is reported") {
    CHECK_THROWS_WITH(compose_batch(toy_pool(7, 20), 64, 8, r), Catch::Matchers::ContainsSubstring("only 7"));
    CHECK_THROWS_AS(compose_batch(toy_pool(12, 7), 64, 8, r), SamplingError);
    CHECK_THROWS_AS(compose_batch(pool, 60, 8, r), std::invalid_argument);
  }
}

TEST_CASE("prepare, split and pair a recording", "[datapipe][dataset]") {
  RngState r(9);
  const PreparedRecording p = prepare_recording(small_recording("S1", 60, r));
  REQUIRE(p.length() == 60 * 64);
  CHECK(p.eeg.dim(1) == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, v = 0;
    for (std::size_t t = 0; t < p.length(); ++t) m += p.eeg.at(t, c);
    m /= static_cast<double>(p.length());
    for (std::size_t t = 0; t < p.length(); ++t) v += (p.eeg.at(t, c) - m) * (p.eeg.at(t, c) - m);
    CHECK(m == Approx(0.0).margin(1e-12));
    CHECK(v / static_cast<double>(p.length()) == Approx(1.0).epsilon(1e-12));
  }

  const DatasetSplits s = split_dataset({p}, SplitFractions{});
  CHECK(s.train[0].length() == 2688);
  CHECK(s.val[0].length() == 384);
  CHECK(s.test[0].length() == 768);
  CHECK(s.val[0].eeg.at(0, 0) == p.eeg.at(2688, 0));
  CHECK(s.test[0].envelope[0] == p.envelope[3072]);

  const auto pairs = make_pairs(s.train[0], Sampling::randomized, 192, r);
  REQUIRE_FALSE(pairs.empty());
  for (const auto& q : pairs) {
    REQUIRE(overlap_fraction(q.match_window, q.mismatch_window) < 0.35);
    REQUIRE(q.eeg_window.shape() == Shape{192, 4});
    REQUIRE(q.match_env.bit_equal(slice_rows(s.train[0].envelope, q.match_window.start, q.match_window.end())));
    REQUIRE(q.mismatch_env.bit_equal(slice_rows(s.train[0].envelope, q.mismatch_window.start, q.mismatch_window.end())));
  }
  const auto fixed = make_pairs(s.train[0], Sampling::fixed, 192, r);
  for (std::size_t i = 1; i < fixed.size(); ++i) CHECK(fixed[i].match_window.start - fixed[i - 1].match_window.start == 64);

  std::vector<std::string> warn;
  CHECK(make_pairs(s.val[0], Sampling::randomized, 192, r, &warn).size() >= 1);
  const RngState seed(1);
  CHECK(pairs_hash(evaluation_pairs(s.test, Sampling::randomized, 192, seed)) ==
        pairs_hash(evaluation_pairs(s.test, Sampling::randomized, 192, seed)));
}

TEST_CASE("split fractions", "[datapipe][dataset]") {
  const auto f = SplitFractions::parse("0.6:0.2:0.2");
  CHECK(f.train == 0.6);
  CHECK_THROWS(SplitFractions::parse("0.6:0.2"));
  CHECK_THROWS(SplitFractions::parse("0.6:0.2:0.3"));
  CHECK_THROWS(SplitFractions::parse("1:0:0"));
}

TEST_CASE("recording container and manifest", "[datapipe][io]") {
  RngState r(10);
  const Recording rec = small_recording("S2", 3, r);
  const auto dir = scratch("sdrc");
  save_recording(rec, dir / "a.sdrc");
  const Recording back = load_recording(dir / "a.sdrc");
  CHECK(back.subject_id == "S2");
  CHECK(back.recording_id == "S2_R1");
  CHECK(back.fs_eeg == 128.0);
  CHECK(back.eeg.bit_equal(rec.eeg));
  CHECK(back.stimulus.bit_equal(rec.stimulus));
  CHECK(encode_recording(back) == encode_recording(rec));

  auto bytes = encode_recording(rec);
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(decode_recording(t), FormatError);
  }
  auto bad = bytes;
  bad[1] = 'X';
  try {
    (void)decode_recording(bad);
    FAIL("bad magic accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  bad = bytes;
  bad[4] = 7;
  CHECK_THROWS_AS(decode_recording(bad), FormatError);

  Recording skew = rec;
  skew.stimulus = Tensor({3 * 512 + 8, 1});
  CHECK_THROWS_AS(validate_recording(skew), RecordingError);
  skew.stimulus = Tensor({3 * 512 + 4, 1});
  CHECK_NOTHROW(validate_recording(skew));

  {
    std::ofstream m(dir / "manifest.txt");
    m << "# two copies\n\n  a.sdrc  \n" << (dir / "a.sdrc").string() << "  # absolute\n";
  }
  const auto recs = load_manifest(dir / "manifest.txt");
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].eeg.bit_equal(rec.eeg));
  CHECK_THROWS_AS(load_manifest(dir / "missing.txt"), IoError);
  fs::remove_all(dir);
}
