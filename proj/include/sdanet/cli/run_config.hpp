// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Key/value run configuration shared by all subcommands.
//
//   # comment
//   seed = 7
//   [train]
//   lr0 = 3e-4          # same as train.lr0 at top level
//
// Precedence: command-line flag > config file > built-in default. Unknown keys
// are errors. The resolved config serializes back to the same format with
// round-trippable numbers, so a rerun from the echo is byte-identical.

#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sdanet/data/dataset.hpp"
#include "sdanet/data/specaug.hpp"
#include "sdanet/eval/synth.hpp"
#include "sdanet/model/config.hpp"
#include "sdanet/serialize.hpp"
#include "sdanet/train/trainer.hpp"

namespace sdanet::cli {

struct RunConfig {
  std::uint64_t seed = 0;
  SdanetConfig model;
  TrainConfig train;
  AugmentConfig augment;
  SynthConfig synth;
  SplitFractions split;
  std::string manifest;  // data.manifest
  std::string out_dir;   // out_dir

  /// Seeds of the sub-configs follow the single top-level seed.
  void propagate_seed() {
    train.seed = seed;
    synth.seed = seed;
  }

  void validate() const {
    model.validate();
    train.validate();
    synth.validate();
    split.validate();
    try {
      augment.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void bad_value(const std::string& key, std::string_view v, const char* want) {
  throw ConfigError("config key '" + key + "': cannot parse '" + std::string(v) + "' as " + want);
}

inline std::size_t to_size(const std::string& key, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
  return out;
}

inline std::uint64_t to_u64(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "an unsigned integer");
  return out;
}

inline double to_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

inline bool to_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

inline std::vector<std::size_t> to_size_list(const std::string& key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto c = v.find(',');
    out.push_back(to_size(key, trim(v.substr(0, c))));
    if (c == std::string_view::npos) break;
    v.remove_prefix(c + 1);
  }
  if (out.empty()) bad_value(key, v, "a comma-separated integer list");
  return out;
}

/// Shortest representation that parses back to the same double.
inline std::string fmt_double(double d) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, p);
}

inline std::string fmt_bool(bool b) { return b ? "true" : "false"; }

inline std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

// X-macro style helpers keep the schema table compact.
#define SDANET_SIZE(K, M) \
  Field{K, [](RunConfig& c, std::string_view v) { c.M = to_size(K, v); }, [](const RunConfig& c) { return std::to_string(c.M); }}
#define SDANET_DBL(K, M) \
  Field{K, [](RunConfig& c, std::string_view v) { c.M = to_double(K, v); }, [](const RunConfig& c) { return fmt_double(c.M); }}
#define SDANET_BOOL(K, M) \
  Field{K, [](RunConfig& c, std::string_view v) { c.M = to_bool(K, v); }, [](const RunConfig& c) { return fmt_bool(c.M); }}

inline const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      Field{"seed", [](RunConfig& c, std::string_view v) { c.seed = to_u64("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"out_dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); },
            [](const RunConfig& c) { return c.out_dir; }},
      Field{"data.manifest", [](RunConfig& c, std::string_view v) { c.manifest = std::string(v); },
            [](const RunConfig& c) { return c.manifest; }},
      Field{"data.split", [](RunConfig& c, std::string_view v) { c.split = SplitFractions::parse(std::string(v)); },
            [](const RunConfig& c) { return c.split.str(); }},
      SDANET_SIZE("model.feature_channels", model.feature_channels),
      SDANET_SIZE("model.kernel_size", model.kernel_size),
      Field{"model.dilations", [](RunConfig& c, std::string_view v) { c.model.dilations = to_size_list("model.dilations", v); },
            [](const RunConfig& c) { return fmt_list(c.model.dilations); }},
      SDANET_SIZE("model.shallow_index", model.shallow_index),
      SDANET_SIZE("model.deep_index", model.deep_index),
      SDANET_BOOL("model.acm", model.acm_enabled),
      SDANET_BOOL("model.sscm", model.sscm_enabled),
      SDANET_SIZE("model.ff_hidden", model.ff_hidden),
      SDANET_DBL("model.dropout", model.dropout_rate),
      SDANET_SIZE("model.eeg_channels", model.eeg_channels),
      SDANET_SIZE("model.stimulus_channels", model.stimulus_channels),
      SDANET_SIZE("model.window_samples", model.window_samples),
      SDANET_DBL("train.lr0", train.lr0),
      SDANET_DBL("train.weight_decay", train.weight_decay),
      SDANET_SIZE("train.epochs", train.epochs),
      SDANET_SIZE("train.batch_size", train.batch_size),
      SDANET_SIZE("train.subjects_per_batch", train.subjects_per_batch),
      SDANET_SIZE("train.plateau_patience", train.plateau_patience),
      SDANET_DBL("train.lr_factor", train.lr_factor),
      SDANET_DBL("train.min_lr", train.min_lr),
      SDANET_DBL("train.improvement_threshold", train.improvement_threshold),
      SDANET_SIZE("train.average_last_k", train.average_last_k),
      Field{"train.sampling",
            [](RunConfig& c, std::string_view v) {
              if (v == "randomized") c.train.sampling = Sampling::randomized;
              else if (v == "fixed") c.train.sampling = Sampling::fixed;
              else bad_value("train.sampling", v, "'randomized' or 'fixed'");
            },
            [](const RunConfig& c) { return std::string(c.train.sampling == Sampling::randomized ? "randomized" : "fixed"); }},
      SDANET_BOOL("augment.enabled", augment.enabled),
      SDANET_SIZE("augment.time_masks", augment.n_time_masks),
      SDANET_DBL("augment.max_time_mask_frac", augment.max_time_mask_frac),
      SDANET_SIZE("augment.channel_masks", augment.n_channel_masks),
      SDANET_DBL("augment.max_channel_mask_frac", augment.max_channel_mask_frac),
      SDANET_SIZE("augment.max_warp_samples", augment.max_warp_samples),
      SDANET_SIZE("synth.n_subjects", synth.n_subjects),
      SDANET_SIZE("synth.recordings_per_subject", synth.recordings_per_subject),
      SDANET_DBL("synth.duration_s", synth.duration_s),
      SDANET_DBL("synth.snr", synth.snr),
      SDANET_SIZE("synth.lag_samples", synth.lag_samples),
      SDANET_SIZE("synth.mixing_channels", synth.mixing_channels),
      SDANET_SIZE("synth.eeg_channels", synth.eeg_channels),
      SDANET_DBL("synth.fs_audio", synth.fs_audio),
      SDANET_DBL("synth.carrier_hz", synth.carrier_hz),
  };
  return fields;
}

#undef SDANET_SIZE
#undef SDANET_DBL
#undef SDANET_BOOL

}  // namespace detail

/// Applies one dotted key. Throws ConfigError naming the key when it is unknown
/// or its value does not parse.
inline void set_key(RunConfig& cfg, const std::string& key, std::string_view value) {
  for (const auto& f : detail::schema()) {
    if (f.key == key) {
      f.set(cfg, detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline bool is_known_key(const std::string& key) {
  for (const auto& f : detail::schema())
    if (f.key == key) return true;
  return false;
}

/// Parses key/value text; `origin` prefixes error messages (file name).
inline void apply_text(RunConfig& cfg, std::string_view text, const std::string& origin = "config") {
  std::string section;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    std::string key(detail::trim(line.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    try {
      set_key(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

inline void apply_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(cfg, ss.str(), path.string());
}

/// Dotted overrides from leftover command-line arguments: `--train.lr0 1e-3`
/// or `--train.lr0=1e-3`.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("config key '" + key + "': missing value");
      value = args[++i];
    }
    set_key(cfg, key, value);
  }
}

/// Canonical text form: one `key = value` per schema entry, in schema order.
inline std::string to_text(const RunConfig& cfg) {
  std::string out = "# resolved configuration\n";
  for (const auto& f : detail::schema()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace sdanet::cli
