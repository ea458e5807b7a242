// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sdanet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture hyperparameters. Block indices are 1-based.
struct SdanetConfig {
  std::size_t feature_channels = 16;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> dilations{1, 2, 4, 8};
  std::size_t shallow_index = 1;
  std::size_t deep_index = 3;
  bool acm_enabled = true;
  bool sscm_enabled = true;
  std::size_t ff_hidden = 0;  // 0 selects 2 * feature_channels
  double dropout_rate = 0.2;
  std::size_t eeg_channels = 64;
  std::size_t stimulus_channels = 1;
  std::size_t window_samples = 192;

  [[nodiscard]] std::size_t blocks() const { return dilations.size(); }
  [[nodiscard]] std::size_t ff_width() const { return ff_hidden ? ff_hidden : 2 * feature_channels; }

  /// Width of the classifier input: 2F per similarity embedding used.
  [[nodiscard]] std::size_t embedding_width() const { return (sscm_enabled ? 4 : 2) * feature_channels; }

  /// Time extent after each block, starting from window_samples.
  [[nodiscard]] std::vector<std::size_t> block_lengths() const {
    std::vector<std::size_t> out;
    std::size_t t = window_samples;
    for (auto d : dilations) {
      t -= (kernel_size - 1) * d;
      out.push_back(t);
    }
    return out;
  }

  /// Samples of input that influence one output sample of the last block.
  [[nodiscard]] std::size_t receptive_field() const {
    return 1 + (kernel_size - 1) * std::accumulate(dilations.begin(), dilations.end(), std::size_t{0});
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (feature_channels == 0) fail("feature_channels must be positive");
    if (kernel_size == 0) fail("kernel_size must be positive");
    if (dilations.empty()) fail("at least one block is required");
    for (auto d : dilations)
      if (d == 0) fail("dilations must be positive");
    if (shallow_index < 1 || deep_index < 1) fail("block indices are 1-based");
    if (shallow_index > deep_index) fail("shallow_index must not exceed deep_index");
    if (deep_index > dilations.size()) fail("deep_index exceeds the number of blocks");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (eeg_channels == 0 || stimulus_channels == 0) fail("channel counts must be positive");
    const std::size_t shrink = (kernel_size - 1) * std::accumulate(dilations.begin(), dilations.end(), std::size_t{0});
    if (window_samples <= shrink) {
      fail("window_samples=" + std::to_string(window_samples) + " leaves no samples after the last block (needs > " +
           std::to_string(shrink) + ")");
    }
  }
};

inline void to_json(nlohmann::json& j, const SdanetConfig& c) {
  j = nlohmann::json{{"feature_channels", c.feature_channels},
                     {"kernel_size", c.kernel_size},
                     {"dilations", c.dilations},
                     {"shallow_index", c.shallow_index},
                     {"deep_index", c.deep_index},
                     {"acm_enabled", c.acm_enabled},
                     {"sscm_enabled", c.sscm_enabled},
                     {"ff_hidden", c.ff_width()},
                     {"dropout_rate", c.dropout_rate},
                     {"eeg_channels", c.eeg_channels},
                     {"stimulus_channels", c.stimulus_channels},
                     {"window_samples", c.window_samples}};
}

inline void from_json(const nlohmann::json& j, SdanetConfig& c) {
  j.at("feature_channels").get_to(c.feature_channels);
  j.at("kernel_size").get_to(c.kernel_size);
  j.at("dilations").get_to(c.dilations);
  j.at("shallow_index").get_to(c.shallow_index);
  j.at("deep_index").get_to(c.deep_index);
  j.at("acm_enabled").get_to(c.acm_enabled);
  j.at("sscm_enabled").get_to(c.sscm_enabled);
  j.at("ff_hidden").get_to(c.ff_hidden);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("eeg_channels").get_to(c.eeg_channels);
  j.at("stimulus_channels").get_to(c.stimulus_channels);
  j.at("window_samples").get_to(c.window_samples);
}

}  // namespace sdanet
