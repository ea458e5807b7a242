// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// SDCK checkpoint container:
//   "SDCK" | u32 version | u64 length + UTF-8 JSON metadata |
//   u32 entry count | entries of (u32 name length, UTF-8 name, SDT1 tensor)
//
// Entry names are prefixed by kind: "param/", "bn_mean/", "bn_var/",
// "adam_m/", "adam_v/". BatchNorm layers whose running statistics were never
// set have no bn_* entries. The optimizer section is optional; its step count
// lives in the metadata under "adam_step".

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdanet/model/config.hpp"
#include "sdanet/model/params.hpp"
#include "sdanet/serialize.hpp"
#include "sdanet/train/adam.hpp"

namespace sdanet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();  // config, epoch, val_loss, ...
  Parameters params;
  std::optional<AdamState> adam;
};

/// Raw view of a checkpoint file, without building a model.
struct CheckpointTable {
  std::uint32_t version = 0;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> entries;
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  std::vector<std::pair<std::string, const Tensor*>> entries;
  for (const auto& [k, t] : ck.params.weights) entries.emplace_back("param/" + k, &t);
  for (const auto& [k, s] : ck.params.bn) {
    if (!s.initialized) continue;
    entries.emplace_back("bn_mean/" + k, &s.mean);
    entries.emplace_back("bn_var/" + k, &s.var);
  }
  nlohmann::json meta = ck.meta;
  if (ck.adam) {
    for (const auto& [k, t] : ck.adam->m) entries.emplace_back("adam_m/" + k, &t);
    for (const auto& [k, t] : ck.adam->v) entries.emplace_back("adam_v/" + k, &t);
    meta["adam_step"] = ck.adam->step;
  } else {
    meta.erase("adam_step");
  }
  ByteWriter w;
  w.magic("SDCK");
  w.u32(kCheckpointVersion);
  w.str(meta.dump());
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    write_tensor(w, *t);
  }
  return w.buffer();
}

inline CheckpointTable decode_checkpoint_table(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  CheckpointTable tab;
  r.expect_magic("SDCK");
  const std::size_t ver_at = r.offset();
  tab.version = r.u32("version");
  if (tab.version != kCheckpointVersion) {
    throw FormatError(ver_at, "unsupported checkpoint version " + std::to_string(tab.version));
  }
  const std::size_t meta_at = r.offset();
  const std::string meta = r.str("metadata");
  try {
    tab.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_at, std::string("metadata is not valid JSON: ") + e.what());
  }
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t len = r.u32("entry name length");
    r.need(len, "entry name");
    std::string name(len, '\0');
    r.read(name.data(), len, "entry name");
    if (name.empty()) throw FormatError(at, "empty entry name");
    tab.entries.emplace_back(std::move(name), read_tensor(r));
  }
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after checkpoint table");
  return tab;
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  CheckpointTable tab = decode_checkpoint_table(bytes);
  Checkpoint ck;
  ck.meta = tab.meta;
  bool has_adam = false;
  AdamState adam;
  for (auto& [name, t] : tab.entries) {
    const auto slash = name.find('/');
    const std::string kind = name.substr(0, slash), key = slash == std::string::npos ? "" : name.substr(slash + 1);
    if (kind == "param") {
      ck.params.weights.emplace(key, std::move(t));
    } else if (kind == "bn_mean") {
      auto& s = ck.params.bn[key];
      s.mean = std::move(t);
      s.initialized = true;
    } else if (kind == "bn_var") {
      auto& s = ck.params.bn[key];
      s.var = std::move(t);
      s.initialized = true;
    } else if (kind == "adam_m") {
      adam.m.emplace(key, std::move(t));
      has_adam = true;
    } else if (kind == "adam_v") {
      adam.v.emplace(key, std::move(t));
      has_adam = true;
    } else {
      throw FormatError(0, "unknown checkpoint entry kind in \"" + name + "\"");
    }
  }
  // Layers with unset statistics have no entries; recreate them from gamma tensors.
  for (const auto& [k, _] : ck.params.weights) {
    if (k.ends_with(".bn.gamma")) ck.params.bn.try_emplace(k.substr(0, k.size() - 6));
  }
  if (has_adam) {
    adam.step = ck.meta.value("adam_step", std::uint64_t{0});
    ck.adam = std::move(adam);
  }
  ck.meta.erase("adam_step");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ck);
  write_file_atomic(path, bytes);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

inline SdanetConfig checkpoint_config(const Checkpoint& ck) {
  if (!ck.meta.contains("config")) throw FormatError(0, "checkpoint metadata has no model config");
  return ck.meta.at("config").get<SdanetConfig>();
}

}  // namespace sdanet
