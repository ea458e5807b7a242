// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Recording container (SDRC) and dataset manifests.
//
//   "SDRC" | u32 version | u64 length + UTF-8 JSON {subject_id, recording_id, fs_eeg, fs_audio} |
//   SDT1 eeg [N x C] | SDT1 stimulus [M x 1]

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdanet/serialize.hpp"
#include "sdanet/tensor.hpp"

namespace sdanet {

inline constexpr std::uint32_t kRecordingVersion = 1;

class RecordingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Recording {
  std::string subject_id;
  std::string recording_id;
  Tensor eeg;       // [N x C] at fs_eeg
  Tensor stimulus;  // [M x 1] at fs_audio
  double fs_eeg = 64.0;
  double fs_audio = 64.0;

  [[nodiscard]] std::string label() const { return recording_id.empty() ? subject_id : recording_id; }
};

/// Checks rates, ranks and that both signals span the same duration to within
/// one sample of the slower stream.
inline void validate_recording(const Recording& r) {
  const std::string id = r.label();
  if (!(r.fs_eeg > 0.0) || !(r.fs_audio > 0.0)) throw RecordingError(id + ": sample rates must be positive");
  if (r.eeg.rank() != 2 || r.eeg.dim(0) == 0) {
    throw RecordingError(id + ": EEG must be a non-empty [N x C] tensor, got " + shape_str(r.eeg.shape()));
  }
  if (r.stimulus.rank() != 2 || r.stimulus.dim(1) != 1 || r.stimulus.dim(0) == 0) {
    throw RecordingError(id + ": stimulus must be a non-empty [M x 1] tensor, got " + shape_str(r.stimulus.shape()));
  }
  const double de = static_cast<double>(r.eeg.dim(0)) / r.fs_eeg;
  const double da = static_cast<double>(r.stimulus.dim(0)) / r.fs_audio;
  const double tol = 1.0 / std::min(r.fs_eeg, r.fs_audio);
  if (std::abs(de - da) > tol + 1e-12) {
    throw RecordingError(id + ": EEG lasts " + std::to_string(de) + " s but stimulus lasts " + std::to_string(da) +
                         " s (more than one sample apart)");
  }
}

inline std::vector<std::uint8_t> encode_recording(const Recording& r) {
  ByteWriter w;
  w.magic("SDRC");
  w.u32(kRecordingVersion);
  const nlohmann::json meta{{"subject_id", r.subject_id},
                            {"recording_id", r.recording_id},
                            {"fs_eeg", r.fs_eeg},
                            {"fs_audio", r.fs_audio}};
  w.str(meta.dump());
  write_tensor(w, r.eeg);
  write_tensor(w, r.stimulus);
  return w.buffer();
}

inline Recording decode_recording(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes);
  rd.expect_magic("SDRC");
  const std::size_t ver_at = rd.offset();
  if (const auto v = rd.u32("version"); v != kRecordingVersion) {
    throw FormatError(ver_at, "unsupported recording version " + std::to_string(v));
  }
  const std::size_t meta_at = rd.offset();
  const std::string meta_s = rd.str("metadata");
  Recording r;
  try {
    const auto meta = nlohmann::json::parse(meta_s);
    r.subject_id = meta.at("subject_id").get<std::string>();
    r.recording_id = meta.value("recording_id", std::string{});
    r.fs_eeg = meta.at("fs_eeg").get<double>();
    r.fs_audio = meta.at("fs_audio").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_at, std::string("bad recording metadata: ") + e.what());
  }
  r.eeg = read_tensor(rd);
  r.stimulus = read_tensor(rd);
  if (!rd.at_end()) throw FormatError(rd.offset(), "trailing bytes after recording");
  validate_recording(r);
  return r;
}

inline void save_recording(const Recording& r, const std::filesystem::path& path) {
  validate_recording(r);
  write_file_atomic(path, encode_recording(r));
}

inline Recording load_recording(const std::filesystem::path& path) { return decode_recording(read_file(path)); }

/// Reads a manifest: one path per line, '#' starts a comment, blank lines
/// ignored. Relative paths resolve against the manifest's directory.
inline std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::filesystem::path p = line.substr(b, e - b + 1);
    if (p.is_relative()) p = manifest.parent_path() / p;
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<Recording> load_manifest(const std::filesystem::path& manifest) {
  std::vector<Recording> recs;
  for (const auto& p : read_manifest(manifest)) recs.push_back(load_recording(p));
  return recs;
}

}  // namespace sdanet
