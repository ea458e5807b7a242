// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// sdanet: command-line entry point.
//
// Exit codes: 0 success, 2 config error, 3 I/O error, 4 training failure,
// 5 checkpoint corruption, 6 verification failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sdanet/cli/run_config.hpp"
#include "sdanet/detail/heap.hpp"
#include "sdanet/sdanet.hpp"
#include "sdanet/verify.hpp"

namespace fs = std::filesystem;
using namespace sdanet;

namespace {

enum Exit : int { kOk = 0, kConfig = 2, kIo = 3, kTrain = 4, kCorrupt = 5, kVerify = 6 };

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "key = value config file");
  sub->add_option("--seed", a.seed, "master seed");
  sub->add_option("--out", a.out, "output directory");
  sub->allow_extras();
}

/// Defaults, then the config file, then dotted overrides, then explicit flags.
cli::RunConfig resolve(const CommonArgs& a, const CLI::App* sub) {
  cli::RunConfig rc;
  if (!a.config.empty()) cli::apply_file(rc, a.config);
  cli::apply_overrides(rc, sub->remaining());
  if (a.seed) rc.seed = *a.seed;
  if (a.out) rc.out_dir = *a.out;
  rc.propagate_seed();
  rc.validate();
  return rc;
}

fs::path require_out(const cli::RunConfig& rc) {
  if (rc.out_dir.empty()) throw ConfigError("config key 'out_dir': an output directory is required (--out DIR)");
  return rc.out_dir;
}

void write_text_file(const fs::path& p, const std::string& s) {
  write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void echo_config(const cli::RunConfig& rc, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "config.resolved", cli::to_text(rc));
}

std::vector<Recording> load_recordings(const cli::RunConfig& rc) {
  if (!rc.manifest.empty()) return load_manifest(rc.manifest);
  log::info("no data.manifest given; generating the synthetic dataset in memory");
  return generate_synthetic(rc.synth);
}

DatasetSplits load_splits(const cli::RunConfig& rc) {
  std::vector<PreparedRecording> prep;
  for (const auto& r : load_recordings(rc)) prep.push_back(prepare_recording(r));
  return split_dataset(prep, rc.split);
}

/// Checkpoint read errors (missing file included) are corruption for the CLI.
CheckpointTable read_checkpoint_table(const fs::path& p) {
  try {
    return decode_checkpoint_table(read_file(p));
  } catch (const IoError& e) {
    throw FormatError(0, std::string("cannot read checkpoint: ") + e.what());
  }
}

Checkpoint read_checkpoint(const fs::path& p) {
  try {
    return load_checkpoint(p);
  } catch (const IoError& e) {
    throw FormatError(0, std::string("cannot read checkpoint: ") + e.what());
  }
}

int cmd_gen_synth(const cli::RunConfig& rc) {
  const fs::path dir = require_out(rc);
  echo_config(rc, dir);
  const auto recs = generate_synthetic(rc.synth);
  std::string manifest = "# synthetic dataset\n";
  double seconds = 0.0;
  for (const auto& r : recs) {
    const std::string name = r.recording_id + ".sdrc";
    save_recording(r, dir / name);
    manifest += name + "\n";
    seconds += static_cast<double>(r.eeg.dim(0)) / r.fs_eeg;
  }
  // Manifest last: a failed run never leaves a manifest pointing at missing files.
  write_text_file(dir / "manifest.txt", manifest);
  std::printf("subjects: %zu\nrecordings: %zu\ntotal hours: %.4f\nsnr: %s\nmanifest: %s\n", rc.synth.n_subjects,
              recs.size(), seconds / 3600.0, cli::detail::fmt_double(rc.synth.snr).c_str(),
              (dir / "manifest.txt").string().c_str());
  return kOk;
}

int cmd_train(const cli::RunConfig& rc) {
  const fs::path dir = require_out(rc);
  echo_config(rc, dir);
  const DatasetSplits data = load_splits(rc);
  FitOptions opt;
  opt.out_dir = dir;
  const FitResult fr = fit(data, rc.model, rc.train, rc.augment, opt);
  Checkpoint ck;
  ck.meta = {{"config", rc.model},
             {"seed", rc.seed},
             {"epoch", rc.train.epochs},
             {"averaged_over", rc.train.average_last_k},
             {"val_loss", fr.records.back().val_loss}};
  ck.params = fr.averaged;
  save_checkpoint(ck, dir / "final_averaged.sdck");
  std::printf("trained %zu epochs; final val_loss %.6f val_accuracy %.4f\naveraged model: %s\n", fr.records.size(),
              fr.records.back().val_loss, fr.records.back().val_accuracy,
              (dir / "final_averaged.sdck").string().c_str());
  return kOk;
}

int cmd_eval(const cli::RunConfig& rc, const std::string& checkpoint, const std::string& split) {
  if (checkpoint.empty()) throw FormatError(0, "no checkpoint given (--checkpoint PATH)");
  Split s;
  if (split == "test") s = Split::test;
  else if (split == "val") s = Split::val;
  else if (split == "train") s = Split::train;
  else throw ConfigError("--split must be train, val or test");
  const Checkpoint ck = read_checkpoint(checkpoint);
  const SdanetConfig cfg = checkpoint_config(ck);
  const DatasetSplits data = load_splits(rc);
  const auto pairs = frozen_pairs(data, s, cfg.window_samples, rc.seed);
  nlohmann::json j = evaluate(ck.params, pairs, cfg).to_json();
  j["split"] = split;
  std::cout << j.dump() << '\n';
  return kOk;
}

int cmd_gradcheck(std::size_t seeds, const std::string& fault_name) {
  const auto kind = fault::parse(fault_name);
  if (!kind) throw ConfigError("--fault-inject: unknown fault '" + fault_name + "'");
  fault::Scope scope(*kind);
  std::vector<std::string> failed;
  double worst_op = 0.0, worst_model = 0.0;
  for (const auto& r : verify::run_gradient_suite(seeds)) {
    std::printf("%-28s max_rel_err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_err, r.tol, r.passed ? "ok" : "FAIL");
    double& worst = r.tol == verify::kModelTolerance ? worst_model : worst_op;
    worst = std::max(worst, r.max_rel_err);
    if (!r.passed) failed.push_back(r.name);
  }
  std::printf("worst op-level rel err %.3e, full model %.3e\n", worst_op, worst_model);
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    throw VerificationFailure("gradient check failed: " + names);
  }
  return kOk;
}

int cmd_ablate(const cli::RunConfig& rc) {
  const fs::path dir = require_out(rc);
  echo_config(rc, dir);
  const DatasetSplits data = load_splits(rc);
  const AblationTable table = run_full_ablation({data, rc.model, rc.train, rc.augment});
  write_text_file(dir / "ablation.json", table.to_json().dump(2) + "\n");
  write_text_file(dir / "ablation.txt", table.to_text());
  std::cout << table.to_text();
  if (!table.all_ok()) {
    std::cerr << "error: at least one ablation arm failed\n";
    return kTrain;
  }
  return kOk;
}

int cmd_inspect(const std::string& path) {
  const CheckpointTable t = read_checkpoint_table(path);
  std::printf("format version: %u\n", t.version);
  if (t.meta.contains("epoch")) std::printf("epoch: %s\n", t.meta["epoch"].dump().c_str());
  if (t.meta.contains("val_loss")) std::printf("val_loss: %s\n", t.meta["val_loss"].dump().c_str());
  std::printf("metadata: %s\n", t.meta.dump().c_str());
  std::printf("%-44s %-14s %s\n", "tensor", "shape", "l2 norm");
  for (const auto& [name, tensor] : t.entries) {
    std::printf("%-44s %-14s %.6e\n", name.c_str(), shape_str(tensor.shape()).c_str(), tensor.norm());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  detail::retain_freed_memory();
  CLI::App app{"SDANet: EEG/speech match-mismatch classifier"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonArgs ga, ta, ea, gca, aa, ia;
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic dataset (SDRC files + manifest)");
  add_common(gen, ga);
  auto* train = app.add_subcommand("train", "train a model; writes checkpoints, metrics.jsonl, final_averaged.sdck");
  add_common(train, ta);
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a data split");
  add_common(eval, ea);
  std::string eval_ckpt, eval_split = "test";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval->add_option("--split", eval_split, "train | val | test");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gc, gca);
  std::string fault_name = "none";
  std::size_t gc_seeds = 20;
  gc->add_option("--fault-inject", fault_name, "corrupt one backward rule: conv_backward | attention_backward | batchnorm_backward");
  gc->add_option("--seeds", gc_seeds, "random draws per check");
  auto* abl = app.add_subcommand("ablate", "ablation grid: sampling contrast and model variants");
  add_common(abl, aa);
  auto* insp = app.add_subcommand("inspect", "print checkpoint metadata and tensors");
  std::string insp_path;
  insp->add_option("checkpoint", insp_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen_synth(resolve(ga, gen));
    if (*train) return cmd_train(resolve(ta, train));
    if (*eval) return cmd_eval(resolve(ea, eval), eval_ckpt, eval_split);
    if (*gc) {
      resolve(gca, gc);
      return cmd_gradcheck(gc_seeds, fault_name);
    }
    if (*abl) return cmd_ablate(resolve(aa, abl));
    if (*insp) return cmd_inspect(insp_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "corrupt file: " << e.what() << '\n';
    return kCorrupt;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTrain;
  } catch (const VerificationFailure& e) {
    std::cerr << e.what() << '\n';
    return kVerify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
