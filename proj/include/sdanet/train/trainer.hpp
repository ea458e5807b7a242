// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop: Adam with decoupled weight decay, plateau learning-rate
// schedule, per-epoch checkpoints and averaging of the last k snapshots.

#pragma once

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdanet/data/dataset.hpp"
#include "sdanet/log.hpp"
#include "sdanet/model/checkpoint.hpp"
#include "sdanet/model/sdanet.hpp"
#include "sdanet/ops.hpp"
#include "sdanet/train/adam.hpp"
#include "sdanet/train/schedule.hpp"

namespace sdanet {

struct TrainConfig {
  double lr0 = 3e-4;
  double weight_decay = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::size_t subjects_per_batch = 8;
  std::size_t plateau_patience = 5;
  double lr_factor = 3.0;
  double min_lr = 1e-6;
  double improvement_threshold = 1e-6;
  std::size_t average_last_k = 10;
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::randomized;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (!(lr0 >= 0.0)) fail("lr0 must be non-negative");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (epochs == 0) fail("epochs must be positive");
    if (batch_size == 0 || subjects_per_batch == 0) fail("batch sizes must be positive");
    if (batch_size % subjects_per_batch != 0) fail("batch_size must be a multiple of subjects_per_batch");
    if (plateau_patience == 0) fail("plateau_patience must be positive");
    if (!(lr_factor > 1.0)) fail("lr_factor must exceed 1");
    if (!(min_lr > 0.0)) fail("min_lr must be positive");
    if (average_last_k == 0 || average_last_k > epochs) fail("average_last_k must lie in [1, epochs]");
  }

  [[nodiscard]] PlateauOptions plateau() const { return {plateau_patience, lr_factor, min_lr, improvement_threshold}; }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;  // in effect during the epoch
  std::string checkpoint;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"epoch", epoch},   {"train_loss", train_loss},  {"val_loss", val_loss},
            {"val_accuracy", val_accuracy}, {"lr", lr}, {"checkpoint", checkpoint}};
  }
};

struct ValidationResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Grads of every parameter after backward(), keyed like Parameters::weights.
inline std::map<std::string, Tensor> collect_grads(const ParamLeaves& leaves) {
  std::map<std::string, Tensor> g;
  for (const auto& [k, v] : leaves) g.emplace(k, v.grad());
  return g;
}

/// Mean BCE of one batch; optionally returns the graph leaves for backward().
inline Var batch_loss(const ParamLeaves& leaves, Parameters& params, const SampleBatch& b, const SdanetConfig& cfg,
                      Mode mode, RngState* rng) {
  auto tr = forward(leaves, params.bn, constant(b.eeg), constant(b.stim_a), constant(b.stim_b), cfg, mode, rng);
  return bce_loss(tr.prob, b.labels);
}

/// One pass over `batches` in order: train-mode forward, BCE, backward, Adam.
/// Returns the mean batch loss.
inline double train_epoch(Parameters& params, AdamState& state, std::span<const SampleBatch> batches,
                          const SdanetConfig& cfg, double lr, double weight_decay, RngState& dropout_rng) {
  if (batches.empty()) throw TrainingError("train_epoch: no batches");
  double total = 0.0;
  for (const auto& b : batches) {
    const ParamLeaves leaves = make_leaves(params, true);
    Var loss = batch_loss(leaves, params, b, cfg, Mode::train, &dropout_rng);
    backward(loss);
    total += loss.value().item();
    adam_step(params, collect_grads(leaves), state, lr, weight_decay);
  }
  return total / static_cast<double>(batches.size());
}

/// Eval-mode mean BCE (per sample) and accuracy. Does not modify `params`.
inline ValidationResult validate(const Parameters& params, std::span<const SampleBatch> batches,
                                 const SdanetConfig& cfg) {
  std::size_t n = 0, correct = 0;
  double loss_sum = 0.0;
  const ParamLeaves leaves = make_leaves(params, false);
  auto bn = params.bn;
  for (const auto& b : batches) {
    auto tr = forward(leaves, bn, constant(b.eeg), constant(b.stim_a), constant(b.stim_b), cfg, Mode::eval);
    loss_sum += bce_loss(tr.prob, b.labels).value().item() * static_cast<double>(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      correct += decide(tr.prob.value()[i]) == static_cast<int>(b.labels[i]) ? 1 : 0;
    }
    n += b.size();
  }
  if (n == 0) throw TrainingError("validate: empty validation set");
  return {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

/// Training batches of one epoch. Randomized sampling redraws the pair pool
/// every epoch; the fixed scheme reuses the same pool. The number of batches
/// is pool_size / batch_size (at least one).
inline std::vector<SampleBatch> epoch_batches(const DatasetSplits& data, const TrainConfig& tc,
                                              const AugmentConfig& aug, std::size_t window, std::size_t epoch) {
  const RngState master(tc.seed);
  const PairPool pool = make_pool(data.train, tc.sampling, window, master.split("train-pool").split(epoch));
  RngState rng = master.split("batches").split(epoch);
  const std::size_t nb = std::max<std::size_t>(1, pool_size(pool) / tc.batch_size);
  std::vector<SampleBatch> out;
  out.reserve(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    SampleBatch b = compose_batch(pool, tc.batch_size, tc.subjects_per_batch, rng);
    augment_batch(b, aug, rng);
    out.push_back(std::move(b));
  }
  return out;
}

/// Frozen evaluation pairs of a split. Always drawn with the randomized sampler
/// from a stream that depends only on the seed, so every training variant and
/// sampling scheme is scored on the same pairs.
inline std::vector<WindowPair> frozen_pairs(const DatasetSplits& data, Split s, std::size_t window, std::uint64_t seed) {
  return evaluation_pairs(data.get(s), Sampling::randomized, window, RngState(seed).split(split_name(s)));
}

inline std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.sdck", epoch);
  return buf;
}

struct FitResult {
  Parameters averaged;
  Parameters last;
  std::vector<EpochRecord> records;
  std::uint64_t first_batch_hash = 0;
};

struct FitOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + metrics.jsonl when set
  std::optional<Parameters> init;                // defaults to init_params(cfg, seed)
};

/// Runs `tc.epochs` epochs. After each epoch: validation on the frozen val
/// pairs, plateau schedule update, checkpoint (when out_dir is set) and a
/// metrics line. Returns the average of the last `average_last_k` snapshots.
inline FitResult fit(const DatasetSplits& data, const SdanetConfig& cfg, const TrainConfig& tc,
                     const AugmentConfig& aug, const FitOptions& opt = {}) {
  cfg.validate();
  tc.validate();
  aug.validate();
  const RngState master(tc.seed);
  Parameters params = opt.init ? *opt.init : init_params(cfg, master.split("init"));
  AdamState adam = AdamState::for_params(params);

  const auto val_pairs = frozen_pairs(data, Split::val, cfg.window_samples, tc.seed);
  if (val_pairs.empty()) throw TrainingError("fit: validation split produced no pairs");
  const auto val_batches = chunk_batches(val_pairs, tc.batch_size);

  std::ofstream metrics;
  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    metrics.open(*opt.out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot open " + (*opt.out_dir / "metrics.jsonl").string());
  }

  FitResult res;
  std::deque<Parameters> recent;
  PlateauState plateau;
  double lr = tc.lr0;
  std::string last_durable = "(none)";
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto batches = epoch_batches(data, tc, aug, cfg.window_samples, epoch);
    if (epoch == 1) res.first_batch_hash = batches.front().hash();
    RngState drop_rng = master.split("dropout").split(epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = train_epoch(params, adam, batches, cfg, lr, tc.weight_decay, drop_rng);
    const auto v = validate(params, val_batches, cfg);
    rec.val_loss = v.loss;
    rec.val_accuracy = v.accuracy;
    lr = plateau_lr(plateau, v.loss, lr, tc.plateau());

    if (opt.out_dir) {
      rec.checkpoint = checkpoint_name(epoch);
      Checkpoint ck;
      ck.meta = {{"config", cfg}, {"epoch", epoch}, {"val_loss", v.loss}, {"seed", tc.seed}};
      ck.params = params;
      ck.adam = adam;
      try {
        save_checkpoint(ck, *opt.out_dir / rec.checkpoint);
        metrics << rec.to_json().dump() << '\n';
        metrics.flush();
        if (!metrics) throw IoError("metrics write failed");
      } catch (const IoError& e) {
        throw TrainingError(std::string("fit: ") + e.what() + "; last durable checkpoint: " + last_durable);
      }
      last_durable = rec.checkpoint;
    }
    log::info("epoch " + std::to_string(epoch) + "/" + std::to_string(tc.epochs) + " lr=" + std::to_string(rec.lr) +
              " train_loss=" + std::to_string(rec.train_loss) + " val_loss=" + std::to_string(rec.val_loss) +
              " val_acc=" + std::to_string(rec.val_accuracy));
    res.records.push_back(rec);
    recent.push_back(params);
    if (recent.size() > tc.average_last_k) recent.pop_front();
  }
  std::vector<Parameters> snaps(recent.begin(), recent.end());
  res.averaged = average_params(snaps, tc.average_last_k);
  res.last = std::move(params);
  return res;
}

}  // namespace sdanet
