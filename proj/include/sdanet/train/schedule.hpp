// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace sdanet {

struct PlateauOptions {
  std::size_t patience = 5;
  double factor = 3.0;
  double min_lr = 1e-6;
  double threshold = 1e-6;  // improvement must exceed this to reset the counter
};

struct PlateauState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
};

/// Feeds one validation loss and returns the learning rate for the next epoch.
/// After `patience` consecutive epochs without the best loss improving by more
/// than `threshold`, lr becomes max(lr / factor, min_lr) and the counter resets.
inline double plateau_lr(PlateauState& st, double val_loss, double lr, const PlateauOptions& opt) {
  if (!(opt.factor > 1.0)) throw std::invalid_argument("plateau_lr: factor must exceed 1");
  if (val_loss < st.best - opt.threshold) {
    st.best = val_loss;
    st.bad_epochs = 0;
    return lr;
  }
  if (++st.bad_epochs >= opt.patience) {
    st.bad_epochs = 0;
    return std::max(lr / opt.factor, opt.min_lr);
  }
  return lr;
}

/// Learning rate after each epoch of `history`, starting from `lr0`.
inline std::vector<double> plateau_trace(std::span<const double> history, double lr0, const PlateauOptions& opt) {
  PlateauState st;
  std::vector<double> out;
  double lr = lr0;
  for (double l : history) {
    lr = plateau_lr(st, l, lr, opt);
    out.push_back(lr);
  }
  return out;
}

}  // namespace sdanet
