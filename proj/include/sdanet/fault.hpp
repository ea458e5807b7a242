// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Fault-injection hooks used to prove the gradient checker can fail.

#pragma once

#include <optional>
#include <string_view>

namespace sdanet::fault {

enum class Kind { none, conv_backward, attention_backward, batchnorm_backward };

inline thread_local Kind active = Kind::none;

inline std::optional<Kind> parse(std::string_view name) {
  if (name == "none") return Kind::none;
  if (name == "conv_backward") return Kind::conv_backward;
  if (name == "attention_backward") return Kind::attention_backward;
  if (name == "batchnorm_backward") return Kind::batchnorm_backward;
  return std::nullopt;
}

/// Activates a fault for the lifetime of the scope (current thread only).
class Scope {
 public:
  explicit Scope(Kind k) : prev_(active) { active = k; }
  ~Scope() { active = prev_; }
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

 private:
  Kind prev_;
};

inline bool on(Kind k) { return active == k; }

}  // namespace sdanet::fault
