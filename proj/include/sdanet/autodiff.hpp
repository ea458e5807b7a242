// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over whole-tensor operations.
// Each op records its inputs and a closure that pushes the output gradient
// back into them; backward() replays those closures in reverse topological order.

#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sdanet/tensor.hpp"

namespace sdanet {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  /// Adds `g` into this node's gradient. Contributions from several consumers accumulate.
  void accumulate(const Tensor& g) {
    if (!requires_grad) return;
    ensure_grad();
    auto dst = grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// The first contribution is adopted as is.
  void accumulate(Tensor&& g) {
    if (!requires_grad) return;
    if (!has_grad() && g.shape() == value.shape() && g.size() == value.size()) {
      grad = std::move(g);
      return;
    }
    accumulate(static_cast<const Tensor&>(g));
  }

  // A default Tensor and a scalar share the empty shape, so size is checked too.
  [[nodiscard]] bool has_grad() const { return grad.shape() == value.shape() && grad.size() == value.size(); }

  void ensure_grad() {
    if (!has_grad()) grad = Tensor::zeros_like(value);
  }
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  [[nodiscard]] const Tensor& value() const { return node_->value; }
  [[nodiscard]] Tensor& mutable_value() { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient after backward(); zeros when nothing flowed here.
  [[nodiscard]] Tensor grad() const {
    if (!node_->has_grad()) return Tensor::zeros_like(node_->value);
    return node_->grad;
  }

  void zero_grad() { node_->grad = Tensor(); }

  [[nodiscard]] Node* node() const { return node_.get(); }
  [[nodiscard]] const NodePtr& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// Leaf that receives gradients (a parameter or an input under test).
inline Var param(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

/// Leaf with no gradient (data).
inline Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

/// Creates an op output. `fn` receives the output node and distributes its grad to parents.
inline Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (auto& in : inputs) {
    if (in.requires_grad()) n->requires_grad = true;
    n->parents.push_back(in.ptr());
  }
  if (n->requires_grad) n->backward_fn = std::move(fn);
  return Var(std::move(n));
}

/// Fills .grad on every node reachable from `loss` that requires a gradient.
/// The loss must be a single-element tensor; its own gradient is seeded with 1.
inline void backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; deep graphs must not blow the call stack.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad.fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

}  // namespace sdanet
