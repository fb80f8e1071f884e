// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tape-free reverse-mode autodiff over Tensor values. Each op allocates a Node
// that owns its inputs and a closure which scatters its gradient into them;
// backward() runs the closures in reverse topological order.

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eqlift/nn/tensor.hpp"

namespace eqlift::nn {

struct Node {
  Tensor value;
  Tensor grad;  // empty until the node receives a gradient
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backward_fn;
  std::string label;
  bool requires_grad = false;

  // Lazily allocated gradient buffer matching value's shape.
  Tensor& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
  bool has_grad() const { return grad.size() == value.size() && value.size() != 0; }
  void zero_grad() {
    if (has_grad()) grad.fill(0.0);
  }
};

using Var = std::shared_ptr<Node>;

inline Var constant(Tensor value, std::string label = "const") {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->label = std::move(label);
  return n;
}

inline Var leaf(Tensor value, std::string label) {
  auto n = constant(std::move(value), std::move(label));
  n->requires_grad = true;
  return n;
}

// Thread-local switch; while off, ops record no graph.
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Creates an op node; requires_grad propagates from inputs. With gradients
// disabled the node keeps no inputs, so callers skip their closures.
inline Var make_node(Tensor value, std::vector<Var> inputs, std::string label) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->label = std::move(label);
  if (!grad_enabled()) return n;
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in->requires_grad;
  n->inputs = std::move(inputs);
  return n;
}

inline std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs before consumers
}

// Accumulates d(root)/d(node) into every reachable node with requires_grad.
// Root must be a scalar. A non-finite gradient aborts with the label of the
// op that produced it.
inline void backward(const Var& root) {
  if (root->value.size() != 1) throw InvalidArgument("backward() needs a scalar root");
  if (!root->value.all_finite()) {
    throw NumericalFailure("non-finite loss value at '" + root->label + "'");
  }
  const auto order = topological_order(root.get());
  root->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward_fn || !n->has_grad()) continue;
    n->backward_fn();
    for (const auto& in : n->inputs) {
      if (in->requires_grad && in->has_grad() && !in->grad.all_finite()) {
        throw NumericalFailure("non-finite gradient produced by '" + n->label + "'");
      }
    }
  }
}

}  // namespace eqlift::nn
