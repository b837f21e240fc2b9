// Copyright 2026 The pelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pelab/tensor.hpp"

namespace pelab {

namespace detail {
inline thread_local bool grad_mode_enabled = true;
}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_mode_enabled() { return detail::grad_mode_enabled; }

/// A node of the define-by-run graph. Leaves have no backward function.
template <typename Scalar>
struct GraphNode {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<GraphNode>> parents;
  std::function<void(const Tensor<Scalar>&)> backward_fn;

  bool is_leaf() const { return !backward_fn && parents.empty(); }

  /// Gradient buffer, zero-initialised on first use.
  Tensor<Scalar>& grad_buffer() {
    if (grad.empty()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

/// Handle to a graph node: a tensor value plus its gradient slot.
template <typename Scalar>
class Var {
 public:
  using TensorT = Tensor<Scalar>;
  using Node = GraphNode<Scalar>;

  Var() = default;
  explicit Var(TensorT value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var constant(TensorT value) { return Var(std::move(value), false); }
  static Var parameter(TensorT value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const TensorT& value() const { return node_->value; }
  /// Direct access for optimizers; never call while a graph using this value is live.
  TensorT& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return !node_->grad.empty(); }
  const TensorT& grad() const { return node_->grad; }
  TensorT& grad_buffer() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = TensorT(); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Records an operation result. When no input requires a gradient (or grad
/// mode is off) the result is a plain constant and the closure is dropped.
/// Every produced value is checked for NaN/Inf.
template <typename Scalar, typename Backward>
Var<Scalar> record_op(const char* op, Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                      Backward&& backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op + " (shape " +
                       shape_to_string(value.shape()) + ")");
  }
  bool needs = false;
  if (grad_mode_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  Var<Scalar> out(std::move(value), needs);
  if (needs) {
    auto& node = *out.node();
    node.op = op;
    for (const auto& in : inputs) node.parents.push_back(in.node());
    node.backward_fn = std::forward<Backward>(backward);
  }
  return out;
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into the
/// `grad` slot of every requires-grad leaf; interior gradients and closures
/// are released afterwards, so a second backward over the same graph fails.
template <typename Scalar>
void backward(const Var<Scalar>& loss) {
  using Node = GraphNode<Scalar>;
  if (!loss.defined() || loss.size() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " +
                     (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  Node* root = loss.node().get();
  if (root->consumed) throw GraphError("backward called twice on the same graph");
  if (!root->requires_grad) throw GraphError("loss does not depend on any parameter");

  // Iterative post-order DFS gives a topological order.
  // Owning handles keep every node alive while parent links are released.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node> parent = top.first->parents[top.second++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  root->grad = Tensor<Scalar>(root->value.shape(), Scalar(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = it->get();
    if (node->is_leaf()) continue;
    if (!node->grad.empty() && node->backward_fn) node->backward_fn(node->grad);
    node->backward_fn = nullptr;
    node->parents.clear();
    node->grad = Tensor<Scalar>();
    node->consumed = true;
  }
}

}  // namespace pelab
