/*
 * Copyright 2026 The graphfuse Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense row-major tensor with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle onto a graph node. Operations in ops.hpp
// record their parents and a backward closure whenever gradient tracking
// is enabled and at least one input requires a gradient. Calling
// backward() on a scalar result topologically sorts the recorded graph and
// runs the closures in reverse order. Leaf gradients accumulate across
// calls; interior gradients are reset at the start of every backward().

#ifndef GRAPHFUSE_TENSOR_HPP_
#define GRAPHFUSE_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "graphfuse/errors.hpp"

namespace graphfuse {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized iff requires_grad, after first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// True when operations should record the graph for backward().
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) {
    detail::grad_mode_flag() = false;
  }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false)
      : Tensor(shape, std::vector<double>(shape_numel(shape), 0.0),
               requires_grad) {}

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (std::size_t d : shape) {
      if (d == 0) {
        throw DimensionError("tensor dims must be positive, got " +
                             shape_str(shape));
      }
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v, bool requires_grad = false) {
    return Tensor({rows, cols}, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  // Rank-1 tensors read as a single row.
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double& operator[](std::size_t i) { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }
  double item() const {
    if (numel() != 1) {
      throw UsageError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return !node_->backward; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad() { return node_->grad; }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  /// Same values, no graph history.
  Tensor detach() const {
    return Tensor(node_->shape, node_->value, false);
  }

  /// Reverse-mode sweep from this scalar.
  void backward() const {
    if (numel() != 1) {
      throw UsageError("backward() needs a scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) {
      throw UsageError("backward() on a tensor that does not require grad");
    }
    std::vector<detail::Node*> order = topo_order();
    for (detail::Node* n : order) {
      if (n->backward) {
        n->grad.assign(n->value.size(), 0.0);
      } else if (n->grad.size() != n->value.size()) {
        n->grad.assign(n->value.size(), 0.0);
      }
    }
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward) (*it)->backward(**it);
    }
  }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  // Post-order DFS restricted to nodes that require grad.
  std::vector<detail::Node*> topo_order() const {
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        detail::Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Builds an op result. The closure is attached only when the graph is being
// recorded and some parent requires grad.
inline Tensor make_result(Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Parent grad buffer, or an empty span when that parent is not tracked.
inline std::span<double> parent_grad(Node& n, std::size_t i) {
  Node& p = *n.parents[i];
  if (!p.requires_grad) return {};
  return p.grad;
}

}  // namespace detail
}  // namespace graphfuse

#endif  // GRAPHFUSE_TENSOR_HPP_
