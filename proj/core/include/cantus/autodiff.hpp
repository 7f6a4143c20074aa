// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cantus/tensor.hpp"

namespace cantus {

/// One vertex of the reverse-mode graph. Each node owns its forward value
/// and, once backward has reached it, a gradient of identical shape.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return !node_->grad.empty() || node_->value.empty(); }
  // Zero-filled tensor of the value's shape when no gradient was accumulated.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a non-leaf node. The backward rule runs only if some parent
/// requires a gradient.
Var make_result(Tensor value, const char* op,
                std::vector<std::shared_ptr<Node>> parents,
                std::function<void(Node&)> backward_fn);

/// Propagates d(loss)/d(node) to every reachable node that requires a
/// gradient. Leaf gradients accumulate across calls; intermediate gradients
/// are recomputed from scratch each call. Throws ShapeError unless the loss
/// holds exactly one value.
void backward(const Var& loss);

}  // namespace cantus
