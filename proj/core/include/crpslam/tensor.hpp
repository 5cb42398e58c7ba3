// Copyright 2026 The crpslam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crpslam/errors.hpp"

namespace crpslam {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// One record on the reverse-mode tape. Nodes are ordered by `seq`, which
/// increases with creation time, so sorting by `seq` gives a topological
/// order of the (acyclic) graph.
template <typename T>
struct TapeNode {
  Shape shape;
  std::vector<T> value;
  /// Empty until the first gradient contribution arrives.
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TapeNode>> inputs;
  /// Reads this node's `grad` and accumulates into the inputs' grads.
  std::function<void(TapeNode&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad;
  }
};

std::uint64_t next_tape_seq() noexcept;

/// Dense row-major tensor handle with optional gradient tracking.
///
/// Copies share the underlying node. Values are immutable once an op has
/// produced them; only leaves may be rewritten (by optimizers).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using Node = TapeNode<T>;

  BasicTensor() = default;

  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_string(shape) + " holds " +
                           std::to_string(shape_numel(shape)) +
                           " values, got " + std::to_string(values.size()));
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor: zero-sized dimension in " +
                                       shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    node_->seq = next_tape_seq();
  }

  static BasicTensor full(Shape shape, T fill, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return BasicTensor(std::move(shape), std::vector<T>(n, fill),
                       requires_grad);
  }
  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T{0}, requires_grad);
  }
  static BasicTensor scalar(T v) { return BasicTensor({1}, {v}); }

  /// Wraps the output of an op. `inputs` are retained only when the result
  /// requires a gradient, so inference builds no tape.
  static BasicTensor from_op(const char* op, Shape shape, std::vector<T> values,
                             std::vector<std::shared_ptr<Node>> inputs,
                             std::function<void(Node&)> backward);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  T at(std::size_t flat) const { return node_->value.at(flat); }
  T item() const {
    if (numel() != 1) {
      throw ContractError("item(): tensor of shape " + shape_string(shape()) +
                          " is not a scalar");
    }
    return node_->value[0];
  }

  /// In-place access for optimizers and initializers. Leaves only.
  std::span<T> mutable_values() {
    if (node_->backward) throw ContractError("mutable_values(): not a leaf");
    return node_->value;
  }

  bool requires_grad() const noexcept {
    return node_ && node_->requires_grad;
  }
  bool is_leaf() const noexcept { return !node_->backward; }
  const char* op_name() const noexcept { return node_->op; }

  /// Gradient after backward(); empty span if no contribution arrived.
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, no tape history.
  BasicTensor detach(bool requires_grad = false) const {
    return BasicTensor(shape(), node_->value, requires_grad);
  }

  template <typename U>
  BasicTensor<U> cast(bool requires_grad = false) const {
    std::vector<U> out(node_->value.begin(), node_->value.end());
    return BasicTensor<U>(shape(), std::move(out), requires_grad);
  }

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using FieldTensor = BasicTensor<float>;
using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Reverse sweep from a scalar loss. Every reachable tensor with
/// requires_grad accumulates d(loss)/d(tensor) into its grad; leaves keep
/// it, intermediate buffers are released once consumed.
template <typename T>
void backward(const BasicTensor<T>& loss);

/// Throws NumericError naming `what` when any value is NaN or infinite.
template <typename T>
void require_finite(std::span<const T> values, const std::string& what);

template <typename T>
BasicTensor<T> BasicTensor<T>::from_op(
    const char* op, Shape shape, std::vector<T> values,
    std::vector<std::shared_ptr<Node>> inputs,
    std::function<void(Node&)> backward) {
  require_finite<T>(values, op);
  BasicTensor out(std::move(shape), std::move(values));
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  out.node_->op = op;
  if (needs_grad) {
    out.node_->requires_grad = true;
    out.node_->inputs = std::move(inputs);
    out.node_->backward = std::move(backward);
  }
  return out;
}

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace crpslam
