/**
 * Copyright 2026 The ASQ Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "asq/error.hpp"

namespace asq {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct GradNode;

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode> node;
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage, which is how the
/// autograd graph refers back to its inputs. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor scalar(double value);
  static Tensor from(std::initializer_list<double> values);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  std::vector<double>& storage() { return impl_->data; }
  const std::vector<double>& storage() const { return impl_->data; }

  double item() const;
  double& operator[](std::int64_t i) { return impl_->data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  /// Turns a leaf into a trainable parameter (allocates a zeroed grad buffer).
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  const std::shared_ptr<GradNode>& node() const { return impl_->node; }
  bool is_leaf() const { return impl_->node == nullptr; }

  /// Same values, no graph, no grad.
  Tensor detach() const;
  Tensor clone() const;
  /// Reinterprets the extents; the element count must not change. Shares no
  /// storage with the source but keeps the graph connection.
  Tensor reshape(Shape shape) const;

  bool all_finite() const;
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }
  detail::TensorImpl* raw() const noexcept { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Maps the upstream gradient of a node's output to one gradient per input.
/// An empty vector means "no contribution" for that input.
using BackwardFn = std::function<std::vector<std::vector<double>>(std::span<const double> upstream)>;

struct GradNode {
  std::vector<Tensor> inputs;
  BackwardFn backward;
  std::string op;
};

bool grad_enabled();

/// Disables graph construction for its lifetime (evaluation, optimizer steps).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. A graph node is attached only when grad mode is on and
/// at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward);
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward,
                   std::string op);

/// Reverse-mode sweep from a scalar loss. Nodes are visited in reverse
/// topological order of a depth-first traversal that follows inputs in
/// declaration order, so accumulation order is fixed.
void backward(const Tensor& loss);

}  // namespace asq
