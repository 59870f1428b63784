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

#include "asq/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace asq {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) fail(ErrorKind::dimension, "negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    fail(ErrorKind::dimension, "shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                                   " values");
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{static_cast<std::int64_t>(values.size())}, std::vector<double>(values));
}

double Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::dimension, "item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  if (flag)
    impl_->grad.assign(impl_->data.size(), 0.0);
  else
    impl_->grad.clear();
  return *this;
}

std::span<double> Tensor::grad() {
  if (impl_->grad.empty() && impl_->requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (impl_->requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data);
  if (impl_->requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel())
    fail(ErrorKind::dimension, "cannot reshape " + shape_str(impl_->shape) + " to " + shape_str(shape));
  return make_result(
      std::move(shape), impl_->data, {*this},
      [](std::span<const double> up) { return std::vector<std::vector<double>>{{up.begin(), up.end()}}; },
      "reshape");
}

bool Tensor::all_finite() const {
  for (double v : impl_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward) {
  return make_result(std::move(shape), std::move(data), std::move(inputs), std::move(backward), "op");
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward,
                   std::string op) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  auto node = std::make_shared<GradNode>();
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->op = std::move(op);
  out.raw()->node = std::move(node);
  out.raw()->requires_grad = true;
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    fail(ErrorKind::dimension, "backward() requires a scalar loss, got shape " +
                                   (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; inputs are pushed in reverse so they are
  // visited in declaration order.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  struct Frame {
    detail::TensorImpl* t;
    bool expanded;
  };
  std::vector<Frame> stack{{loss.raw(), false}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (f.expanded) {
      order.push_back(f.t);
      continue;
    }
    if (!visited.insert(f.t).second) continue;
    stack.push_back({f.t, true});
    if (f.t->node) {
      const auto& ins = f.t->node->inputs;
      for (auto it = ins.rbegin(); it != ins.rend(); ++it)
        if (it->requires_grad() && !visited.count(it->raw())) stack.push_back({it->raw(), false});
    }
  }

  auto* root = loss.raw();
  if (root->grad.size() != root->data.size()) root->grad.assign(root->data.size(), 0.0);
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    if (!t->node) continue;
    if (t->grad.empty()) continue;  // unreachable from the loss
    auto grads = t->node->backward(t->grad);
    const auto& ins = t->node->inputs;
    if (grads.size() != ins.size())
      fail(ErrorKind::dimension, "backward of '" + t->node->op + "' produced " + std::to_string(grads.size()) +
                                     " gradients for " + std::to_string(ins.size()) + " inputs");
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (!ins[i].requires_grad() || grads[i].empty()) continue;
      auto* in = ins[i].raw();
      if (grads[i].size() != in->data.size())
        fail(ErrorKind::dimension, "backward of '" + t->node->op + "' produced a gradient of size " +
                                       std::to_string(grads[i].size()) + " for an input of size " +
                                       std::to_string(in->data.size()));
      if (in->grad.size() != in->data.size()) in->grad.assign(in->data.size(), 0.0);
      for (std::size_t j = 0; j < grads[i].size(); ++j) in->grad[j] += grads[i][j];
    }
    // Intermediate buffers are consumed; a second sweep over the same graph
    // starts from clean intermediates.
    t->grad.clear();
  }
}

}  // namespace asq
