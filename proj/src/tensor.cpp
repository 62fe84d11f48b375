// Copyright 2026 The wavecap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wavecap/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace wavecap {
inline namespace WAVECAP_ABI {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Real* TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Real(0));
  return grad.data();
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, Real(0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, Real value, bool requires_grad) {
  return from(shape, std::vector<Real>(wavecap::numel(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<Real> values, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  if (values.size() != wavecap::numel(shape))
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + to_string(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::span<const Real> Tensor::grad() const {
  impl_->grad_buffer();
  return impl_->grad;
}

std::span<Real> Tensor::mutable_grad() { return {impl_->grad_buffer(), impl_->data.size()}; }

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

Real Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

Real Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != ndim()) throw DimensionError("index rank mismatch for " + to_string(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= impl_->shape[axis]) throw DimensionError("index out of range");
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

Tensor Tensor::clone() const { return from(shape(), impl_->data, false); }

Tensor Tensor::detach() const { return clone(); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<Real> values, const std::vector<Tensor>& inputs,
                   const char* name, std::function<void(TensorImpl& out)> backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  if (needs) {
    auto node = std::make_shared<Node>();
    node->name = name;
    for (const auto& t : inputs)
      if (t.defined()) node->inputs.push_back(t.impl());
    node->backward = std::move(backward);
    impl->requires_grad = true;
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, std::vector<Real> values, std::initializer_list<Tensor> inputs,
                   const char* name, std::function<void(TensorImpl& out)> backward) {
  return make_result(std::move(shape), std::move(values), std::vector<Tensor>(inputs), name,
                     std::move(backward));
}

Tape Tape::trace(const Tensor& root) {
  Tape tape;
  if (!root.defined()) return tape;
  // Iterative post-order DFS; reversing it yields a topological order from
  // the root, so gradients are complete before a node propagates them.
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  std::vector<TensorImpl*> post;
  TensorImpl* start = root.impl().get();
  if (!start->grad_fn) return tape;
  stack.emplace_back(start, 0);
  seen.insert(start);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->grad_fn->inputs;
    if (next < inputs.size()) {
      TensorImpl* child = inputs[next++].get();
      if (child->grad_fn && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      post.push_back(impl);
      stack.pop_back();
    }
  }
  tape.order_.assign(post.begin(), post.end());
  return tape;
}

void Tape::backward(const Tensor& root) const {
  // Intermediate gradients belong to this pass only.
  for (auto* impl : order_) impl->grad.assign(impl->data.size(), Real(0));
  TensorImpl* r = root.impl().get();
  r->grad_buffer()[0] += Real(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) (*it)->grad_fn->backward(**it);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward() needs a scalar loss, got " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;
  if (loss.is_leaf()) {
    loss.impl()->grad_buffer()[0] += Real(1);
    return;
  }
  Tape::trace(loss).backward(loss);
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
