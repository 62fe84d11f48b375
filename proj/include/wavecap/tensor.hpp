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

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wavecap/common.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;  // null for leaves

  /// Gradient buffer, zero-initialised on first use.
  Real* grad_buffer();
};

/// One recorded operation: its inputs and the rule that pushes the output
/// gradient back into them.
struct Node {
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl& out)> backward;
};

/// Shared handle to an N-dimensional row-major array with optional gradient.
/// Copies alias the same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, Real value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<Real> data() { return impl_->data; }
  std::span<const Real> data() const { return impl_->data; }
  std::vector<Real>& values() { return impl_->data; }
  const std::vector<Real>& values() const { return impl_->data; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient view; all zeros if nothing has been accumulated yet.
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  Real item() const;
  Real at(std::initializer_list<std::size_t> index) const;

  Tensor clone() const;   // deep copy of values, detached
  Tensor detach() const;  // shares nothing with the graph, copies values

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Thread-local switch for graph recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Build the result of an operation. When recording is on and any input
/// requires grad, the result carries a node with the given backward rule.
Tensor make_result(Shape shape, std::vector<Real> values, std::initializer_list<Tensor> inputs,
                   const char* name, std::function<void(TensorImpl& out)> backward);
Tensor make_result(Shape shape, std::vector<Real> values, const std::vector<Tensor>& inputs,
                   const char* name, std::function<void(TensorImpl& out)> backward);

/// Operations reachable from a root, in topological order (every operation
/// after all operations producing its inputs).
class Tape {
 public:
  static Tape trace(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<TensorImpl*>& order() const { return order_; }

  /// Seed d(root)/d(root) = 1 and run every recorded rule once in reverse.
  void backward(const Tensor& root) const;

 private:
  std::vector<TensorImpl*> order_;  // outputs of recorded operations
};

/// Accumulate d(loss)/d(t) into every requires_grad leaf reachable from loss.
/// Gradients of leaves add up across calls; intermediates are reset each call.
void backward(const Tensor& loss);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
