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

#include "wavecap/parameters.hpp"

#include <cmath>

namespace wavecap {
inline namespace WAVECAP_ABI {

Tensor& TensorStore::add(const std::string& name, Tensor tensor) {
  auto [it, inserted] = entries_.emplace(name, std::move(tensor));
  if (!inserted) throw UsageError("duplicate tensor name '" + name + "'");
  return it->second;
}

const Tensor& TensorStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("no tensor named '" + name + "'");
  return it->second;
}

Tensor& TensorStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("no tensor named '" + name + "'");
  return it->second;
}

std::size_t TensorStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

Tensor& ParameterStore::add(const std::string& name, Tensor tensor) {
  tensor.set_requires_grad(true);
  return TensorStore::add(name, std::move(tensor));
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

ParamBuilder ParamBuilder::scope(const std::string& name) const {
  return ParamBuilder(params_, buffers_, rng_, this->name(name));
}

std::string ParamBuilder::name(const std::string& leaf) const {
  return prefix_.empty() ? leaf : prefix_ + "." + leaf;
}

Tensor ParamBuilder::uniform(const std::string& leaf, const Shape& shape, std::size_t fan_in) {
  const double a = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<Real> values(numel(shape));
  for (auto& v : values) v = static_cast<Real>(rng_.uniform(-a, a));
  return params_.add(name(leaf), Tensor::from(shape, std::move(values)));
}

Tensor ParamBuilder::constant(const std::string& leaf, const Shape& shape, Real value) {
  return params_.add(name(leaf), Tensor::full(shape, value));
}

Tensor ParamBuilder::buffer(const std::string& leaf, const Shape& shape, Real value) {
  return buffers_.add(name(leaf), Tensor::full(shape, value));
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
