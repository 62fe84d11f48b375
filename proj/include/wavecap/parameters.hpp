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

#include <map>
#include <string>

#include "wavecap/rng.hpp"
#include "wavecap/tensor.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

/// Named tensors keyed by dot-separated path, iterated in lexicographic order.
class TensorStore {
 public:
  using Map = std::map<std::string, Tensor>;

  /// Insert a new entry; duplicate names are rejected.
  Tensor& add(const std::string& name, Tensor tensor);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// Total number of scalar values across all entries.
  std::size_t total_values() const;

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }

 protected:
  Map entries_;
};

/// Learnable weights. Every entry requires grad.
class ParameterStore : public TensorStore {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  void zero_grad();
};

/// Non-learnable state such as batch-norm running statistics.
using BufferStore = TensorStore;

/// Creates parameters under a name prefix with the default initialisation:
/// weights uniform(-a, a), a = sqrt(1/fan_in); biases zero; norm scales one.
class ParamBuilder {
 public:
  ParamBuilder(ParameterStore& params, BufferStore& buffers, Rng& rng, std::string prefix = "")
      : params_(params), buffers_(buffers), rng_(rng), prefix_(std::move(prefix)) {}

  ParamBuilder scope(const std::string& name) const;
  std::string name(const std::string& leaf) const;

  Tensor uniform(const std::string& leaf, const Shape& shape, std::size_t fan_in);
  Tensor constant(const std::string& leaf, const Shape& shape, Real value);
  Tensor buffer(const std::string& leaf, const Shape& shape, Real value);

 private:
  ParameterStore& params_;
  BufferStore& buffers_;
  Rng& rng_;
  std::string prefix_;
};

}  // namespace WAVECAP_ABI
}  // namespace wavecap
