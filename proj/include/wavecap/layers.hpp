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

#include "wavecap/ops.hpp"
#include "wavecap/parameters.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

/// Per-call state of a forward pass.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout

  Rng& dropout_rng() const;
};

// Thin parameter holders. The tensors alias entries of a ParameterStore, so
// loading a checkpoint into the store updates the layers in place.

struct Linear {
  Tensor weight, bias;
  Linear() = default;
  Linear(ParamBuilder b, std::size_t in, std::size_t out);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct Conv1d {
  Tensor weight, bias;
  Conv1dOptions options;
  Conv1d() = default;
  Conv1d(ParamBuilder b, std::size_t in, std::size_t out, std::size_t kernel, Conv1dOptions opt);
  Tensor operator()(const Tensor& x) const { return conv1d(x, weight, bias, options); }
};

struct Conv2d {
  Tensor weight, bias;
  Conv2dOptions options;
  Conv2d() = default;
  Conv2d(ParamBuilder b, std::size_t in, std::size_t out, std::size_t kernel, Conv2dOptions opt);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }
};

struct BatchNorm {
  Tensor gamma, beta;
  mutable Tensor running_mean, running_var;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);
  BatchNorm() = default;
  BatchNorm(ParamBuilder b, std::size_t channels);
  /// Normalise over axis 1 of a batched tensor.
  Tensor operator()(const Tensor& x, const ForwardContext& ctx,
                    std::span<const std::uint8_t> valid = {}) const;
};

struct LayerNorm {
  Tensor gamma, beta;
  Real eps = Real(1e-5);
  LayerNorm() = default;
  LayerNorm(ParamBuilder b, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

}  // namespace WAVECAP_ABI
}  // namespace wavecap
