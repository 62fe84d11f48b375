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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wavecap/parameters.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates per parameter name.
struct AdamState {
  std::map<std::string, std::vector<Real>> m, v;
  std::uint64_t step = 0;  // number of updates applied so far
};

/// One bias-corrected Adam update at the given 1-based step.
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
void adam_step(ParameterStore& params, AdamState& state, const AdamConfig& config,
               std::uint64_t step);

/// Scale all gradients so their global 2-norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

/// Global 2-norm over every parameter gradient.
double grad_norm(const ParameterStore& params);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
