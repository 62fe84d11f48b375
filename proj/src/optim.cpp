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

#include "wavecap/optim.hpp"

#include <cmath>

namespace wavecap {
inline namespace WAVECAP_ABI {

void adam_step(ParameterStore& params, AdamState& state, const AdamConfig& config,
               std::uint64_t step) {
  if (step < 1) throw UsageError("adam_step: step must be >= 1");
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    const std::size_t n = p.numel();
    if (m.empty()) m.assign(n, Real(0));
    if (v.empty()) v.assign(n, Real(0));
    const auto g = p.grad();
    auto w = p.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      w[i] = static_cast<Real>(w[i] - config.lr * (mi / c1) / (std::sqrt(vi / c2) + config.eps));
    }
  }
  state.step = step;
}

double grad_norm(const ParameterStore& params) {
  double sq = 0.0;
  for (const auto& [_, p] : params) {
    if (!p.has_grad()) continue;
    for (Real g : p.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [_, p] : params) {
      if (!p.has_grad()) continue;
      for (Real& g : p.mutable_grad()) g = static_cast<Real>(g * factor);
    }
  }
  return norm;
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
