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

#include "wavecap/layers.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

Rng& ForwardContext::dropout_rng() const {
  if (!rng) throw UsageError("training-mode forward pass needs a random source for dropout");
  return *rng;
}

Linear::Linear(ParamBuilder b, std::size_t in, std::size_t out)
    : weight(b.uniform("weight", {out, in}, in)), bias(b.constant("bias", {out}, 0)) {}

Conv1d::Conv1d(ParamBuilder b, std::size_t in, std::size_t out, std::size_t kernel,
               Conv1dOptions opt)
    : weight(b.uniform("weight", {out, in, kernel}, in * kernel)),
      bias(b.constant("bias", {out}, 0)),
      options(opt) {}

Conv2d::Conv2d(ParamBuilder b, std::size_t in, std::size_t out, std::size_t kernel,
               Conv2dOptions opt)
    : options(opt) {
  if (opt.groups == 0 || in % opt.groups != 0 || out % opt.groups != 0)
    throw ConfigError("Conv2d: channel counts not divisible by groups");
  const std::size_t per_group = in / opt.groups;
  weight = b.uniform("weight", {out, per_group, kernel, kernel}, per_group * kernel * kernel);
  bias = b.constant("bias", {out}, 0);
}

BatchNorm::BatchNorm(ParamBuilder b, std::size_t channels)
    : gamma(b.constant("gamma", {channels}, 1)),
      beta(b.constant("beta", {channels}, 0)),
      running_mean(b.buffer("running_mean", {channels}, 0)),
      running_var(b.buffer("running_var", {channels}, 1)) {}

Tensor BatchNorm::operator()(const Tensor& x, const ForwardContext& ctx,
                             std::span<const std::uint8_t> valid) const {
  BatchNormOptions opt;
  opt.training = ctx.training;
  opt.momentum = momentum;
  opt.eps = eps;
  opt.channel_axis = 1;
  opt.valid = valid;
  return batch_norm(x, gamma, beta, running_mean, running_var, opt);
}

LayerNorm::LayerNorm(ParamBuilder b, std::size_t dim)
    : gamma(b.constant("gamma", {dim}, 1)), beta(b.constant("beta", {dim}, 0)) {}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
