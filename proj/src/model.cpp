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

#include "wavecap/model.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

WaveTransformer::WaveTransformer(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config),
      params_(std::make_unique<ParameterStore>()),
      buffers_(std::make_unique<BufferStore>()) {
  config_.decoder.memory_dim = config_.encoder.output_dim();
  Rng rng(init_seed);
  ParamBuilder root(*params_, *buffers_, rng);
  encoder_ = std::make_unique<Encoder>(config_.encoder, root.scope("encoder"));
  decoder_ = std::make_unique<Decoder>(config_.decoder, root.scope("decoder"));
}

Tensor WaveTransformer::encode(const Tensor& features, const std::vector<std::size_t>& lengths,
                               const ForwardContext& ctx) const {
  if (features.ndim() != 3) throw DimensionError("encode: features must be [B, T, F], got " + to_string(features.shape()));
  if (!lengths.empty() && lengths.size() != features.dim(0))
    throw DimensionError("encode: one length per batch item required");
  const FrameMask mask = lengths.empty() ? FrameMask{} : FrameMask::from_lengths(lengths, features.dim(1));
  return encoder_->forward(features, mask, ctx);
}

Tensor WaveTransformer::decode(std::span<const std::int32_t> tokens, std::size_t batch,
                               const Tensor& memory, const std::vector<std::size_t>& lengths,
                               const ForwardContext& ctx) const {
  return decoder_->forward(tokens, batch, memory, lengths, ctx);
}

Tensor WaveTransformer::forward(const Tensor& features, const std::vector<std::size_t>& lengths,
                                std::span<const std::int32_t> tokens,
                                const ForwardContext& ctx) const {
  Tensor memory = encode(features, lengths, ctx);
  return decode(tokens, features.dim(0), memory, lengths, ctx);
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
