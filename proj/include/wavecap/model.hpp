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
#include <memory>
#include <span>
#include <vector>

#include "wavecap/decoder.hpp"
#include "wavecap/encoder.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;  // memory_dim is taken from the encoder
};

/// Encoder plus decoder over one named parameter store.
class WaveTransformer {
 public:
  /// Parameters are initialised from a generator seeded with init_seed.
  WaveTransformer(const ModelConfig& config, std::uint64_t init_seed);

  WaveTransformer(const WaveTransformer&) = delete;
  WaveTransformer& operator=(const WaveTransformer&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return *params_; }
  const ParameterStore& parameters() const { return *params_; }
  BufferStore& buffers() { return *buffers_; }
  const BufferStore& buffers() const { return *buffers_; }
  const Encoder& encoder() const { return *encoder_; }
  const Decoder& decoder() const { return *decoder_; }

  /// features [B, T, F] with per-item valid lengths (empty: all T) -> [B, T, F'].
  Tensor encode(const Tensor& features, const std::vector<std::size_t>& lengths,
                const ForwardContext& ctx) const;
  /// tokens [B, L] against encoded memory -> logits [B, L, W].
  Tensor decode(std::span<const std::int32_t> tokens, std::size_t batch, const Tensor& memory,
                const std::vector<std::size_t>& lengths, const ForwardContext& ctx) const;
  /// encode then decode.
  Tensor forward(const Tensor& features, const std::vector<std::size_t>& lengths,
                 std::span<const std::int32_t> tokens, const ForwardContext& ctx) const;

 private:
  ModelConfig config_;
  std::unique_ptr<ParameterStore> params_;
  std::unique_ptr<BufferStore> buffers_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Decoder> decoder_;
};

}  // namespace WAVECAP_ABI
}  // namespace wavecap
