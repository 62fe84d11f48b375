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
#include <span>
#include <vector>

#include "wavecap/layers.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct DecoderConfig {
  std::size_t vocab_size = 0;  // W
  std::size_t d_model = 128;
  std::size_t blocks = 3;
  std::size_t heads = 4;
  std::size_t memory_dim = 128;  // width of the encoder output
  std::size_t max_len = 64;      // positional-encoding horizon
  double dropout = 0.25;
  bool embedding_dropout = true;

  void validate() const;
};

/// Sinusoidal table [length, d_model]: sin on even columns, cos on odd ones.
Tensor positional_encoding(std::size_t length, std::size_t d_model);

struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamBuilder b, std::size_t d_model, std::size_t kv_dim, std::size_t heads);
  /// query [B, Lq, d], memory [B, Lk, kv_dim] -> [B, Lq, d].
  Tensor operator()(const Tensor& query, const Tensor& memory, const AttentionMask& mask) const;
  /// Attention weights [B, H, Lq, Lk] (for inspection).
  Tensor weights(const Tensor& query, const Tensor& memory, const AttentionMask& mask) const;
};

struct DecoderBlock {
  MultiHeadAttention self_attn;
  LayerNorm ln1;
  MultiHeadAttention cross_attn;
  LayerNorm ln2;
  Linear ff1, ff2;
  LayerNorm ln3;
};

class Decoder {
 public:
  /// Registers parameters under `builder`'s prefix (normally "decoder").
  Decoder(const DecoderConfig& config, ParamBuilder builder);

  const DecoderConfig& config() const { return config_; }

  /// tokens [B, L] row-major, memory [B, T, memory_dim] whose item b is valid
  /// for its first memory_lengths[b] frames (empty: all valid).
  /// Returns logits [B, L, W].
  Tensor forward(std::span<const std::int32_t> tokens, std::size_t batch, const Tensor& memory,
                 const std::vector<std::size_t>& memory_lengths, const ForwardContext& ctx) const;

 private:
  Tensor sublayer_dropout(const Tensor& x, const ForwardContext& ctx) const;

  DecoderConfig config_;
  Tensor emb_weight_, emb_bias_;
  std::vector<DecoderBlock> blocks_;
  Linear cls_;
};

/// Closed-form parameter count of a decoder configuration.
std::size_t decoder_parameter_count(const DecoderConfig& config);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
