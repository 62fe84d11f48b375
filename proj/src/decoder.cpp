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

#include "wavecap/decoder.hpp"

#include <cmath>

namespace wavecap {
inline namespace WAVECAP_ABI {

void DecoderConfig::validate() const {
  if (vocab_size < 4) throw ConfigError("decoder: vocabulary must hold the reserved tokens and a word");
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw ConfigError("decoder: d_model must be a positive multiple of heads");
  if (blocks == 0) throw ConfigError("decoder: blocks must be >= 1");
  if (memory_dim == 0) throw ConfigError("decoder: memory_dim must be >= 1");
  if (max_len < 2) throw ConfigError("decoder: max_len must be >= 2");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("decoder: dropout must lie in [0, 1)");
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  std::vector<Real> pe(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe[pos * d_model + i] = static_cast<Real>(std::sin(angle));
      if (i + 1 < d_model) pe[pos * d_model + i + 1] = static_cast<Real>(std::cos(angle));
    }
  }
  return Tensor::from({length, d_model}, std::move(pe));
}

MultiHeadAttention::MultiHeadAttention(ParamBuilder b, std::size_t d_model, std::size_t kv_dim,
                                       std::size_t n_heads)
    : q(b.scope("q"), d_model, d_model),
      k(b.scope("k"), kv_dim, d_model),
      v(b.scope("v"), kv_dim, d_model),
      o(b.scope("o"), d_model, d_model),
      heads(n_heads) {}

namespace {

// [B, L, d] -> [B, H, L, d/H]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  return permute(reshape(x, {b, l, heads, d / heads}), {0, 2, 1, 3});
}

}  // namespace

Tensor MultiHeadAttention::weights(const Tensor& query, const Tensor& memory,
                                   const AttentionMask& mask) const {
  Tensor qh = split_heads(q(query), heads);
  Tensor kh = split_heads(k(memory), heads);
  const Real inv = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(qh.dim(3))));
  Tensor scores = scale(matmul(qh, transpose(kh, 2, 3)), inv);
  return masked_softmax(scores, mask);
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory,
                                      const AttentionMask& mask) const {
  if (query.ndim() != 3 || memory.ndim() != 3 || query.dim(0) != memory.dim(0))
    throw DimensionError("attention: expected [B, Lq, d] and [B, Lk, d_kv], got " +
                         to_string(query.shape()) + " and " + to_string(memory.shape()));
  Tensor attn = weights(query, memory, mask);
  Tensor ctx = matmul(attn, split_heads(v(memory), heads));
  const std::size_t b = query.dim(0), l = query.dim(1), d = ctx.dim(1) * ctx.dim(3);
  return o(reshape(permute(ctx, {0, 2, 1, 3}), {b, l, d}));
}

Decoder::Decoder(const DecoderConfig& config, ParamBuilder builder) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  auto emb = builder.scope("emb");
  emb_weight_ = emb.uniform("weight", {config_.vocab_size, d}, config_.vocab_size);
  emb_bias_ = emb.constant("bias", {d}, 0);
  for (std::size_t i = 0; i < config_.blocks; ++i) {
    auto blk = builder.scope("block" + std::to_string(i + 1));
    DecoderBlock db;
    db.self_attn = MultiHeadAttention(blk.scope("self_attn"), d, d, config_.heads);
    db.ln1 = LayerNorm(blk.scope("ln1"), d);
    db.cross_attn = MultiHeadAttention(blk.scope("cross_attn"), d, config_.memory_dim, config_.heads);
    db.ln2 = LayerNorm(blk.scope("ln2"), d);
    db.ff1 = Linear(blk.scope("ffn1"), d, d);
    db.ff2 = Linear(blk.scope("ffn2"), d, d);
    db.ln3 = LayerNorm(blk.scope("ln3"), d);
    blocks_.push_back(std::move(db));
  }
  cls_ = Linear(builder.scope("cls"), d, config_.vocab_size);
}

Tensor Decoder::sublayer_dropout(const Tensor& x, const ForwardContext& ctx) const {
  if (!ctx.training || config_.dropout <= 0) return x;
  return dropout(x, static_cast<Real>(config_.dropout), true, ctx.dropout_rng());
}

Tensor Decoder::forward(std::span<const std::int32_t> tokens, std::size_t batch,
                        const Tensor& memory, const std::vector<std::size_t>& memory_lengths,
                        const ForwardContext& ctx) const {
  if (batch == 0 || tokens.empty() || tokens.size() % batch != 0)
    throw DimensionError("decoder: token count must be a positive multiple of the batch size");
  const std::size_t len = tokens.size() / batch;
  if (len > config_.max_len)
    throw UsageError("decoder: sequence length " + std::to_string(len) + " exceeds max_len " +
                     std::to_string(config_.max_len));
  if (memory.ndim() != 3 || memory.dim(0) != batch || memory.dim(2) != config_.memory_dim)
    throw DimensionError("decoder: memory must be [" + std::to_string(batch) + ", T, " +
                         std::to_string(config_.memory_dim) + "], got " + to_string(memory.shape()));
  const std::size_t d = config_.d_model;
  Tensor x = add(embedding(emb_weight_, tokens, {batch, len}), emb_bias_);
  x = add(scale(x, static_cast<Real>(std::sqrt(static_cast<double>(d)))),
          positional_encoding(len, d));
  if (config_.embedding_dropout) x = sublayer_dropout(x, ctx);

  const AttentionMask causal = AttentionMask::causal(len);
  const AttentionMask cross =
      memory_lengths.empty() ? AttentionMask{}
                             : AttentionMask::key_lengths(memory_lengths, len, memory.dim(1));
  for (const auto& blk : blocks_) {
    x = blk.ln1(add(x, sublayer_dropout(blk.self_attn(x, x, causal), ctx)));
    x = blk.ln2(add(x, sublayer_dropout(blk.cross_attn(x, memory, cross), ctx)));
    x = blk.ln3(add(x, sublayer_dropout(blk.ff2(relu(blk.ff1(x))), ctx)));
  }
  return cls_(x);
}

std::size_t decoder_parameter_count(const DecoderConfig& c) {
  const std::size_t d = c.d_model, w = c.vocab_size, m = c.memory_dim;
  const std::size_t self_attn = 4 * (d * d + d);
  const std::size_t cross_attn = 2 * (d * d + d) + 2 * (m * d + d);
  const std::size_t ffn = 2 * (d * d + d);
  const std::size_t norms = 3 * 2 * d;
  const std::size_t block = self_attn + cross_attn + ffn + norms;
  return (w * d + d) + c.blocks * block + (d * w + w);
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
