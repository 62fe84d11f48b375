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

#include "wavecap/encoder.hpp"

#include <numeric>

namespace wavecap {
inline namespace WAVECAP_ABI {

std::string to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::full: return "full";
    case EncoderMode::temp_only: return "temp";
    case EncoderMode::tf_only: return "tf";
    case EncoderMode::avg: return "avg";
  }
  return "full";
}

EncoderMode parse_encoder_mode(const std::string& text) {
  if (text == "full") return EncoderMode::full;
  if (text == "temp" || text == "temp_only") return EncoderMode::temp_only;
  if (text == "tf" || text == "tf_only") return EncoderMode::tf_only;
  if (text == "avg") return EncoderMode::avg;
  throw ConfigError("unknown encoder mode '" + text + "' (expected full, temp, tf or avg)");
}

void EncoderConfig::validate() const {
  if (n_features == 0) throw ConfigError("encoder: n_features must be >= 1");
  if (channels == 0) throw ConfigError("encoder: channels must be >= 1");
  if (uses_temporal() && wave_blocks == 0) throw ConfigError("encoder: wave_blocks must be >= 1");
  if (!uses_time_frequency()) return;
  if (tf_blocks == 0) throw ConfigError("encoder: tf_blocks must be >= 1");
  if (pcnn_kernel <= 1 || pcnn_kernel % 2 == 0)
    throw ConfigError("encoder: pcnn_kernel must be odd and > 1");
  if (pool_factors.size() != tf_blocks)
    throw ConfigError("encoder: need one pool factor per time-frequency block (" +
                      std::to_string(tf_blocks) + "), got " + std::to_string(pool_factors.size()));
  const std::size_t product = std::accumulate(pool_factors.begin(), pool_factors.end(),
                                              std::size_t{1}, std::multiplies<>());
  if (product != n_features)
    throw ConfigError("encoder: product of pool factors (" + std::to_string(product) +
                      ") must equal n_features (" + std::to_string(n_features) + ")");
  if (!(tf_dropout >= 0 && tf_dropout < 1)) throw ConfigError("encoder: tf_dropout must lie in [0, 1)");
}

FrameMask FrameMask::from_lengths(const std::vector<std::size_t>& lengths, std::size_t time) {
  FrameMask m;
  bool all_full = true;
  for (auto len : lengths) {
    if (len == 0 || len > time) throw UsageError("frame length outside [1, padded length]");
    all_full = all_full && len == time;
  }
  if (all_full) return m;
  m.batch = lengths.size();
  m.time = time;
  m.valid.assign(m.batch * time, 0);
  for (std::size_t b = 0; b < m.batch; ++b)
    for (std::size_t t = 0; t < lengths[b]; ++t) m.valid[b * time + t] = 1;
  return m;
}

std::vector<std::uint8_t> FrameMask::expanded(std::size_t factor) const {
  std::vector<std::uint8_t> out;
  out.reserve(valid.size() * factor);
  for (auto v : valid) out.insert(out.end(), factor, v);
  return out;
}

Encoder::Encoder(const EncoderConfig& config, ParamBuilder builder) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels;
  if (config_.uses_temporal()) {
    auto temp = builder.scope("temp");
    const Conv1dOptions pointwise{1, 0, 1}, near{1, 1, 1}, far{1, 2, 2};
    for (std::size_t i = 0; i < config_.wave_blocks; ++i) {
      auto blk = temp.scope("block" + std::to_string(i + 1));
      const std::size_t c_in = i == 0 ? config_.n_features : c;
      WaveBlock wb;
      wb.conv[0] = Conv1d(blk.scope("t1"), c_in, c, 1, pointwise);
      wb.conv[1] = Conv1d(blk.scope("t2"), c, c, 3, near);
      wb.conv[2] = Conv1d(blk.scope("t3"), c, c, 3, near);
      wb.conv[3] = Conv1d(blk.scope("t4"), c, c, 1, pointwise);
      wb.conv[4] = Conv1d(blk.scope("t5"), c, c, 3, far);
      wb.conv[5] = Conv1d(blk.scope("t6"), c, c, 3, far);
      wb.conv[6] = Conv1d(blk.scope("t7"), c, c, 1, pointwise);
      wb.bn = BatchNorm(blk.scope("bn"), c);
      wave_.push_back(std::move(wb));
    }
  }
  if (config_.uses_time_frequency()) {
    auto tf = builder.scope("tf");
    for (std::size_t i = 0; i < config_.tf_blocks; ++i) {
      auto blk = tf.scope("block" + std::to_string(i + 1));
      TfBlock tb;
      // The first block lifts the single input plane to C channels; later
      // blocks are depthwise (one 5x5 kernel per channel).
      const std::size_t c_in = i == 0 ? 1 : c;
      tb.scnn = Conv2d(blk.scope("scnn"), c_in, c, 5, {1, 2, c_in});
      tb.bn_a = BatchNorm(blk.scope("bn_a"), c);
      tb.pcnn = Conv2d(blk.scope("pcnn"), c, c, config_.pcnn_kernel,
                       {1, (config_.pcnn_kernel - 1) / 2, 1});
      tb.bn_b = BatchNorm(blk.scope("bn_b"), c);
      tb.pool = config_.pool_factors[i];
      tf_.push_back(std::move(tb));
    }
  }
  if (config_.uses_merge()) {
    auto m = builder.scope("merge");
    merge_.cnn = Conv2d(m.scope("cnn"), 2, 1, 5, {1, 2, 1});
    merge_.fnn = Linear(m.scope("fnn"), c, config_.output_dim());
  }
}

Tensor Encoder::wave_block_forward(std::size_t index, const Tensor& input, const FrameMask& mask,
                                   const ForwardContext& ctx) const {
  const WaveBlock& wb = wave_.at(index);
  const auto& t = wb.conv;
  // Padded frames are zeroed before every convolution that reaches across
  // time, so valid frames see exactly the zero padding of an unpadded input.
  auto masked = [&mask](const Tensor& x) {
    return mask.empty() ? x : apply_mask(x, mask.valid, 1);
  };
  Tensor h1 = masked(t[0](input));
  Tensor gated1 = mul(tanh(t[1](h1)), sigmoid(t[2](h1)));
  Tensor h2 = masked(add(t[3](gated1), h1));
  Tensor gated2 = mul(tanh(t[4](h2)), sigmoid(t[5](h2)));
  Tensor pre = add(t[6](gated2), h2);
  return relu(wb.bn(pre, ctx, mask.valid));
}

Tensor Encoder::temporal(const Tensor& features, const FrameMask& mask,
                         const ForwardContext& ctx) const {
  if (wave_.empty()) throw UsageError("encoder: temporal branch not built in mode " + to_string(config_.mode));
  if (features.ndim() != 3 || features.dim(2) != config_.n_features)
    throw DimensionError("encoder: features must be [B, T, " + std::to_string(config_.n_features) +
                         "], got " + to_string(features.shape()));
  // Mel bands become input channels; convolutions run along time.
  Tensor h = transpose(features, 1, 2);
  for (std::size_t i = 0; i < wave_.size(); ++i) h = wave_block_forward(i, h, mask, ctx);
  return transpose(h, 1, 2);
}

Tensor Encoder::tf_depthwise(std::size_t index, const Tensor& input) const {
  return tf_.at(index).scnn(input);
}

Tensor Encoder::tf_block_forward(std::size_t index, const Tensor& input, const FrameMask& mask,
                                 const ForwardContext& ctx) const {
  const TfBlock& tb = tf_.at(index);
  const std::size_t freq = input.dim(3);
  const auto valid = mask.empty() ? std::vector<std::uint8_t>{} : mask.expanded(freq);
  Tensor x = mask.empty() ? input : apply_mask(input, valid, 1);
  Tensor a = tb.bn_a(leaky_relu(tb.scnn(x), static_cast<Real>(config_.leaky_slope)), ctx, valid);
  Tensor s = tb.pcnn(a);
  Tensor h = max_pool_freq(tb.bn_b(s, ctx, valid), tb.pool);
  if (ctx.training && config_.tf_dropout > 0)
    h = dropout(h, static_cast<Real>(config_.tf_dropout), true, ctx.dropout_rng());
  if (config_.tf_post_relu) h = relu(h);
  return h;
}

Tensor Encoder::time_frequency(const Tensor& features, const FrameMask& mask,
                               const ForwardContext& ctx) const {
  if (tf_.empty()) throw UsageError("encoder: time-frequency branch not built in mode " + to_string(config_.mode));
  if (features.ndim() != 3 || features.dim(2) != config_.n_features)
    throw DimensionError("encoder: features must be [B, T, " + std::to_string(config_.n_features) +
                         "], got " + to_string(features.shape()));
  const std::size_t batch = features.dim(0), time = features.dim(1);
  Tensor h = reshape(features, {batch, 1, time, config_.n_features});
  for (std::size_t i = 0; i < tf_.size(); ++i) h = tf_block_forward(i, h, mask, ctx);
  // [B, C, T, 1] -> [B, T, C]
  return transpose(reshape(h, {batch, config_.channels, time}), 1, 2);
}

Tensor Encoder::merge(const Tensor& z_temporal, const Tensor& z_tf, const FrameMask& mask) const {
  if (!merge_.cnn.weight.defined()) throw UsageError("encoder: merge network not built in mode " + to_string(config_.mode));
  if (z_temporal.shape() != z_tf.shape())
    throw DimensionError("merge: branch outputs differ: " + to_string(z_temporal.shape()) +
                         " vs " + to_string(z_tf.shape()));
  const std::size_t batch = z_temporal.dim(0), time = z_temporal.dim(1), c = z_temporal.dim(2);
  Tensor stacked = concat({reshape(z_temporal, {batch, 1, time, c}), reshape(z_tf, {batch, 1, time, c})}, 1);
  if (!mask.empty()) stacked = apply_mask(stacked, mask.expanded(c), 1);
  Tensor merged = reshape(merge_.cnn(stacked), {batch, time, c});
  return merge_.fnn(merged);
}

Tensor Encoder::combine(const Tensor& z_temporal, const Tensor& z_tf, const FrameMask& mask) const {
  switch (config_.mode) {
    case EncoderMode::full: return merge(z_temporal, z_tf, mask);
    case EncoderMode::avg:
      if (z_temporal.shape() != z_tf.shape())
        throw DimensionError("avg: branch outputs differ: " + to_string(z_temporal.shape()) +
                             " vs " + to_string(z_tf.shape()));
      return scale(add(z_temporal, z_tf), Real(0.5));
    case EncoderMode::temp_only:
    case EncoderMode::tf_only: break;
  }
  throw UsageError("encoder: mode " + to_string(config_.mode) + " has a single branch");
}

Tensor Encoder::forward(const Tensor& features, const FrameMask& mask,
                        const ForwardContext& ctx) const {
  switch (config_.mode) {
    case EncoderMode::temp_only: return temporal(features, mask, ctx);
    case EncoderMode::tf_only: return time_frequency(features, mask, ctx);
    case EncoderMode::full:
    case EncoderMode::avg: break;
  }
  Tensor zt = temporal(features, mask, ctx);
  Tensor ztf = time_frequency(features, mask, ctx);
  return combine(zt, ztf, mask);
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
