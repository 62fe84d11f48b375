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

#include <array>
#include <string>
#include <vector>

#include "wavecap/layers.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

/// Which encoder branches are active.
///   full      merge(temporal, time-frequency)
///   temp_only temporal branch alone
///   tf_only   time-frequency branch alone
///   avg       mean of both branches, no merge network
enum class EncoderMode { full, temp_only, tf_only, avg };

std::string to_string(EncoderMode mode);
/// Accepts full, temp, temp_only, tf, tf_only, avg.
EncoderMode parse_encoder_mode(const std::string& text);

struct EncoderConfig {
  std::size_t n_features = 64;  // mel bands per frame
  std::size_t wave_blocks = 4;
  std::size_t tf_blocks = 3;
  std::size_t channels = 128;
  std::size_t pcnn_kernel = 5;
  std::vector<std::size_t> pool_factors{4, 4, 4};
  double tf_dropout = 0.25;
  double leaky_slope = 0.01;
  bool tf_post_relu = false;  // optional ReLU after each time-frequency block
  EncoderMode mode = EncoderMode::full;

  bool uses_temporal() const { return mode != EncoderMode::tf_only; }
  bool uses_time_frequency() const { return mode != EncoderMode::temp_only; }
  bool uses_merge() const { return mode == EncoderMode::full; }
  std::size_t output_dim() const { return channels; }

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

/// Valid-frame flags for a padded batch, [B, T] row-major. Empty when every
/// item spans the full padded length.
struct FrameMask {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::vector<std::uint8_t> valid;

  bool empty() const { return valid.empty(); }
  static FrameMask from_lengths(const std::vector<std::size_t>& lengths, std::size_t time);
  /// Repeat each flag `factor` times (for axes after time).
  std::vector<std::uint8_t> expanded(std::size_t factor) const;
};

/// Gated residual 1D block. t1, t4, t7 are pointwise; t2, t3 have kernel 3
/// with dilation 1; t5, t6 have kernel 3 with dilation 2. Radius 3 frames.
struct WaveBlock {
  std::array<Conv1d, 7> conv;
  BatchNorm bn;
};

/// Depthwise (5x5) stage, leaky ReLU, BN, cross-channel (K x K) stage, BN,
/// frequency max-pool and dropout.
struct TfBlock {
  Conv2d scnn;
  BatchNorm bn_a;
  Conv2d pcnn;
  BatchNorm bn_b;
  std::size_t pool = 1;
};

struct MergeNet {
  Conv2d cnn;  // 2 -> 1 channels, 5x5, padding 2
  Linear fnn;  // shared over time
};

class Encoder {
 public:
  /// Registers parameters under `builder`'s prefix (normally "encoder").
  Encoder(const EncoderConfig& config, ParamBuilder builder);

  const EncoderConfig& config() const { return config_; }

  /// features [B, T, F] -> [B, T, F'] according to the configured mode.
  Tensor forward(const Tensor& features, const FrameMask& mask, const ForwardContext& ctx) const;

  /// One wave-block on [B, C, T].
  Tensor wave_block_forward(std::size_t index, const Tensor& input, const FrameMask& mask,
                            const ForwardContext& ctx) const;
  /// Temporal branch: [B, T, F] -> [B, T, C].
  Tensor temporal(const Tensor& features, const FrameMask& mask, const ForwardContext& ctx) const;

  /// One time-frequency block on [B, C, T, F_cur] -> [B, C, T, F_cur / pool].
  Tensor tf_block_forward(std::size_t index, const Tensor& input, const FrameMask& mask,
                          const ForwardContext& ctx) const;
  /// Time-frequency branch: [B, T, F] -> [B, T, C].
  Tensor time_frequency(const Tensor& features, const FrameMask& mask,
                        const ForwardContext& ctx) const;

  /// Merge network: two [B, T, C] tensors -> [B, T, F'].
  Tensor merge(const Tensor& z_temporal, const Tensor& z_tf, const FrameMask& mask) const;

  /// Branch combination of the configured mode: merge network (full) or
  /// mean (avg). Other modes have a single branch and reject the call.
  Tensor combine(const Tensor& z_temporal, const Tensor& z_tf, const FrameMask& mask) const;

  /// Depthwise stage of a time-frequency block alone (for isolation checks).
  Tensor tf_depthwise(std::size_t index, const Tensor& input) const;

 private:
  EncoderConfig config_;
  std::vector<WaveBlock> wave_;
  std::vector<TfBlock> tf_;
  MergeNet merge_;
};

}  // namespace WAVECAP_ABI
}  // namespace wavecap
