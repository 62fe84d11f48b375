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

#include "wavecap/rng.hpp"
#include "wavecap/tensor.hpp"

// Differentiable primitives. Every function records a backward rule when
// recording is enabled and an input requires grad. Reductions run in a fixed
// order so results are bit-reproducible for a given build.

namespace wavecap {
inline namespace WAVECAP_ABI {

// ---------------------------------------------------------------------------
// Elementwise and structural

/// a + b. b either matches a's shape or equals a trailing suffix of it
/// (broadcast over the leading axes, e.g. a bias or positional table).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// [..., M, K] x [..., K, N] with matching leading axes, or [..., M, K] x [K, N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Zero every element whose position is invalid. The tensor is viewed as
/// [outer, C, inner] around `channel_axis`; `valid` has outer*inner entries.
Tensor apply_mask(const Tensor& x, std::span<const std::uint8_t> valid, std::size_t channel_axis);

// ---------------------------------------------------------------------------
// Neural primitives

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

/// Cross-correlation along the last axis. input [C_in, T] or [B, C_in, T],
/// weight [C_out, C_in, k], bias [C_out] or undefined.
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv1dOptions& options = {});

/// Output length of conv1d, or 0 when the window does not fit.
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t dilation);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Grouped 2D cross-correlation. input [C_in, H, W] or [B, C_in, H, W],
/// weight [C_out, C_in/groups, kh, kw]. groups == C_in is depthwise.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dOptions& options = {});

/// Affine map over the last axis: [..., D_in] -> [..., D_out], weight [D_out, D_in].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct BatchNormOptions {
  bool training = true;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);
  std::size_t channel_axis = 0;
  /// Optional validity of each [outer, inner] position (see apply_mask).
  /// Invalid positions are excluded from the statistics and output zero.
  std::span<const std::uint8_t> valid = {};
};

/// Per-channel normalisation over all non-channel axes. In training mode the
/// batch statistics are used (and differentiated through) and the running
/// statistics are updated in place; in eval mode the running statistics are used.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, const BatchNormOptions& options);

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Real eps = Real(1e-5));

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, Real slope = Real(0.01));
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);

/// Inverted dropout: survivors scaled by 1/(1-p) in training, identity otherwise.
Tensor dropout(const Tensor& x, Real p, bool training, Rng& rng);

/// Max over non-overlapping windows of the last axis. Ties go to the lowest index.
Tensor max_pool_freq(const Tensor& input, std::size_t pool);

/// Row lookup: out[i] = weight[indices[i]]; result shape index_shape + [D].
Tensor embedding(const Tensor& weight, std::span<const std::int32_t> indices,
                 const Shape& index_shape);

/// Allowed (query, key) pairs for attention, per batch item. A batch of 1
/// broadcasts over all items.
struct AttentionMask {
  std::size_t batch = 0;
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> allowed;

  bool empty() const { return allowed.empty(); }
  bool at(std::size_t b, std::size_t q, std::size_t k) const {
    return allowed[((batch == 1 ? 0 : b) * queries + q) * keys + k] != 0;
  }

  /// Position q may attend to keys 0..q.
  static AttentionMask causal(std::size_t length);
  /// Item b may attend to its first lengths[b] keys.
  static AttentionMask key_lengths(const std::vector<std::size_t>& lengths, std::size_t queries,
                                   std::size_t keys);
};

/// Softmax over the last axis of scores [B, H, Lq, Lk]; disallowed entries
/// are treated as -inf. A row with no allowed key is a usage error.
Tensor masked_softmax(const Tensor& scores, const AttentionMask& mask);

/// Mean of -log softmax(logits)[target] over positions whose target is not
/// pad_index. logits [..., W]; one target per leading position.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::int32_t pad_index);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
