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

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wavecap/model.hpp"
#include "wavecap/training.hpp"
#include "wavecap/ops.hpp"
#include "wavecap/rng.hpp"

namespace wavecap::testing {
// Precision-specific helpers must not collide when both builds link into one binary.
inline namespace WAVECAP_ABI {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<Real> v(numel(shape));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
  return Tensor::from(shape, std::move(v), requires_grad);
}

/// Values bounded away from zero (|x| in [margin, hi]) for kinked ops.
inline Tensor random_away_from_zero(const Shape& shape, Rng& rng, double margin, double hi,
                                    bool requires_grad = false) {
  std::vector<Real> v(numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(margin, hi);
    x = static_cast<Real>(rng.uniform() < 0.5 ? -m : m);
  }
  return Tensor::from(shape, std::move(v), requires_grad);
}

struct GradCheck {
  double worst_element = 0;  // largest |a - n| / max(|a|, |n|) above the floor
  double worst_tensor = 0;   // largest ||a - n|| / max(||a||, ||n||) above the floor
  double overall = 0;        // the same ratio over all inputs concatenated
  std::size_t failures = 0;  // elements outside tolerance
  std::string first_failure;
  std::size_t checked = 0;
};

/// Central differences of a scalar function against reverse-mode gradients.
/// An element passes when |a - n| <= rtol * max(|a|, |n|) or |a - n| <= atol.
inline GradCheck check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                 double h, double rtol, double atol,
                                 const std::vector<std::string>& names = {}) {
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  GradCheck r;
  NoGradGuard guard;
  double total_diff = 0, total_a = 0, total_n = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].data();
    double diff_sq = 0, a_sq = 0, n_sq = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real saved = data[i];
      data[i] = static_cast<Real>(saved + h);
      const double up = f().item();
      data[i] = static_cast<Real>(saved - h);
      const double down = f().item();
      data[i] = saved;
      const double n = (up - down) / (2 * h);
      const double a = analytic[k][i];
      const double d = std::abs(a - n);
      const double scale = std::max(std::abs(a), std::abs(n));
      diff_sq += d * d;
      a_sq += a * a;
      n_sq += n * n;
      ++r.checked;
      if (d > atol) r.worst_element = std::max(r.worst_element, scale > 0 ? d / scale : 0.0);
      if (d > atol && d > rtol * scale) {
        if (r.failures++ == 0)
          r.first_failure = (k < names.size() ? names[k] : "input " + std::to_string(k)) + "[" +
                            std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                            std::to_string(n);
      }
    }
    // Tensors whose gradient vanishes identically only carry difference noise.
    const double norm = std::sqrt(std::max(a_sq, n_sq));
    if (norm > atol * std::sqrt(static_cast<double>(data.size()))) r.worst_tensor = std::max(r.worst_tensor, std::sqrt(diff_sq) / norm);
    total_diff += diff_sq;
    total_a += a_sq;
    total_n += n_sq;
  }
  const double norm = std::sqrt(std::max(total_a, total_n));
  if (norm > 0) r.overall = std::sqrt(total_diff) / norm;
  return r;
}

/// Small model used by several suites.
inline ModelConfig tiny_model_config(std::size_t vocab_size, std::size_t width, std::size_t n_features,
                                     std::vector<std::size_t> pools, std::size_t wave_blocks = 2,
                                     std::size_t tf_blocks = 2) {
  ModelConfig c;
  c.encoder.n_features = n_features;
  c.encoder.channels = width;
  c.encoder.wave_blocks = wave_blocks;
  c.encoder.tf_blocks = tf_blocks;
  c.encoder.pool_factors = std::move(pools);
  c.encoder.tf_dropout = 0;
  c.decoder.vocab_size = vocab_size;
  c.decoder.d_model = width;
  c.decoder.blocks = 2;
  c.decoder.heads = 2;
  c.decoder.dropout = 0;
  c.decoder.max_len = 32;
  return c;
}

/// Gradient of a cross-entropy loss through the whole model (d=8, two wave
/// blocks, two time-frequency blocks, 12 frames, 11 words) against central
/// differences, for every parameter element.
inline GradCheck full_model_gradient_check(std::uint64_t seed, double h, double rtol, double atol) {
  constexpr std::size_t kVocab = 11, kWidth = 8, kFrames = 12, kFeatures = 8;
  WaveTransformer model(tiny_model_config(kVocab, kWidth, kFeatures, {2, 4}), seed);
  Rng rng = Rng::derive(seed, 99);
  const std::size_t batch = 2, len = 4;
  Tensor features = random_tensor({batch, kFrames, kFeatures}, rng, -2, 2);
  const std::vector<std::size_t> lengths{kFrames, kFrames - 3};
  std::vector<std::int32_t> inputs(batch * len), targets(batch * len);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i] = static_cast<std::int32_t>(3 + rng.below(kVocab - 3));
    targets[i] = static_cast<std::int32_t>(rng.below(kVocab));
  }
  targets.back() = Vocabulary::kPad;
  ForwardContext ctx;
  ctx.training = true;
  auto f = [&] { return cross_entropy(model.forward(features, lengths, inputs, ctx), targets, Vocabulary::kPad); };
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& [name, t] : model.parameters()) {
    params.push_back(t);
    names.push_back(name);
  }
  return check_gradients(f, params, h, rtol, atol, names);
}

/// Small corpus of distinct random feature clips with distinct captions.
struct SyntheticSet {
  CaptionCorpus corpus;
  std::map<std::string, FeatureMatrix> features;
  Vocabulary vocab;
  Dataset data;
};

inline SyntheticSet synthetic_set(std::size_t clips, std::size_t bands, std::uint64_t seed,
                                  std::size_t min_frames = 10, std::size_t max_frames = 14,
                                  std::size_t captions_per_clip = 1) {
  static const char* const kWords[] = {"dog", "barks", "rain", "falls", "car", "passes",
                                       "bird", "sings", "wind", "blows", "loud", "softly"};
  Rng rng(seed);
  SyntheticSet s;
  for (std::size_t i = 0; i < clips; ++i) {
    FeatureMatrix f;
    f.frames = min_frames + rng.below(max_frames - min_frames + 1);
    f.bands = bands;
    f.sample_rate = 16000;
    f.hop = 160;
    f.window_length = 400;
    f.values.resize(f.frames * bands);
    for (auto& v : f.values) v = static_cast<float>(rng.uniform(-4, 0));
    const std::string stem = "clip" + std::to_string(i);
    s.features[stem] = f;
    CaptionEntry e;
    e.file_name = stem + ".wav";
    for (std::size_t c = 0; c < captions_per_clip; ++c) {
      std::string text;
      const std::size_t len = 3 + rng.below(3);
      for (std::size_t w = 0; w < len; ++w) text += std::string(w ? " " : "") + kWords[rng.below(12)];
      e.captions.push_back(text);
    }
    s.corpus.push_back(e);
  }
  s.vocab = build_vocab(tokenized_captions(s.corpus));
  s.data = make_dataset(s.corpus, s.features, s.vocab);
  return s;
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap::testing
