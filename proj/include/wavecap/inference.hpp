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
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wavecap/audio.hpp"
#include "wavecap/model.hpp"
#include "wavecap/text.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct DecodeConfig {
  std::size_t max_words = 22;
  std::size_t beam_size = 2;  // 1 selects greedy behaviour
  double length_norm_alpha = 1.0;

  void validate() const;
};

/// Next-token distribution given a prefix that starts with <sos>.
class NextTokenScorer {
 public:
  virtual ~NextTokenScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  /// Natural-log probabilities over the whole vocabulary.
  virtual std::vector<double> log_probs(const std::vector<std::int32_t>& prefix) = 0;
};

/// Scores with a trained model against one encoded clip (eval mode; the full
/// prefix is re-decoded at every step).
class ModelScorer : public NextTokenScorer {
 public:
  ModelScorer(const WaveTransformer& model, const FeatureMatrix& features);
  ModelScorer(const WaveTransformer& model, const Tensor& features);  // [1, T, F]
  std::size_t vocab_size() const override;
  std::vector<double> log_probs(const std::vector<std::int32_t>& prefix) override;

 private:
  const WaveTransformer& model_;
  Tensor memory_;
};

struct Hypothesis {
  std::vector<std::int32_t> tokens;  // starts with <sos>
  double log_prob = 0;
  bool finished = false;

  /// Generated tokens, counting <eos> when present.
  std::size_t generated() const { return tokens.size() - 1; }
};

/// Argmax decoding (ties to the lowest index). <sos> and <pad> are never
/// emitted. Stops at <eos> or after max_words words. Returns the token
/// sequence including <sos> (and <eos> when emitted).
Hypothesis greedy_decode(NextTokenScorer& scorer, const DecodeConfig& config);

/// Beam search: every live hypothesis is expanded by every token, the best
/// beam_size expansions by log-probability survive (ties to the
/// lexicographically smaller sequence), and those ending in <eos> are frozen.
/// The winner maximises log_prob / generated^alpha among finished hypotheses.
Hypothesis beam_search(NextTokenScorer& scorer, const DecodeConfig& config);

/// Dispatches on beam_size and strips framing tokens.
Words generate_caption(NextTokenScorer& scorer, const Vocabulary& vocab, const DecodeConfig& config);

using CaptionManifest = std::vector<std::pair<std::string, std::string>>;

/// Captions every item in sorted name order.
CaptionManifest caption_corpus(const std::vector<std::pair<std::string, FeatureMatrix>>& items,
                               const WaveTransformer& model, const Vocabulary& vocab,
                               const DecodeConfig& config);

/// Writes `file_name,caption_predicted`.
void write_caption_manifest(const std::filesystem::path& path, const CaptionManifest& manifest);
CaptionManifest read_caption_manifest(const std::filesystem::path& path);

/// [1, T, F] tensor view of a feature matrix.
Tensor feature_tensor(const FeatureMatrix& features);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
