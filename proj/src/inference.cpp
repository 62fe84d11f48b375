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

#include "wavecap/inference.hpp"

#include <algorithm>
#include <cmath>

namespace wavecap {
inline namespace WAVECAP_ABI {

void DecodeConfig::validate() const {
  if (max_words == 0) throw ConfigError("decode: max_words must be >= 1");
  if (beam_size == 0) throw ConfigError("decode: beam_size must be >= 1");
  if (!(length_norm_alpha >= 0)) throw ConfigError("decode: length_norm_alpha must be >= 0");
}

Tensor feature_tensor(const FeatureMatrix& features) {
  std::vector<Real> values(features.values.begin(), features.values.end());
  return Tensor::from({1, features.frames, features.bands}, std::move(values));
}

ModelScorer::ModelScorer(const WaveTransformer& model, const FeatureMatrix& features)
    : ModelScorer(model, feature_tensor(features)) {}

ModelScorer::ModelScorer(const WaveTransformer& model, const Tensor& features) : model_(model) {
  NoGradGuard guard;
  memory_ = model_.encode(features, {}, ForwardContext{});
}

std::size_t ModelScorer::vocab_size() const { return model_.config().decoder.vocab_size; }

std::vector<double> ModelScorer::log_probs(const std::vector<std::int32_t>& prefix) {
  NoGradGuard guard;
  Tensor logits = model_.decode(prefix, 1, memory_, {}, ForwardContext{});
  const std::size_t w = logits.dim(2);
  const auto all = logits.data();
  const Real* row = all.data() + (prefix.size() - 1) * w;
  double mx = row[0];
  for (std::size_t i = 1; i < w; ++i) mx = std::max(mx, static_cast<double>(row[i]));
  double z = 0.0;
  for (std::size_t i = 0; i < w; ++i) z += std::exp(row[i] - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(w);
  for (std::size_t i = 0; i < w; ++i) out[i] = row[i] - lz;
  return out;
}

namespace {

bool emittable(std::int32_t token) {
  return token != Vocabulary::kSos && token != Vocabulary::kPad;
}

std::vector<double> checked_log_probs(NextTokenScorer& scorer, const std::vector<std::int32_t>& prefix) {
  auto lp = scorer.log_probs(prefix);
  if (lp.size() != scorer.vocab_size())
    throw DimensionError("scorer returned " + std::to_string(lp.size()) + " scores for a vocabulary of " +
                         std::to_string(scorer.vocab_size()));
  return lp;
}

std::size_t word_count(const Hypothesis& h) {
  return h.generated() - (h.finished && h.tokens.back() == Vocabulary::kEos ? 1 : 0);
}

// Higher log-prob first, then the lexicographically smaller sequence.
bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis greedy_decode(NextTokenScorer& scorer, const DecodeConfig& config) {
  config.validate();
  Hypothesis h;
  h.tokens = {Vocabulary::kSos};
  while (true) {
    const auto lp = checked_log_probs(scorer, h.tokens);
    std::int32_t best = -1;
    for (std::size_t t = 0; t < lp.size(); ++t) {
      const auto tok = static_cast<std::int32_t>(t);
      if (emittable(tok) && (best < 0 || lp[t] > lp[static_cast<std::size_t>(best)])) best = tok;
    }
    if (best < 0) throw UsageError("greedy_decode: vocabulary has no emittable token");
    h.tokens.push_back(best);
    h.log_prob += lp[static_cast<std::size_t>(best)];
    if (best == Vocabulary::kEos) {
      h.finished = true;
      return h;
    }
    if (word_count(h) >= config.max_words) {
      h.finished = true;
      return h;
    }
  }
}

Hypothesis beam_search(NextTokenScorer& scorer, const DecodeConfig& config) {
  config.validate();
  std::vector<Hypothesis> live(1), finished;
  live[0].tokens = {Vocabulary::kSos};
  while (!live.empty()) {
    std::vector<Hypothesis> expansions;
    for (const auto& h : live) {
      const auto lp = checked_log_probs(scorer, h.tokens);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        const auto tok = static_cast<std::int32_t>(t);
        if (!emittable(tok)) continue;
        Hypothesis e = h;
        e.tokens.push_back(tok);
        e.log_prob += lp[t];
        expansions.push_back(std::move(e));
      }
    }
    const std::size_t keep = std::min(config.beam_size, expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep),
                      expansions.end(), ranks_before);
    expansions.resize(keep);
    live.clear();
    for (auto& e : expansions) {
      if (e.tokens.back() == Vocabulary::kEos) {
        e.finished = true;
        finished.push_back(std::move(e));
      } else if (word_count(e) >= config.max_words) {
        e.finished = true;
        finished.push_back(std::move(e));
      } else {
        live.push_back(std::move(e));
      }
    }
  }
  if (finished.empty()) throw UsageError("beam_search: vocabulary has no emittable token");
  auto score = [&](const Hypothesis& h) {
    return h.log_prob / std::pow(static_cast<double>(h.generated()), config.length_norm_alpha);
  };
  const Hypothesis* best = &finished[0];
  for (const auto& h : finished) {
    const double s = score(h), sb = score(*best);
    if (s > sb || (s == sb && h.tokens < best->tokens)) best = &h;
  }
  return *best;
}

Words generate_caption(NextTokenScorer& scorer, const Vocabulary& vocab, const DecodeConfig& config) {
  const Hypothesis h = config.beam_size == 1 ? greedy_decode(scorer, config) : beam_search(scorer, config);
  return decode(h.tokens, vocab);
}

CaptionManifest caption_corpus(const std::vector<std::pair<std::string, FeatureMatrix>>& items,
                               const WaveTransformer& model, const Vocabulary& vocab,
                               const DecodeConfig& config) {
  config.validate();
  if (vocab.size() != model.config().decoder.vocab_size)
    throw UsageError("caption: vocabulary size " + std::to_string(vocab.size()) +
                     " does not match the model (" + std::to_string(model.config().decoder.vocab_size) + ")");
  if (config.max_words + 1 > model.config().decoder.max_len)
    throw ConfigError("caption: max_words exceeds the decoder's positional horizon");
  std::vector<const std::pair<std::string, FeatureMatrix>*> order;
  for (const auto& it : items) order.push_back(&it);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->first < b->first; });
  CaptionManifest out;
  for (const auto* it : order) {
    if (it->second.bands != model.config().encoder.n_features)
      throw DimensionError("caption: " + it->first + " has " + std::to_string(it->second.bands) +
                           " bands, model expects " + std::to_string(model.config().encoder.n_features));
    ModelScorer scorer(model, it->second);
    out.emplace_back(it->first, join(generate_caption(scorer, vocab, config)));
  }
  return out;
}

void write_caption_manifest(const std::filesystem::path& path, const CaptionManifest& manifest) {
  std::vector<CsvRow> rows{{"file_name", "caption_predicted"}};
  for (const auto& [name, caption] : manifest) rows.push_back({name, caption});
  write_csv(path, rows);
}

CaptionManifest read_caption_manifest(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "file_name" || rows[0][1] != "caption_predicted")
    throw FormatError(path.string() + ": header must be file_name,caption_predicted");
  CaptionManifest out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2)
      throw DataError(path.string() + ": row " + std::to_string(r + 1) + " must have 2 fields");
    out.emplace_back(rows[r][0], rows[r][1]);
  }
  return out;
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
