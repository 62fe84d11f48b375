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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wavecap/text.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct EvalPair {
  Words candidate;
  std::vector<Words> references;
};

using EvalCorpus = std::vector<EvalPair>;

/// Corpus BLEU with uniform weights over orders 1..n, clipped counts, closest
/// reference length and the standard brevity penalty. No smoothing.
double bleu(const EvalCorpus& corpus, std::size_t n);

/// Length of the longest common subsequence.
std::size_t lcs_length(const Words& a, const Words& b);

/// LCS F-measure (beta 1.2), best reference per item, averaged over items.
double rouge_l(const EvalCorpus& corpus, double beta = 1.2);

/// CIDEr-D: tf-idf n-gram cosine (orders 1..4) with count clipping and a
/// Gaussian length penalty (sigma 6), times 10, averaged over items.
/// idf(g) = log(N / max(1, df(g))) over the N reference sets.
double cider_d(const EvalCorpus& corpus, double sigma = 6.0);
/// Per-item CIDEr-D scores.
std::vector<double> cider_d_items(const EvalCorpus& corpus, double sigma = 6.0);

struct ScoreReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0;
  double cider = 0;
  std::optional<double> spice;
  std::optional<double> spider;

  /// name -> value on the natural scale, in report order.
  std::vector<std::pair<std::string, double>> entries() const;
};

/// All internal metrics; SPIDEr = (CIDEr + SPICE) / 2 only when SPICE is given.
ScoreReport assemble_report(const EvalCorpus& corpus, std::optional<double> spice = std::nullopt);

/// Completes a report from externally computed values.
ScoreReport with_spice(ScoreReport report, double spice);

/// `metric=value` lines with four decimals, each followed by a
/// `metric_x100=value` line on the percentage scale.
std::string format_report(const ScoreReport& report);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
