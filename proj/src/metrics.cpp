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

#include "wavecap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace wavecap {
inline namespace WAVECAP_ABI {

namespace {

using NgramCounts = std::map<Words, std::size_t>;

NgramCounts ngrams(const Words& w, std::size_t n) {
  NgramCounts out;
  if (w.size() < n) return out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++out[Words(w.begin() + i, w.begin() + i + n)];
  return out;
}

void require_references(const EvalCorpus& corpus) {
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].references.empty())
      throw DataError("metrics: item " + std::to_string(i) + " has no reference");
}

}  // namespace

double bleu(const EvalCorpus& corpus, std::size_t n) {
  if (n == 0) throw UsageError("bleu: order must be >= 1");
  require_references(corpus);
  std::vector<double> matched(n, 0.0), total(n, 0.0);
  double cand_len = 0, ref_len = 0;
  for (const auto& item : corpus) {
    const double c = static_cast<double>(item.candidate.size());
    cand_len += c;
    double best = -1, best_diff = 0;
    for (const auto& r : item.references) {
      const double len = static_cast<double>(r.size());
      const double diff = std::abs(len - c);
      if (best < 0 || diff < best_diff || (diff == best_diff && len < best)) {
        best = len;
        best_diff = diff;
      }
    }
    ref_len += best;
    for (std::size_t k = 1; k <= n; ++k) {
      const auto cand = ngrams(item.candidate, k);
      std::map<Words, std::size_t> max_ref;
      for (const auto& r : item.references)
        for (const auto& [g, cnt] : ngrams(r, k)) max_ref[g] = std::max(max_ref[g], cnt);
      for (const auto& [g, cnt] : cand) {
        total[k - 1] += static_cast<double>(cnt);
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[k - 1] += static_cast<double>(std::min(cnt, it->second));
      }
    }
  }
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (total[k] == 0 || matched[k] == 0) return 0.0;
    log_sum += std::log(matched[k] / total[k]) / static_cast<double>(n);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum);
}

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const EvalCorpus& corpus, double beta) {
  require_references(corpus);
  if (corpus.empty()) return 0.0;
  const double b2 = beta * beta;
  double sum = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    for (const auto& r : item.references) {
      const double l = static_cast<double>(lcs_length(item.candidate, r));
      if (l == 0) continue;
      const double p = l / static_cast<double>(item.candidate.size());
      const double rec = l / static_cast<double>(r.size());
      best = std::max(best, (1 + b2) * p * rec / (rec + b2 * p));
    }
    sum += best;
  }
  return sum / static_cast<double>(corpus.size());
}

namespace {

constexpr std::size_t kCiderOrders = 4;

struct TfIdf {
  std::array<std::map<Words, double>, kCiderOrders> vec;
  std::array<double, kCiderOrders> norm{};
  double length = 0;
};

TfIdf tf_idf(const Words& w, const std::map<Words, double>& doc_freq, double log_n) {
  TfIdf out;
  out.length = static_cast<double>(w.size());
  for (std::size_t k = 0; k < kCiderOrders; ++k) {
    for (const auto& [g, cnt] : ngrams(w, k + 1)) {
      auto it = doc_freq.find(g);
      const double df = std::log(std::max(1.0, it == doc_freq.end() ? 0.0 : it->second));
      const double v = static_cast<double>(cnt) * (log_n - df);
      out.vec[k][g] = v;
      out.norm[k] += v * v;
    }
    out.norm[k] = std::sqrt(out.norm[k]);
  }
  return out;
}

}  // namespace

std::vector<double> cider_d_items(const EvalCorpus& corpus, double sigma) {
  require_references(corpus);
  std::map<Words, double> doc_freq;
  for (const auto& item : corpus) {
    std::set<Words> seen;
    for (const auto& r : item.references)
      for (std::size_t k = 1; k <= kCiderOrders; ++k)
        for (const auto& [g, _] : ngrams(r, k)) seen.insert(g);
    for (const auto& g : seen) doc_freq[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(corpus.size()));
  std::vector<double> scores;
  for (const auto& item : corpus) {
    const TfIdf cand = tf_idf(item.candidate, doc_freq, log_n);
    std::array<double, kCiderOrders> sum{};
    for (const auto& r : item.references) {
      const TfIdf ref = tf_idf(r, doc_freq, log_n);
      const double delta = cand.length - ref.length;
      const double penalty = std::exp(-(delta * delta) / (2 * sigma * sigma));
      for (std::size_t k = 0; k < kCiderOrders; ++k) {
        double dot = 0.0;
        for (const auto& [g, v] : cand.vec[k]) {
          auto it = ref.vec[k].find(g);
          if (it != ref.vec[k].end()) dot += std::min(v, it->second) * it->second;
        }
        if (cand.norm[k] != 0 && ref.norm[k] != 0) dot /= cand.norm[k] * ref.norm[k];
        sum[k] += dot * penalty;
      }
    }
    double mean = 0.0;
    for (double s : sum) mean += s;
    mean /= static_cast<double>(kCiderOrders);
    scores.push_back(10.0 * mean / static_cast<double>(item.references.size()));
  }
  return scores;
}

double cider_d(const EvalCorpus& corpus, double sigma) {
  if (corpus.empty()) return 0.0;
  const auto items = cider_d_items(corpus, sigma);
  double sum = 0.0;
  for (double s : items) sum += s;
  return sum / static_cast<double>(items.size());
}

std::vector<std::pair<std::string, double>> ScoreReport::entries() const {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < 4; ++i) out.emplace_back("bleu_" + std::to_string(i + 1), bleu[i]);
  out.emplace_back("rouge_l", rouge_l);
  out.emplace_back("cider", cider);
  if (spice) out.emplace_back("spice", *spice);
  if (spider) out.emplace_back("spider", *spider);
  return out;
}

ScoreReport with_spice(ScoreReport report, double spice) {
  report.spice = spice;
  report.spider = (report.cider + spice) / 2.0;
  return report;
}

ScoreReport assemble_report(const EvalCorpus& corpus, std::optional<double> spice) {
  ScoreReport r;
  for (std::size_t n = 1; n <= 4; ++n) r.bleu[n - 1] = bleu(corpus, n);
  r.rouge_l = rouge_l(corpus);
  r.cider = cider_d(corpus);
  if (spice) r = with_spice(r, *spice);
  return r;
}

std::string format_report(const ScoreReport& report) {
  std::string out;
  char buf[96];
  for (const auto& [name, value] : report.entries()) {
    std::snprintf(buf, sizeof buf, "%s=%.4f\n%s_x100=%.4f\n", name.c_str(), value, name.c_str(),
                  value * 100.0);
    out += buf;
  }
  return out;
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
