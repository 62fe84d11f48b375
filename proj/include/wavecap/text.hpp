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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wavecap/rng.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

using Words = std::vector<std::string>;

/// Lowercase, drop Unicode punctuation, split on whitespace. Throws DataError
/// (mentioning `context` when given) if nothing remains.
Words tokenize(std::string_view raw, std::string_view context = {});

std::string join(const Words& words, std::string_view sep = " ");

class Vocabulary {
 public:
  static constexpr std::int32_t kSos = 0;
  static constexpr std::int32_t kEos = 1;
  static constexpr std::int32_t kPad = 2;
  static constexpr std::int32_t kReserved = 3;

  Vocabulary();
  /// Reserved tokens followed by `words` in the given order.
  explicit Vocabulary(const Words& words);

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::int32_t index) const;
  std::int32_t index(const std::string& word) const;  // DataError if unknown
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  const Words& words() const { return words_; }

 private:
  Words words_;
  std::map<std::string, std::int32_t> index_;
};

/// Words sorted by descending frequency then lexicographically; words seen
/// fewer than min_count times are dropped.
Vocabulary build_vocab(const std::vector<Words>& captions, std::size_t min_count = 1);

/// <sos> words <eos>, right-padded with <pad> up to pad_to.
std::vector<std::int32_t> encode(const Words& words, const Vocabulary& vocab,
                                 std::optional<std::size_t> pad_to = std::nullopt);
/// Inverse of encode: drops framing and padding, stops at the first <eos>.
Words decode(const std::vector<std::int32_t>& tokens, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

using CsvRow = std::vector<std::string>;
std::vector<CsvRow> parse_csv(std::string_view text);
std::vector<CsvRow> read_csv(const std::filesystem::path& path);
std::string format_csv_row(const CsvRow& row);
void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);

struct CaptionEntry {
  std::string file_name;
  std::vector<std::string> captions;  // raw text
};

using CaptionCorpus = std::vector<CaptionEntry>;

/// Header `file_name,caption_1,...,caption_k`. Empty caption cells are skipped;
/// every entry needs at least one caption and names must be unique.
CaptionCorpus parse_caption_corpus(std::string_view text);
CaptionCorpus read_caption_corpus(const std::filesystem::path& path);

/// Tokenized captions of every entry, in corpus order.
std::vector<Words> tokenized_captions(const CaptionCorpus& corpus);

// ---------------------------------------------------------------------------
// Validation split

/// Indices of entries none of whose caption words occur in the captions of
/// fewer than `rarity_threshold` distinct entries.
std::vector<std::size_t> eligible_entries(const CaptionCorpus& corpus, std::size_t rarity_threshold);

struct CorpusSplit {
  CaptionCorpus train;
  CaptionCorpus validation;
};

/// Draws n eligible entries uniformly without replacement; the rest train.
/// Both parts keep corpus order.
CorpusSplit make_validation_split(const CaptionCorpus& corpus, std::size_t n,
                                  std::size_t rarity_threshold, Rng& rng);

void write_split_manifest(const std::filesystem::path& path, const CaptionCorpus& entries);
std::vector<std::string> read_split_manifest(const std::filesystem::path& path);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
