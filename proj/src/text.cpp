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

#include "wavecap/text.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace wavecap {
inline namespace WAVECAP_ABI {

Words tokenize(std::string_view raw, std::string_view context) {
  Words out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  const auto* s = reinterpret_cast<const std::uint8_t*>(raw.data());
  const auto length = static_cast<std::int32_t>(raw.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) continue;  // malformed byte sequence
    if (u_isUWhiteSpace(c)) {
      flush();
      continue;
    }
    if (u_ispunct(c)) continue;
    c = u_tolower(c);
    char buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    UBool error = false;
    U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), n, U8_MAX_LENGTH, c, error);
    if (!error) current.append(buf, static_cast<std::size_t>(n));
  }
  flush();
  if (out.empty()) {
    std::string msg = "caption is empty after cleaning";
    if (!context.empty()) msg += " (" + std::string(context) + ")";
    throw DataError(msg);
  }
  return out;
}

std::string join(const Words& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(Words{}) {}

Vocabulary::Vocabulary(const Words& words) {
  words_ = {"<sos>", "<eos>", "<pad>"};
  words_.insert(words_.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<std::int32_t>(i)).second)
      throw DataError("vocabulary: duplicate word '" + words_[i] + "'");
  }
}

const std::string& Vocabulary::word(std::int32_t index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= words_.size())
    throw UsageError("vocabulary: index " + std::to_string(index) + " out of range");
  return words_[static_cast<std::size_t>(index)];
}

std::int32_t Vocabulary::index(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw DataError("out-of-vocabulary word '" + word + "'");
  return it->second;
}

Vocabulary build_vocab(const std::vector<Words>& captions, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions)
    for (const auto& w : c) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, n] : counts)
    if (n >= min_count) ranked.emplace_back(w, n);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Words words;
  for (auto& [w, _] : ranked) words.push_back(w);
  return Vocabulary(words);
}

std::vector<std::int32_t> encode(const Words& words, const Vocabulary& vocab,
                                 std::optional<std::size_t> pad_to) {
  std::vector<std::int32_t> out;
  out.reserve(words.size() + 2);
  out.push_back(Vocabulary::kSos);
  for (const auto& w : words) out.push_back(vocab.index(w));
  out.push_back(Vocabulary::kEos);
  if (pad_to) {
    if (*pad_to < out.size())
      throw UsageError("encode: caption of " + std::to_string(out.size()) +
                       " tokens does not fit pad_to " + std::to_string(*pad_to));
    out.resize(*pad_to, Vocabulary::kPad);
  }
  return out;
}

Words decode(const std::vector<std::int32_t>& tokens, const Vocabulary& vocab) {
  Words out;
  for (auto t : tokens) {
    if (t == Vocabulary::kEos) break;
    if (t == Vocabulary::kSos || t == Vocabulary::kPad) continue;
    out.push_back(vocab.word(t));
  }
  return out;
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started) throw FormatError("csv: stray quote on line " + std::to_string(line));
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_row();
      ++line;
    } else if (c == '\n') {
      end_row();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field starting before line " + std::to_string(line));
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  try {
    return parse_csv(slurp(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_csv_row(const CsvRow& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    const auto& f = row[i];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out += f;
      continue;
    }
    out += '"';
    for (char c : f) {
      if (c == '"') out += '"';
      out += c;
    }
    out += '"';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) out << format_csv_row(r) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

CaptionCorpus parse_caption_corpus(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw DataError("caption csv: missing header");
  const auto& header = rows[0];
  if (header.size() < 2 || header[0] != "file_name")
    throw FormatError("caption csv: header must be file_name,caption_1,...");
  for (std::size_t c = 1; c < header.size(); ++c)
    if (header[c] != "caption_" + std::to_string(c))
      throw DataError("caption csv: unexpected column '" + header[c] + "'");
  CaptionCorpus corpus;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw DataError("caption csv: row " + std::to_string(r + 1) + " has " +
                      std::to_string(row.size()) + " fields, expected " + std::to_string(header.size()));
    CaptionEntry e;
    e.file_name = row[0];
    if (e.file_name.empty()) throw DataError("caption csv: empty file_name on row " + std::to_string(r + 1));
    if (!seen.insert(e.file_name).second) throw DataError("caption csv: duplicate file_name '" + e.file_name + "'");
    for (std::size_t c = 1; c < row.size(); ++c)
      if (!row[c].empty()) e.captions.push_back(row[c]);
    if (e.captions.empty()) throw DataError("caption csv: entry '" + e.file_name + "' has no caption");
    corpus.push_back(std::move(e));
  }
  return corpus;
}

CaptionCorpus read_caption_corpus(const std::filesystem::path& path) {
  try {
    return parse_caption_corpus(slurp(path));
  } catch (const FormatError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<Words> tokenized_captions(const CaptionCorpus& corpus) {
  std::vector<Words> out;
  for (const auto& e : corpus)
    for (std::size_t i = 0; i < e.captions.size(); ++i)
      out.push_back(tokenize(e.captions[i], e.file_name + " caption " + std::to_string(i + 1)));
  return out;
}

std::vector<std::size_t> eligible_entries(const CaptionCorpus& corpus, std::size_t rarity_threshold) {
  std::vector<std::set<std::string>> entry_words(corpus.size());
  std::map<std::string, std::size_t> doc_freq;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t c = 0; c < corpus[i].captions.size(); ++c)
      for (auto& w : tokenize(corpus[i].captions[c], corpus[i].file_name)) entry_words[i].insert(w);
    for (const auto& w : entry_words[i]) ++doc_freq[w];
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const bool ok = std::all_of(entry_words[i].begin(), entry_words[i].end(),
                                [&](const std::string& w) { return doc_freq[w] >= rarity_threshold; });
    if (ok) out.push_back(i);
  }
  return out;
}

CorpusSplit make_validation_split(const CaptionCorpus& corpus, std::size_t n,
                                  std::size_t rarity_threshold, Rng& rng) {
  const auto eligible = eligible_entries(corpus, rarity_threshold);
  if (eligible.size() < n)
    throw DataError("validation split: only " + std::to_string(eligible.size()) +
                    " eligible entries, " + std::to_string(n) + " requested");
  const auto order = rng.permutation(eligible.size());
  std::vector<bool> chosen(corpus.size(), false);
  for (std::size_t i = 0; i < n; ++i) chosen[eligible[order[i]]] = true;
  CorpusSplit split;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (chosen[i] ? split.validation : split.train).push_back(corpus[i]);
  return split;
}

void write_split_manifest(const std::filesystem::path& path, const CaptionCorpus& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : entries) out << e.file_name << '\n';
}

std::vector<std::string> read_split_manifest(const std::filesystem::path& path) {
  std::istringstream in(slurp(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
