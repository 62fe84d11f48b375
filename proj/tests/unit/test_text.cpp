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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "wavecap/text.hpp"

using namespace wavecap;
namespace fs = std::filesystem;

namespace {

CaptionCorpus twelve_entry_corpus() {
  CaptionCorpus c;
  for (int i = 0; i < 12; ++i) {
    CaptionEntry e;
    e.file_name = "clip" + std::to_string(i) + ".wav";
    e.captions = {"a loud sound plays", "the sound of rain"};
    if (i < 3) e.captions.push_back("a rare" + std::to_string(i) + " sound");
    c.push_back(e);
  }
  return c;
}

std::vector<std::size_t> brute_force_eligible(const CaptionCorpus& corpus, std::size_t threshold) {
  std::vector<std::set<std::string>> words(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (const auto& cap : corpus[i].captions)
      for (const auto& w : tokenize(cap)) words[i].insert(w);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    bool ok = true;
    for (const auto& w : words[i]) {
      std::size_t df = 0;
      for (const auto& other : words) df += other.count(w);
      ok = ok && df >= threshold;
    }
    if (ok) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_CASE("tokenize examples") {
  CHECK(tokenize("A Dog barks!") == Words{"a", "dog", "barks"});
  CHECK(tokenize("it's raining") == Words{"its", "raining"});
  CHECK(tokenize("  Many\tspaces\n here ") == Words{"many", "spaces", "here"});
  CHECK(tokenize("Ça «sonne» — fort") == Words{"ça", "sonne", "fort"});
  CHECK_THROWS_AS(tokenize("?!", "clip7.wav"), DataError);
  try {
    tokenize("...", "clip7.wav");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("clip7.wav") != std::string::npos);
  }
}

TEST_CASE("tokenize is idempotent") {
  for (const char* s : {"A bird, singing; loudly.", "Cars -- pass by", "Rain's falling (hard)", "ÉCOLE d'été"}) {
    const Words once = tokenize(s);
    CHECK(tokenize(join(once)) == once);
  }
}

TEST_CASE("vocabulary construction") {
  Vocabulary v = build_vocab({tokenize("a a b")});
  CHECK(v.size() == 5);
  CHECK(v.words() == Words{"<sos>", "<eos>", "<pad>", "a", "b"});
  CHECK(v.index("<sos>") == Vocabulary::kSos);
  CHECK(v.index("<eos>") == Vocabulary::kEos);
  CHECK(v.index("<pad>") == Vocabulary::kPad);

  std::vector<Words> caps{tokenize("the dog barks"), tokenize("the cat meows"), tokenize("a dog runs")};
  Vocabulary x = build_vocab(caps), y = build_vocab(caps);
  CHECK(x.words() == y.words());
  std::set<std::string> unique;
  for (const auto& c : caps) unique.insert(c.begin(), c.end());
  CHECK(x.size() == unique.size() + 3);
  CHECK(x.word(3) == "dog");  // frequency 2, ties broken lexicographically
  CHECK(x.word(4) == "the");
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(x.size()); ++i) CHECK(x.index(x.word(i)) == i);
  CHECK_THROWS_AS(x.index("zebra"), DataError);
  CHECK(build_vocab(caps, 2).size() == 5);
}

TEST_CASE("encode and decode") {
  Vocabulary v = build_vocab({tokenize("a dog")});
  const auto a = v.index("a"), dog = v.index("dog");
  CHECK(encode(tokenize("a dog"), v) == std::vector<std::int32_t>{0, a, dog, 1});
  CHECK(encode(tokenize("a dog"), v, 6) == std::vector<std::int32_t>{0, a, dog, 1, 2, 2});
  CHECK(decode(encode(tokenize("A dog!"), v, 9), v) == tokenize("A dog!"));
  CHECK_THROWS_AS(encode(tokenize("a cat"), v), DataError);
}

TEST_CASE("csv parsing") {
  auto rows = parse_csv("file_name,caption_1\r\nx.wav,\"a \"\"quoted\"\", comma\"\ny.wav,\"multi\nline\"\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][1] == "a \"quoted\", comma");
  CHECK(rows[2][1] == "multi\nline");
  CHECK(parse_csv(format_csv_row({"a,b", "c\"d", "e"}))[0] == CsvRow{"a,b", "c\"d", "e"});
  CHECK_THROWS_AS(parse_csv("a,\"unterminated\n"), FormatError);
}

TEST_CASE("caption corpus") {
  auto c = parse_caption_corpus("file_name,caption_1,caption_2\nb.wav,Birds sing,\na.wav,A car,Engine hums\n");
  REQUIRE(c.size() == 2);
  CHECK(c[0].captions.size() == 1);
  CHECK(c[1].captions.size() == 2);
  CHECK_THROWS_AS(parse_caption_corpus("file_name,caption_1\na.wav,x\na.wav,y\n"), DataError);
  CHECK_THROWS_AS(parse_caption_corpus("file_name,caption_1\na.wav,\n"), DataError);
  CHECK_THROWS_AS(parse_caption_corpus("name,text\na.wav,x\n"), FormatError);
}

TEST_CASE("rarity eligibility on the twelve entry corpus") {
  const auto corpus = twelve_entry_corpus();
  const auto eligible = eligible_entries(corpus, 10);
  CHECK(eligible.size() == 9);
  CHECK(eligible == brute_force_eligible(corpus, 10));
  for (auto i : eligible) CHECK(i >= 3);
}

TEST_CASE("validation split") {
  CaptionCorpus corpus;
  const char* words[] = {"dog", "cat", "rain", "car", "bird", "wind"};
  for (int i = 0; i < 60; ++i) {
    CaptionEntry e;
    e.file_name = "f" + std::to_string(i) + ".wav";
    e.captions = {std::string("a ") + words[i % 6] + " sound", std::string("the ") + words[(i + 1) % 6]};
    if (i % 7 == 0) e.captions.push_back("unique" + std::to_string(i));
    corpus.push_back(e);
  }
  Rng r1(5), r2(5);
  auto s = make_validation_split(corpus, 20, 10, r1);
  auto t = make_validation_split(corpus, 20, 10, r2);
  CHECK(s.validation.size() == 20);
  CHECK(s.train.size() == 40);
  std::set<std::string> seen;
  for (const auto& e : s.train) seen.insert(e.file_name);
  for (const auto& e : s.validation) {
    CHECK(seen.insert(e.file_name).second);
    for (const auto& cap : e.captions)
      for (const auto& w : tokenize(cap)) CHECK(w.rfind("unique", 0) != 0);
  }
  CHECK(seen.size() == corpus.size());
  for (std::size_t i = 0; i < 20; ++i) CHECK(s.validation[i].file_name == t.validation[i].file_name);
  const auto eligible = brute_force_eligible(corpus, 10);
  Rng r3(1);
  CHECK_THROWS_AS(make_validation_split(corpus, eligible.size() + 1, 10, r3), DataError);

  const fs::path p = fs::temp_directory_path() / "wavecap_split_manifest.txt";
  write_split_manifest(p, s.validation);
  auto names = read_split_manifest(p);
  REQUIRE(names.size() == 20);
  CHECK(names[0] == s.validation[0].file_name);
  fs::remove(p);
}
