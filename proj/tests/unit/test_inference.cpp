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

#include <cmath>
#include <filesystem>

#include "decoding.hpp"
#include "support.hpp"
#include "wavecap/inference.hpp"

using namespace wavecap;
using namespace wavecap::testing;
namespace fs = std::filesystem;

namespace {

DecodeConfig decode_config(std::size_t beam, double alpha = 1.0, std::size_t max_words = 22) {
  DecodeConfig c;
  c.beam_size = beam;
  c.length_norm_alpha = alpha;
  c.max_words = max_words;
  return c;
}

Vocabulary word_vocab(std::size_t words) {
  Words w;
  for (std::size_t i = 0; i < words; ++i) w.push_back("w" + std::to_string(i));
  return Vocabulary(w);
}

}  // namespace

TEST_CASE("decode config validation") {
  CHECK_NOTHROW(DecodeConfig{}.validate());
  CHECK(DecodeConfig{}.max_words == 22);
  CHECK(DecodeConfig{}.beam_size == 2);
  CHECK(DecodeConfig{}.length_norm_alpha == 1.0);
  CHECK_THROWS_AS(decode_config(0).validate(), ConfigError);
  CHECK_THROWS_AS(decode_config(2, 1.0, 0).validate(), ConfigError);
  CHECK_THROWS_AS(decode_config(2, -0.5).validate(), ConfigError);
}

TEST_CASE("immediate eos yields an empty caption") {
  TableScorer s(6, {0, 0.9, 0, 0.05, 0.05, 0});
  const auto vocab = word_vocab(3);
  for (std::size_t beam : {1, 2, 5}) {
    const auto words = generate_caption(s, vocab, decode_config(beam));
    CHECK(words.empty());
  }
  const auto g = greedy_decode(s, decode_config(1));
  CHECK(g.tokens == std::vector<std::int32_t>{kSos, kEos});
  CHECK(g.finished);
  CHECK(g.log_prob == doctest::Approx(std::log(0.9)));
}

TEST_CASE("zero eos probability caps at max_words") {
  TableScorer s(6, {0.2, 0, 0.3, 0.3, 0.1, 0.1});
  const auto vocab = word_vocab(3);
  for (std::size_t beam : {1, 2, 3}) {
    const auto words = generate_caption(s, vocab, decode_config(beam));
    CHECK(words.size() == 22);
    for (const auto& w : words) CHECK(w != "<sos>");
  }
  const auto g = greedy_decode(s, decode_config(1, 1.0, 5));
  CHECK(g.tokens.size() == 6);
  CHECK(g.tokens.back() != kEos);
  CHECK(g.finished);
}

TEST_CASE("sos and pad are never emitted") {
  // <sos> and <pad> dominate, <eos> appears after two steps
  TableScorer s(5, {0.4, 0.05, 0.4, 0.1, 0.05});
  s.set({kSos, 3, 3}, {0.4, 0.15, 0.4, 0.03, 0.02});
  for (std::size_t beam : {1, 2, 4}) {
    const auto h = beam == 1 ? greedy_decode(s, decode_config(1)) : beam_search(s, decode_config(beam, 0.0, 6));
    for (std::size_t i = 1; i < h.tokens.size(); ++i) {
      CHECK(h.tokens[i] != kSos);
      CHECK(h.tokens[i] != kPad);
    }
  }
  const auto g = greedy_decode(s, decode_config(1));
  CHECK(g.tokens == std::vector<std::int32_t>{kSos, 3, 3, kEos});
}

TEST_CASE("beam of two escapes the greedy trap") {
  auto s = greedy_trap();
  const auto g = greedy_decode(s, decode_config(1));
  CHECK(g.tokens == std::vector<std::int32_t>{kSos, 3, 3, kEos});
  CHECK(g.log_prob == doctest::Approx(std::log(0.22)));
  for (double alpha : {0.0, 1.0}) {
    const auto b = beam_search(s, decode_config(2, alpha, 3));
    CHECK(b.tokens == std::vector<std::int32_t>{kSos, 4, kEos});
    CHECK(b.log_prob == doctest::Approx(std::log(0.405)));
    CHECK(b.log_prob > g.log_prob);
  }
  const auto best = exhaustive_best(s, 3);
  CHECK(best.second == std::vector<std::int32_t>{kSos, 4, kEos});
}

TEST_CASE("length normalisation changes the pick") {
  // <eos> now: p 0.3. w1 w1 <eos>: p 0.7 * 0.9 * 0.4 = 0.252, ahead once divided by length.
  TableScorer s(6, {0, 1, 0, 0, 0, 0});
  s.set({kSos}, {0, 0.3, 0, 0.7, 0, 0});
  s.set({kSos, 3}, {0, 0.1, 0, 0.9, 0, 0});
  s.set({kSos, 3, 3}, {0, 0.4, 0, 0.2, 0.2, 0.2});
  const auto raw = beam_search(s, decode_config(3, 0.0, 3));
  CHECK(raw.tokens == std::vector<std::int32_t>{kSos, kEos});
  const auto norm = beam_search(s, decode_config(3, 1.0, 3));
  CHECK(norm.tokens == std::vector<std::int32_t>{kSos, 3, 3, kEos});
  CHECK(norm.log_prob == doctest::Approx(std::log(0.252)));
}

TEST_CASE("wide beam finds the exhaustive optimum") {
  // four words plus <eos>, three steps: 5 + 25 + 125 expansions at most
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    RandomScorer s(7, seed, 2.0);
    const auto best = exhaustive_best(s, 3);
    const auto b = beam_search(s, decode_config(1000, 0.0, 3));
    CHECK(b.tokens == best.second);
    CHECK(b.log_prob == doctest::Approx(best.first).epsilon(1e-12));
    CHECK(b.log_prob == doctest::Approx(sequence_log_prob(s, b.tokens)).epsilon(1e-12));
  }
}

TEST_CASE("covering beam never scores below greedy") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    RandomScorer s(7, seed, 1.5);
    const auto g = greedy_decode(s, decode_config(1, 0.0, 3));
    const auto b = beam_search(s, decode_config(1000, 0.0, 3));
    CHECK(b.log_prob >= g.log_prob);
  }
}

TEST_CASE("a narrow beam can prune the greedy path") {
  // Greedy: w0 (0.51), w2 (0.25), <eos> (1) = 0.1275. Beam 2 keeps w1 w2 and
  // w1 w3 (0.245 each) over every w0 continuation (0.1275) and then meets a
  // flat distribution: 0.0245.
  TableScorer s(13, {0, 0.1, 0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0});
  s.set({kSos}, {0, 0, 0, 0.51, 0.49, 0, 0, 0, 0, 0, 0, 0, 0});
  s.set({kSos, 3}, {0, 0, 0, 0, 0, 0.25, 0.25, 0.25, 0.25, 0, 0, 0, 0});
  s.set({kSos, 4}, {0, 0, 0, 0, 0, 0.5, 0.5, 0, 0, 0, 0, 0, 0});
  s.set({kSos, 3, 5}, {0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const auto g = greedy_decode(s, decode_config(1, 0.0, 3));
  CHECK(g.tokens == std::vector<std::int32_t>{kSos, 3, 5, kEos});
  CHECK(g.log_prob == doctest::Approx(std::log(0.1275)));
  const auto b = beam_search(s, decode_config(2, 0.0, 3));
  CHECK(b.tokens == std::vector<std::int32_t>{kSos, 4, 5, kEos});
  CHECK(b.log_prob == doctest::Approx(std::log(0.0245)));
  CHECK(beam_search(s, decode_config(4, 0.0, 3)).log_prob == doctest::Approx(std::log(0.1275)));
}

TEST_CASE("beam one equals greedy on random models") {
  const auto set = synthetic_set(4, 8, 77);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto mc = tiny_model_config(set.vocab.size(), 8, 8, {2, 4}, 1);
    WaveTransformer model(mc, seed);
    Rng rng(seed + 500);
    FeatureMatrix f;
    f.frames = 6 + rng.below(10);
    f.bands = 8;
    f.values.resize(f.frames * f.bands);
    for (auto& v : f.values) v = static_cast<float>(rng.uniform() * -4.0);
    ModelScorer scorer(model, f);
    const auto g = greedy_decode(scorer, decode_config(1, 1.0, 8));
    const auto b = beam_search(scorer, decode_config(1, 1.0, 8));
    CHECK(g.tokens == b.tokens);
    CHECK(g.log_prob == doctest::Approx(b.log_prob).epsilon(1e-12));
    CHECK(g.log_prob == doctest::Approx(sequence_log_prob(scorer, g.tokens)).epsilon(1e-9));
  }
}

TEST_CASE("classifier bias forces eos or suppresses it") {
  const auto set = synthetic_set(3, 8, 78);
  auto mc = tiny_model_config(set.vocab.size(), 8, 8, {2, 4});
  WaveTransformer model(mc, 3);
  auto weight = model.parameters().at("decoder.cls.weight");
  auto bias = model.parameters().at("decoder.cls.bias");
  std::fill(weight.data().begin(), weight.data().end(), Real(0));
  std::fill(bias.data().begin(), bias.data().end(), Real(0));
  auto clips = std::vector<std::pair<std::string, FeatureMatrix>>(set.features.begin(), set.features.end());

  bias.data()[kEos] = Real(50);
  for (const auto& [name, caption] : caption_corpus(clips, model, set.vocab, decode_config(2))) CHECK(caption.empty());

  bias.data()[kEos] = Real(-1e4);
  bias.data()[4] = Real(5);
  for (std::size_t beam : {1, 2}) {
    for (const auto& [name, caption] : caption_corpus(clips, model, set.vocab, decode_config(beam))) {
      const auto words = tokenize(caption);
      CHECK(words.size() == 22);
      for (const auto& w : words) CHECK(w == set.vocab.words()[4]);
    }
  }
}

TEST_CASE("corpus captioning is ordered, bounded and deterministic") {
  const auto set = synthetic_set(5, 8, 79);
  auto mc = tiny_model_config(set.vocab.size(), 8, 8, {2, 4});
  WaveTransformer model(mc, 11);
  std::vector<std::pair<std::string, FeatureMatrix>> clips(set.features.rbegin(), set.features.rend());
  const auto a = caption_corpus(clips, model, set.vocab, DecodeConfig{});
  const auto b = caption_corpus(clips, model, set.vocab, DecodeConfig{});
  CHECK(a == b);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].first < a[i].first);
  for (const auto& [name, caption] : a) {
    const auto words = tokenize(caption);
    CHECK(words.size() <= 22);
    for (const auto& w : words) {
      CHECK(w != "<sos>");
      CHECK(w != "<eos>");
      CHECK(w != "<pad>");
    }
  }

  auto narrow = clips;
  narrow[0].second.bands = 4;
  narrow[0].second.values.resize(narrow[0].second.frames * 4);
  CHECK_THROWS_AS(caption_corpus(narrow, model, set.vocab, DecodeConfig{}), DimensionError);
  CHECK_THROWS_AS(caption_corpus(clips, model, word_vocab(2), DecodeConfig{}), UsageError);
  CHECK_THROWS_AS(caption_corpus(clips, model, set.vocab, decode_config(2, 1.0, 64)), ConfigError);
}

TEST_CASE("caption manifest round trip") {
  const auto dir = fs::temp_directory_path() / "wavecap_test_inference";
  fs::create_directories(dir);
  const CaptionManifest m{{"a.wav", "a dog barks"}, {"b, c.wav", "rain \"falls\""}, {"d.wav", ""}};
  write_caption_manifest(dir / "captions.csv", m);
  CHECK(read_caption_manifest(dir / "captions.csv") == m);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "file,caption\nx.wav,y\n";
  }
  CHECK_THROWS_AS(read_caption_manifest(dir / "bad.csv"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("scorer size mismatch is rejected") {
  class Short : public NextTokenScorer {
   public:
    std::size_t vocab_size() const override { return 5; }
    std::vector<double> log_probs(const std::vector<std::int32_t>&) override { return {0, 0}; }
  } s;
  CHECK_THROWS_AS(greedy_decode(s, decode_config(1)), DimensionError);
  CHECK_THROWS_AS(beam_search(s, decode_config(2)), DimensionError);
}
