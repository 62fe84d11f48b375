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
#include <fstream>

#include "support.hpp"
#include "wavecap/training.hpp"

using namespace wavecap;
using namespace wavecap::testing;
namespace fs = std::filesystem;

namespace {

bool same_store(const TensorStore& a, const TensorStore& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    if (!b.contains(name)) return false;
    const auto& u = b.at(name);
    if (t.shape() != u.shape() || !std::equal(t.data().begin(), t.data().end(), u.data().begin())) return false;
  }
  return true;
}

ModelConfig model_config(const SyntheticSet& s, std::size_t width = 8) {
  return tiny_model_config(s.vocab.size(), width, 8, {2, 4});
}

/// Independent early-stopping oracle: stop at the first epoch e > patience
/// whose last `patience` values do not beat the minimum before them.
StopDecision stopping_oracle(const std::vector<double>& h, std::size_t patience) {
  for (std::size_t e = patience + 1; e <= h.size(); ++e) {
    const double before = *std::min_element(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(e - patience));
    const double recent = *std::min_element(h.begin() + static_cast<std::ptrdiff_t>(e - patience), h.begin() + static_cast<std::ptrdiff_t>(e));
    if (!(recent < before)) {
      const auto best = std::min_element(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(e));
      return {true, static_cast<std::size_t>(best - h.begin()) + 1, *best};
    }
  }
  if (h.empty()) return {};
  const auto best = std::min_element(h.begin(), h.end());
  return {false, static_cast<std::size_t>(best - h.begin()) + 1, *best};
}

}  // namespace

TEST_CASE("cross entropy examples") {
  std::vector<std::int32_t> targets{3, 0, 1};
  Tensor uniform = Tensor::zeros({3, 4});
  CHECK(cross_entropy(uniform, targets, 2).item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  double previous = 1e9;
  for (double margin : {1.0, 4.0, 10.0, 30.0}) {
    Tensor l = Tensor::zeros({3, 4});
    for (std::size_t r = 0; r < 3; ++r) l.data()[r * 4 + static_cast<std::size_t>(targets[r])] = static_cast<Real>(margin);
    const double loss = cross_entropy(l, targets, 2).item();
    CHECK(loss >= 0);
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK(previous < 1e-9);
  CHECK_THROWS_AS(cross_entropy(uniform, std::vector<std::int32_t>{2, 2, 2}, 2), UsageError);
}

TEST_CASE("cross entropy gradient is softmax minus one-hot over the position count") {
  Rng rng(3);
  Tensor logits = random_tensor({4, 5}, rng, -2, 2, true);
  std::vector<std::int32_t> targets{1, 2, 4, 0};  // one pad position (index 2)
  backward(cross_entropy(logits, targets, 2));
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0;
    for (std::size_t k = 0; k < 5; ++k) z += std::exp(double(logits.data()[r * 5 + k]));
    for (std::size_t k = 0; k < 5; ++k) {
      const double p = std::exp(double(logits.data()[r * 5 + k])) / z;
      const double expect = targets[r] == 2 ? 0.0 : (p - (k == std::size_t(targets[r]))) / 3.0;
      CHECK(logits.grad()[r * 5 + k] == doctest::Approx(expect).epsilon(1e-5).scale(1e-6));
    }
  }
  const auto check = check_gradients([&] { return cross_entropy(logits, targets, 2); }, {logits}, 1e-2, 1e-2, 1e-4);
  CHECK(check.failures == 0);
}

TEST_CASE("batches pad features and tokens") {
  auto s = synthetic_set(3, 8, 1, 5, 9);
  std::vector<std::size_t> idx{0, 1, 2};
  Batch b = make_batch(s.data, idx);
  std::size_t t_max = 0, len_max = 0;
  for (auto i : idx) {
    t_max = std::max(t_max, s.data.features[s.data.examples[i].clip].frames);
    len_max = std::max(len_max, s.data.examples[i].tokens.size());
  }
  CHECK(b.features.shape() == Shape{3, t_max, 8});
  CHECK(b.steps == len_max - 1);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& ex = s.data.examples[k];
    const auto& fm = s.data.features[ex.clip];
    CHECK(b.frame_lengths[k] == fm.frames);
    for (std::size_t t = fm.frames; t < t_max; ++t)
      CHECK(b.features.data()[(k * t_max + t) * 8] == static_cast<Real>(std::log(kLogFloor)));
    CHECK(b.inputs[k * b.steps] == Vocabulary::kSos);
    for (std::size_t p = 0; p + 1 < ex.tokens.size(); ++p) {
      CHECK(b.inputs[k * b.steps + p] == ex.tokens[p]);
      CHECK(b.targets[k * b.steps + p] == ex.tokens[p + 1]);
    }
    for (std::size_t p = ex.tokens.size() - 1; p < b.steps; ++p) CHECK(b.targets[k * b.steps + p] == Vocabulary::kPad);
  }
}

TEST_CASE("untrained loss is near ln W and padding leaves item losses unchanged") {
  auto s = synthetic_set(2, 8, 2, 6, 12);
  WaveTransformer model(model_config(s), 4);
  std::vector<std::size_t> a{0}, c{1}, both{0, 1};
  const ForwardContext eval;
  NoGradGuard guard;
  const Batch ba = make_batch(s.data, a), bc = make_batch(s.data, c), bb = make_batch(s.data, both);
  auto count = [](const Batch& b) {
    return static_cast<double>(std::count_if(b.targets.begin(), b.targets.end(), [](auto t) { return t != Vocabulary::kPad; }));
  };
  const double la = batch_loss(model, ba, eval).item(), lc = batch_loss(model, bc, eval).item();
  const double lb = batch_loss(model, bb, eval).item();
  CHECK(lb * count(bb) == doctest::Approx(la * count(ba) + lc * count(bc)).epsilon(1e-5));
  CHECK(std::abs(lb - std::log(double(s.vocab.size()))) < 1.5);
}

TEST_CASE("training is deterministic and clips gradients") {
  auto s = synthetic_set(6, 8, 3);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.adam.lr = 1e-3;
  WaveTransformer m1(model_config(s), 9), m2(model_config(s), 9);
  TrainingProgress p1, p2;
  p1.seed = p2.seed = 77;
  for (int e = 0; e < 3; ++e) {
    const double l1 = train_epoch(m1, s.data, cfg, p1), l2 = train_epoch(m2, s.data, cfg, p2);
    CHECK(l1 == l2);
    CHECK(grad_norm(m1.parameters()) <= cfg.clip_norm + 1e-6);
    p1.epoch += 1;
    p2.epoch += 1;
  }
  CHECK(same_store(m1.parameters(), m2.parameters()));
  CHECK(same_store(m1.buffers(), m2.buffers()));
  CHECK(p1.adam.step == 6);
}

TEST_CASE("gradients are zeroed between batches") {
  auto s = synthetic_set(1, 8, 4);
  WaveTransformer model(model_config(s), 5);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.adam.lr = 1e-30;  // parameters effectively frozen
  cfg.clip_norm = 1e9;
  TrainingProgress p;
  train_epoch(model, s.data, cfg, p);
  std::map<std::string, std::vector<Real>> first;
  for (const auto& [name, t] : model.parameters()) first[name].assign(t.grad().begin(), t.grad().end());
  train_epoch(model, s.data, cfg, p);
  for (const auto& [name, t] : model.parameters())
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t.grad()[i] == doctest::Approx(first[name][i]).epsilon(1e-5).scale(1e-8));
}

TEST_CASE("training loss falls on a small corpus") {
  auto s = synthetic_set(4, 8, 5);
  WaveTransformer model(model_config(s, 16), 6);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.adam.lr = 3e-3;
  TrainingProgress p;
  double first = 0, last = 0;
  for (int e = 0; e < 60; ++e) {
    last = train_epoch(model, s.data, cfg, p);
    if (e == 0) first = last;
    p.epoch += 1;
  }
  CHECK(last < 0.5 * first);
}

TEST_CASE("early stopping examples") {
  std::vector<double> h{3};
  for (int i = 0; i < 20; ++i) h.push_back(2);
  for (std::size_t n = 1; n <= 11; ++n) CHECK_FALSE(early_stopping(std::span(h).first(n), 10).stop);
  auto d = early_stopping(std::span(h).first(12), 10);
  CHECK(d.stop);
  CHECK(d.best_epoch == 2);
  CHECK(d.best_loss == 2);

  std::vector<double> down;
  for (int i = 0; i < 50; ++i) down.push_back(100.0 - i);
  CHECK_FALSE(early_stopping(down, 1).stop);
  CHECK(early_stopping(down, 1).best_epoch == 50);

  // Improvement exactly at best + patience resets the counter.
  std::vector<double> reset{5, 6, 6, 4, 6, 6};
  CHECK_FALSE(early_stopping(std::span(reset).first(4), 3).stop);
  CHECK(early_stopping(std::span(reset).first(4), 3).best_epoch == 4);
  CHECK_FALSE(early_stopping(std::span(reset).first(6), 3).stop);
  CHECK_THROWS_AS(early_stopping(h, 0), ConfigError);
}

TEST_CASE("early stopping matches an exhaustive oracle") {
  for (std::size_t len = 0; len <= 7; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<double> h(len);
      for (std::size_t i = 0, c = code; i < len; ++i, c /= 3) h[i] = double(c % 3);
      for (std::size_t patience = 1; patience <= 4; ++patience) {
        const auto got = early_stopping(h, patience), want = stopping_oracle(h, patience);
        CHECK(got.stop == want.stop);
        CHECK(got.best_epoch == want.best_epoch);
      }
    }
  }
}

TEST_CASE("checkpoint round trip") {
  auto s = synthetic_set(4, 8, 6);
  WaveTransformer model(model_config(s), 3);
  TrainConfig cfg;
  cfg.batch_size = 2;
  TrainingProgress p;
  p.seed = 11;
  fit(model, s.data, s.data, [&] { auto c = cfg; c.max_epochs = 2; return c; }(), p);
  const auto bytes = serialize_checkpoint(make_checkpoint(model, s.vocab, p));
  const Checkpoint loaded = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(loaded) == bytes);
  CHECK(loaded.vocab.words() == s.vocab.words());
  CHECK(loaded.progress.epoch == 2);
  CHECK(loaded.progress.val_history == p.val_history);
  CHECK(loaded.progress.train_history == p.train_history);
  CHECK(loaded.progress.adam.step == p.adam.step);
  auto rebuilt = model_from_checkpoint(loaded);
  CHECK(same_store(rebuilt->parameters(), model.parameters()));
  CHECK(same_store(rebuilt->buffers(), model.buffers()));
  CHECK(rebuilt->config().encoder.pool_factors == model.config().encoder.pool_factors);

  const fs::path path = fs::temp_directory_path() / "wavecap_ckpt_test.wtck";
  save_checkpoint(path, loaded);
  save_checkpoint(path.string() + "2", load_checkpoint(path));
  std::ifstream f1(path, std::ios::binary), f2(path.string() + "2", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(f1), {}) == std::string(std::istreambuf_iterator<char>(f2), {}));
  fs::remove(path);
  fs::remove(path.string() + "2");

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), CheckpointError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint(trailing), CheckpointError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(version), CheckpointError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), CheckpointError);

  WaveTransformer wider(model_config(s, 16), 3);
  try {
    restore_model(wider, loaded);
    FAIL("expected a checkpoint error");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("decoder.") != std::string::npos);
  }
}

TEST_CASE("resumed training equals uninterrupted training") {
  auto s = synthetic_set(5, 8, 7);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.adam.lr = 1e-3;
  cfg.max_epochs = 5;
  const ModelConfig mc = model_config(s);
  const Dataset& train = s.data;

  WaveTransformer straight(mc, 21);
  TrainingProgress ps;
  ps.seed = 5;
  fit(straight, train, train, cfg, ps);

  WaveTransformer first(mc, 21);
  TrainingProgress pf;
  pf.seed = 5;
  TrainConfig half = cfg;
  half.max_epochs = 2;
  fit(first, train, train, half, pf);
  const Checkpoint ck = deserialize_checkpoint(serialize_checkpoint(make_checkpoint(first, s.vocab, pf)));
  auto resumed = model_from_checkpoint(ck);
  TrainingProgress pr = ck.progress;
  pr.adam = restore_adam(ck);
  std::vector<double> resumed_train;
  fit(*resumed, train, train, cfg, pr, [&](const EpochReport& r) { resumed_train.push_back(r.train_loss); });
  CHECK(pr.epoch == 5);
  CHECK(pr.val_history == ps.val_history);
  CHECK(pr.train_history == ps.train_history);
  CHECK(resumed_train.size() == 3);
  CHECK(same_store(resumed->parameters(), straight.parameters()));
  CHECK(same_store(resumed->buffers(), straight.buffers()));
}

TEST_CASE("model configuration map round trip") {
  ModelConfig c = tiny_model_config(17, 12, 16, {4, 4}, 3, 2);
  c.encoder.mode = EncoderMode::avg;
  c.encoder.tf_post_relu = true;
  c.decoder.embedding_dropout = false;
  const auto m = model_config_to_map(c);
  const ModelConfig back = model_config_from_map(m);
  CHECK(model_config_to_map(back) == m);
  CHECK(back.encoder.mode == EncoderMode::avg);
  CHECK(back.encoder.pool_factors == std::vector<std::size_t>{4, 4});
  CHECK(back.decoder.vocab_size == 17);
  auto missing = m;
  missing.erase(missing.begin());
  CHECK_THROWS_AS(model_config_from_map(missing), CheckpointError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK(c.batch_size == 12);
  CHECK(c.clip_norm == 1.0);
  CHECK(c.patience == 10);
  CHECK(c.adam.lr == 1e-4);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.clip_norm = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
