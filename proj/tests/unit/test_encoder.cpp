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

#include "support.hpp"
#include "wavecap/encoder.hpp"

using namespace wavecap;
using wavecap::testing::random_tensor;

namespace {

struct Built {
  ParameterStore params;
  BufferStore buffers;
  Rng rng;
  std::unique_ptr<Encoder> encoder;

  explicit Built(const EncoderConfig& cfg, std::uint64_t seed = 1) : rng(seed) {
    encoder = std::make_unique<Encoder>(cfg, ParamBuilder(params, buffers, rng, "encoder"));
  }
};

EncoderConfig small_config(EncoderMode mode = EncoderMode::full) {
  EncoderConfig c;
  c.n_features = 8;
  c.channels = 6;
  c.wave_blocks = 2;
  c.tf_blocks = 2;
  c.pool_factors = {2, 4};
  c.tf_dropout = 0;
  c.mode = mode;
  return c;
}

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

/// Input frames whose gradient on output frame t is nonzero.
std::vector<std::size_t> temporal_support(const Encoder& enc, const Tensor& x, std::size_t t) {
  Tensor in = x.clone();
  in.set_requires_grad(true);
  const ForwardContext eval;
  Tensor z = enc.temporal(in, {}, eval);
  Tensor pick = Tensor::zeros(z.shape());
  for (std::size_t c = 0; c < z.dim(2); ++c) pick.data()[t * z.dim(2) + c] = 1;
  backward(sum(mul(z, pick)));
  std::vector<std::size_t> frames;
  const std::size_t f = x.dim(2);
  for (std::size_t s = 0; s < x.dim(1); ++s) {
    bool nonzero = false;
    for (std::size_t k = 0; k < f; ++k) nonzero = nonzero || in.grad()[s * f + k] != 0;
    if (nonzero) frames.push_back(s);
  }
  return frames;
}

const EncoderMode kModes[] = {EncoderMode::full, EncoderMode::temp_only, EncoderMode::tf_only,
                              EncoderMode::avg};

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig c;
  CHECK_NOTHROW(c.validate());
  c.pool_factors = {4, 4, 2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.pcnn_kernel = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.pcnn_kernel = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EncoderConfig{};
  c.wave_blocks = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_encoder_mode("temp") == EncoderMode::temp_only);
  CHECK(parse_encoder_mode("avg") == EncoderMode::avg);
  CHECK_THROWS_AS(parse_encoder_mode("both"), ConfigError);
}

TEST_CASE("parameter naming") {
  Built full(EncoderConfig{});
  CHECK(full.params.contains("encoder.temp.block1.t1.weight"));
  CHECK(full.params.at("encoder.temp.block1.t1.weight").shape() == Shape{128, 64, 1});
  CHECK(full.params.at("encoder.temp.block4.t7.bias").shape() == Shape{128});
  CHECK(full.params.at("encoder.temp.block2.t5.weight").shape() == Shape{128, 128, 3});
  CHECK(full.params.contains("encoder.temp.block4.bn.gamma"));
  CHECK(full.buffers.contains("encoder.temp.block4.bn.running_var"));
  CHECK(full.params.at("encoder.tf.block1.scnn.weight").shape() == Shape{128, 1, 5, 5});
  CHECK(full.params.at("encoder.tf.block2.scnn.weight").shape() == Shape{128, 1, 5, 5});
  CHECK(full.params.at("encoder.tf.block3.pcnn.weight").shape() == Shape{128, 128, 5, 5});
  CHECK(full.params.contains("encoder.tf.block3.bn_a.beta"));
  CHECK(full.params.contains("encoder.tf.block3.bn_b.beta"));
  CHECK(full.params.at("encoder.merge.cnn.weight").shape() == Shape{1, 2, 5, 5});
  CHECK(full.params.at("encoder.merge.fnn.weight").shape() == Shape{128, 128});

  Built temp(small_config(EncoderMode::temp_only));
  for (const auto& [name, t] : temp.params) CHECK(name.rfind("encoder.temp.", 0) == 0);
  Built tf(small_config(EncoderMode::tf_only));
  for (const auto& [name, t] : tf.params) CHECK(name.rfind("encoder.tf.", 0) == 0);
  Built avg(small_config(EncoderMode::avg));
  for (const auto& [name, t] : avg.params) CHECK(name.rfind("encoder.merge.", 0) != 0);
}

TEST_CASE("shapes for every mode and length") {
  Rng rng(3);
  for (auto mode : kModes) {
    Built b(small_config(mode));
    for (std::size_t t : {1, 7, 64, 257}) {
      Tensor x = random_tensor({2, t, 8}, rng, -3, 3);
      for (bool training : {false, true}) {
        ForwardContext ctx{training, &rng};
        Tensor z = b.encoder->forward(x, {}, ctx);
        CHECK(z.shape() == Shape{2, t, 6});
      }
    }
  }
}

TEST_CASE("default configuration shapes") {
  Rng rng(4);
  for (auto mode : kModes) {
    EncoderConfig c;
    c.mode = mode;
    Built b(c);
    Tensor x = random_tensor({1, 7, 64}, rng, -3, 3);
    CHECK(b.encoder->forward(x, {}, {}).shape() == Shape{1, 7, 128});
  }
}

TEST_CASE("wave block output is non-negative and zero weights give zero") {
  Rng rng(5);
  Built b(small_config(EncoderMode::temp_only));
  Tensor x = random_tensor({2, 6, 20}, rng, -2, 2);  // [B, C, T] after the first block
  for (bool training : {false, true}) {
    Tensor y = b.encoder->wave_block_forward(1, x, {}, {training, &rng});
    CHECK(y.shape() == Shape{2, 6, 20});
    for (Real v : y.data()) CHECK(v >= 0);
  }
  Built zero(small_config(EncoderMode::temp_only));
  for (auto& [name, t] : zero.params)
    if (name.rfind("encoder.temp.block2.t", 0) == 0)
      for (auto& v : t.data()) v = 0;
  for (bool training : {false, true}) {
    Tensor y = zero.encoder->wave_block_forward(1, x, {}, {training, &rng});
    for (Real v : y.data()) CHECK(v == 0);
  }
  CHECK_THROWS_AS(b.encoder->wave_block_forward(1, random_tensor({1, 5, 4}, rng), {}, {}), DimensionError);
}

TEST_CASE("single block radius is three frames") {
  Rng rng(6);
  EncoderConfig c = small_config(EncoderMode::temp_only);
  c.wave_blocks = 1;
  c.channels = 16;
  Built b(c);
  const std::size_t t_len = 21;
  Tensor x = random_tensor({1, t_len, 8}, rng, -2, 2);
  Tensor base = b.encoder->temporal(x, {}, {});
  for (std::size_t s = 0; s < t_len; ++s) {
    Tensor y = x.clone();
    for (std::size_t k = 0; k < 8; ++k) y.data()[s * 8 + k] += Real(0.5);
    Tensor z = b.encoder->temporal(y, {}, {});
    for (std::size_t t = 0; t < t_len; ++t) {
      bool changed = false;
      for (std::size_t k = 0; k < 16; ++k) changed = changed || z.data()[t * 16 + k] != base.data()[t * 16 + k];
      const bool inside = (t > s ? t - s : s - t) <= 3;
      CHECK(changed == inside);
    }
  }
}

TEST_CASE("temporal receptive field is six frames per block plus one") {
  Rng rng(7);
  for (std::size_t n : {1, 2, 4}) {
    EncoderConfig c = small_config(EncoderMode::temp_only);
    c.wave_blocks = n;
    c.channels = 16;
    Built b(c, 10 + n);
    const std::size_t radius = 3 * n, t_len = 4 * radius + 3;
    Tensor x = random_tensor({1, t_len, 8}, rng, -2, 2);
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto support = temporal_support(*b.encoder, x, t);
      const std::size_t lo = t >= radius ? t - radius : 0, hi = std::min(t_len - 1, t + radius);
      REQUIRE(!support.empty());
      CHECK(support.front() == lo);
      CHECK(support.back() == hi);
      CHECK(support.size() == hi - lo + 1);
    }
    if (n == 4) CHECK(2 * radius + 1 == 25);
  }
}

TEST_CASE("length one input") {
  Rng rng(8);
  for (auto mode : kModes) {
    EncoderConfig c;
    c.mode = mode;
    Built b(c);
    CHECK(b.encoder->forward(random_tensor({1, 1, 64}, rng), {}, {}).shape() == Shape{1, 1, 128});
  }
}

TEST_CASE("time-frequency block geometry and determinism") {
  Rng rng(9);
  Built b(small_config(EncoderMode::tf_only));
  Tensor x = random_tensor({2, 1, 5, 8}, rng);
  Tensor y = b.encoder->tf_block_forward(0, x, {}, {});
  CHECK(y.shape() == Shape{2, 6, 5, 4});
  CHECK(same(y, b.encoder->tf_block_forward(0, x, {}, {})));
  Tensor y2 = b.encoder->tf_block_forward(1, y, {}, {});
  CHECK(y2.shape() == Shape{2, 6, 5, 1});
  Tensor z = b.encoder->time_frequency(random_tensor({3, 11, 8}, rng), {}, {});
  CHECK(z.shape() == Shape{3, 11, 6});
}

TEST_CASE("depthwise stage isolates channels") {
  Rng rng(10);
  Built b(small_config(EncoderMode::tf_only));
  for (auto& v : b.params.at("encoder.tf.block2.scnn.bias").data()) v = 0;
  Tensor x = random_tensor({1, 6, 5, 4}, rng);
  Tensor base = b.encoder->tf_depthwise(1, x);
  for (std::size_t c = 0; c < 6; ++c) {
    Tensor y = x.clone();
    for (std::size_t i = 0; i < 20; ++i) y.data()[c * 20 + i] = 0;
    Tensor out = b.encoder->tf_depthwise(1, y);
    for (std::size_t k = 0; k < 6; ++k)
      for (std::size_t i = 0; i < 20; ++i) {
        if (k == c) CHECK(out.data()[k * 20 + i] == 0);
        else CHECK(out.data()[k * 20 + i] == base.data()[k * 20 + i]);
      }
  }
}

TEST_CASE("time-frequency branch is translation equivariant away from the edges") {
  Rng rng(11);
  Built b(small_config(EncoderMode::tf_only));
  const std::size_t t_len = 40, shift = 5, radius = 4 * 2;  // 5x5 S-CNN and P-CNN per block
  Tensor x = random_tensor({1, t_len, 8}, rng, -2, 2);
  Tensor shifted = Tensor::zeros({1, t_len + shift, 8});
  for (std::size_t i = 0; i < shift * 8; ++i) shifted.data()[i] = static_cast<Real>(rng.uniform(-2, 2));
  std::copy(x.data().begin(), x.data().end(), shifted.data().begin() + shift * 8);
  Tensor a = b.encoder->time_frequency(x, {}, {});
  Tensor c = b.encoder->time_frequency(shifted, {}, {});
  for (std::size_t t = radius; t + radius < t_len; ++t)
    for (std::size_t k = 0; k < 6; ++k) CHECK(c.data()[(t + shift) * 6 + k] == a.data()[t * 6 + k]);
}

TEST_CASE("merge network") {
  Rng rng(12);
  Built b(small_config());
  Tensor zt = random_tensor({2, 5, 6}, rng), ztf = random_tensor({2, 5, 6}, rng);
  Tensor m = b.encoder->merge(zt, ztf, {});
  CHECK(m.shape() == Shape{2, 5, 6});
  CHECK(!same(m, b.encoder->merge(ztf, zt, {})));

  for (auto& v : b.params.at("encoder.merge.cnn.weight").data()) v = 0;
  for (auto& v : b.params.at("encoder.merge.cnn.bias").data()) v = 0;
  for (auto& v : b.params.at("encoder.merge.fnn.weight").data()) v = 0;
  auto bias = b.params.at("encoder.merge.fnn.bias").data();
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = static_cast<Real>(i) - 2;
  Tensor z = b.encoder->merge(zt, ztf, {});
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t k = 0; k < 6; ++k) CHECK(z.data()[r * 6 + k] == bias[k]);
}

TEST_CASE("mode contracts") {
  Rng rng(13);
  Built avg(small_config(EncoderMode::avg));
  Tensor z = random_tensor({2, 9, 6}, rng);
  CHECK(same(avg.encoder->combine(z, z, {}), z));
  Tensor x = random_tensor({2, 9, 8}, rng);
  Tensor expect = scale(add(avg.encoder->temporal(x, {}, {}), avg.encoder->time_frequency(x, {}, {})), Real(0.5));
  CHECK(same(avg.encoder->forward(x, {}, {}), expect));

  Built full(small_config(EncoderMode::full));
  CHECK(same(full.encoder->forward(x, {}, {}),
             full.encoder->merge(full.encoder->temporal(x, {}, {}), full.encoder->time_frequency(x, {}, {}), {})));
  Tensor before = full.encoder->temporal(x, {}, {});
  for (auto& [name, t] : full.params)
    if (name.rfind("encoder.tf.", 0) == 0 || name.rfind("encoder.merge.", 0) == 0)
      for (auto& v : t.data()) v += Real(0.25);
  CHECK(same(full.encoder->temporal(x, {}, {}), before));

  Built temp(small_config(EncoderMode::temp_only));
  CHECK_THROWS_AS(temp.encoder->time_frequency(x, {}, {}), UsageError);
  CHECK_THROWS_AS(temp.encoder->combine(z, z, {}), UsageError);
}

TEST_CASE("padded frames do not affect valid frames in eval mode") {
  Rng rng(14);
  for (auto mode : kModes) {
    Built b(small_config(mode));
    Tensor short_x = random_tensor({1, 6, 8}, rng, -2, 2);
    Tensor long_x = random_tensor({2, 10, 8}, rng, -2, 2);
    std::copy(short_x.data().begin(), short_x.data().end(), long_x.data().begin());
    Tensor alone = b.encoder->forward(short_x, {}, {});
    Tensor padded = b.encoder->forward(long_x, FrameMask::from_lengths({6, 10}, 10), {});
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t k = 0; k < 6; ++k)
        CHECK(padded.data()[t * 6 + k] == doctest::Approx(alone.data()[t * 6 + k]).epsilon(1e-5));
  }
}
