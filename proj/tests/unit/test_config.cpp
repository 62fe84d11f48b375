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

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "wavecap/config.hpp"

using namespace wavecap;
namespace fs = std::filesystem;

TEST_CASE("defaults are the reference hyperparameters") {
  const RunConfig c;
  // 46 ms Hamming window at 44.1 kHz, hop giving 1292..2584 frames, 64 bands
  CHECK(c.audio.window_length == 2028);
  CHECK(c.audio.n_fft == 2048);
  CHECK(c.audio.hop == 512);
  CHECK(c.audio.n_mels == 64);
  CHECK(c.encoder.wave_blocks == 4);
  CHECK(c.encoder.tf_blocks == 3);
  CHECK(c.encoder.channels == 128);
  CHECK(c.encoder.pool_factors == std::vector<std::size_t>{4, 4, 4});  // F'_tf = 1
  CHECK(c.encoder.tf_dropout == 0.25);
  CHECK(c.encoder.mode == EncoderMode::full);
  CHECK(c.decoder.d_model == 128);
  CHECK(c.decoder.blocks == 3);
  CHECK(c.decoder.heads == 4);
  CHECK(c.decoder.dropout == 0.25);
  CHECK(c.train.batch_size == 12);
  CHECK(c.train.clip_norm == 1.0);
  CHECK(c.train.patience == 10);
  CHECK(c.split.val_size == 100);
  CHECK(c.split.rarity_threshold == 10);
  CHECK(c.decode.max_words == 22);
  CHECK(c.decode.beam_size == 2);
  CHECK_NOTHROW(c.validate());

  const auto m = c.model(4367);
  CHECK(m.encoder.n_features == 64);
  CHECK(m.decoder.vocab_size == 4367);
  CHECK(m.decoder.memory_dim == 128);
}

TEST_CASE("parsing sets known keys") {
  const auto c = parse_run_config(
      "seed = 42\n"
      "[audio]\nhop = 256\n"
      "[encoder]\nmode = temp\npool_factors = 2, 4, 8\ntf_post_relu = true\n"
      "[decoder]\nd_model = 64\n"
      "[train]\nlr = 3e-4\nval_size = 5\n"
      "[decode]\nbeam_size = 1\n"
      "[paths]\noutput_dir = out dir\n");
  CHECK(c.seed == 42);
  CHECK(c.audio.hop == 256);
  CHECK(c.encoder.mode == EncoderMode::temp_only);
  CHECK(c.encoder.pool_factors == std::vector<std::size_t>{2, 4, 8});
  CHECK(c.encoder.tf_post_relu);
  CHECK(c.decoder.d_model == 64);
  CHECK(c.train.adam.lr == 3e-4);
  CHECK(c.split.val_size == 5);
  CHECK(c.decode.beam_size == 1);
  CHECK(c.paths.output_dir == "out dir");
  CHECK(c.decoder.heads == 4);
}

TEST_CASE("unknown or malformed entries are rejected") {
  CHECK_THROWS_AS(parse_run_config("[audio]\nhopp = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[mystery]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("colour = red\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[audio]\nhop = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nlr = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[encoder]\ntf_post_relu = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[encoder]\nmode = sideways\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[audio]\nhop = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[decode]\nmax_words = 70\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[encoder]\npool_factors = 4, 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[audio\nhop = 3\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/wavecap.ini"), ConfigError);
}

TEST_CASE("formatting round-trips") {
  RunConfig c;
  c.seed = 7;
  c.train.adam.lr = 1.0 / 3.0;
  c.encoder.mode = EncoderMode::avg;
  c.paths.feature_dir = "features";
  const auto text = format_run_config(c);
  const auto back = parse_run_config(text);
  CHECK(format_run_config(back) == text);
  CHECK(back.train.adam.lr == c.train.adam.lr);
  CHECK(back.encoder.mode == EncoderMode::avg);
  CHECK(format_run_config(parse_run_config("")) == format_run_config(RunConfig{}));

  const auto path = fs::temp_directory_path() / "wavecap_test_config.ini";
  {
    std::ofstream out(path);
    out << text;
  }
  CHECK(format_run_config(load_run_config(path)) == text);
  fs::remove(path);
}

TEST_CASE("WT_SEED overrides the configured seed") {
  RunConfig c;
  c.seed = 5;
  ::unsetenv("WT_SEED");
  apply_environment(c);
  CHECK(c.seed == 5);
  ::setenv("WT_SEED", "123", 1);
  apply_environment(c);
  CHECK(c.seed == 123);
  ::setenv("WT_SEED", "abc", 1);
  CHECK_THROWS_AS(apply_environment(c), ConfigError);
  ::unsetenv("WT_SEED");
}
