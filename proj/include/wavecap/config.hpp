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
#include <string>

#include "wavecap/audio.hpp"
#include "wavecap/inference.hpp"
#include "wavecap/model.hpp"
#include "wavecap/training.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct PathsConfig {
  std::string data_dir;
  std::string feature_dir;
  std::string checkpoint_dir;
  std::string output_dir;
};

struct SplitConfig {
  std::size_t val_size = 100;
  std::size_t rarity_threshold = 10;
};

/// Every tunable of the pipeline. Defaults are the reference hyperparameters.
struct RunConfig {
  AudioConfig audio;
  EncoderConfig encoder;
  DecoderConfig decoder;  // vocab_size is filled in from the vocabulary
  TrainConfig train;
  SplitConfig split;
  DecodeConfig decode;
  PathsConfig paths;
  std::uint64_t seed = 0;

  /// Model configuration for a vocabulary of the given size.
  ModelConfig model(std::size_t vocab_size) const;
  void validate() const;
};

/// Parses INI text: optional top-level `seed`, then sections [audio],
/// [encoder], [decoder], [train], [decode], [paths]. Unknown sections or
/// keys are rejected with a ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Renders every key with its current value (round-trips through parse).
std::string format_run_config(const RunConfig& config);

/// Applies WT_SEED from the environment when set.
void apply_environment(RunConfig& config);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
