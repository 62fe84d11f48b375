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
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wavecap/audio.hpp"
#include "wavecap/model.hpp"
#include "wavecap/optim.hpp"
#include "wavecap/text.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct TrainConfig {
  std::size_t batch_size = 12;
  AdamConfig adam;
  double clip_norm = 1.0;
  std::size_t patience = 10;
  std::size_t max_epochs = 300;

  void validate() const;
};

/// One caption of one clip, as token ids framed by <sos>/<eos>.
struct Example {
  std::size_t clip = 0;
  std::vector<std::int32_t> tokens;
};

struct Dataset {
  std::vector<std::string> names;       // one per clip
  std::vector<FeatureMatrix> features;  // one per clip
  std::vector<Example> examples;
};

/// Pairs every caption of every entry with that entry's features (looked up
/// by file stem). Throws DataError for missing features or unknown words.
Dataset make_dataset(const CaptionCorpus& entries,
                     const std::map<std::string, FeatureMatrix>& features_by_stem,
                     const Vocabulary& vocab);

/// Padded batch. Features are padded with ln(1e-10); decoder inputs are
/// tokens[0..L-2] and targets tokens[1..L-1], both padded with <pad>.
struct Batch {
  std::size_t size = 0;
  std::size_t steps = 0;  // decoder positions
  Tensor features;        // [B, T_max, F]
  std::vector<std::size_t> frame_lengths;
  std::vector<std::int32_t> inputs;   // [B, steps]
  std::vector<std::int32_t> targets;  // [B, steps]
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> example_indices);

/// Teacher-forced loss of one batch (token mean over non-pad targets).
Tensor batch_loss(const WaveTransformer& model, const Batch& batch, const ForwardContext& ctx);

/// Everything the loop needs to continue where it stopped.
struct TrainingProgress {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // completed epochs
  std::vector<double> train_history;
  std::vector<double> val_history;
  AdamState adam;
};

/// One pass over the data in an order drawn from (seed, epoch). Per batch:
/// forward, loss, backward, clip, Adam. Returns the token-weighted mean loss.
double train_epoch(WaveTransformer& model, const Dataset& data, const TrainConfig& config,
                   TrainingProgress& progress);

/// Token-weighted mean loss in eval mode.
double evaluate_loss(const WaveTransformer& model, const Dataset& data, std::size_t batch_size);

struct StopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;  // 1-based, 0 when history is empty
  double best_loss = 0;
};

/// Stop once `patience` consecutive epochs brought no strict improvement.
StopDecision early_stopping(std::span<const double> history, std::size_t patience);

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  bool improved = false;
};

/// Trains until early stopping or max_epochs, resuming from `progress`.
/// on_epoch runs after each epoch (checkpointing, logging).
void fit(WaveTransformer& model, const Dataset& train, const Dataset& validation,
         const TrainConfig& config, TrainingProgress& progress,
         const std::function<void(const EpochReport&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  Vocabulary vocab;
  TrainingProgress progress;
  struct Record {
    Shape shape;
    std::vector<float> values;
  };
  std::map<std::string, Record> tensors;  // param/, buffer/, adam.m/, adam.v/
};

Checkpoint make_checkpoint(const WaveTransformer& model, const Vocabulary& vocab,
                           const TrainingProgress& progress);
std::vector<unsigned char> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const unsigned char> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters and buffers into `model`. The name and shape sets must
/// match exactly; the first mismatch is reported as a CheckpointError.
void restore_model(WaveTransformer& model, const Checkpoint& checkpoint);
/// Optimizer moments as saved (empty maps for a fresh run).
AdamState restore_adam(const Checkpoint& checkpoint);

/// Builds a model from the configuration stored in the checkpoint.
std::unique_ptr<WaveTransformer> model_from_checkpoint(const Checkpoint& checkpoint);

/// Serialized model configuration (key=value lines) and its inverse.
std::map<std::string, std::string> model_config_to_map(const ModelConfig& config);
ModelConfig model_config_from_map(const std::map<std::string, std::string>& values);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
