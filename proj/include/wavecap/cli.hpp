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
#include <iosfwd>
#include <optional>
#include <string>

#include "wavecap/common.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitWarnings = 1, kExitErrors = 2 };

struct ExtractOptions {
  std::filesystem::path audio_dir;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
};

struct TrainOptions {
  std::filesystem::path features;
  std::filesystem::path captions;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
  std::optional<std::string> mode;
  bool resume = false;
};

struct CaptionOptions {
  std::filesystem::path features;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
  std::optional<std::size_t> beam;
  bool verbose = false;
};

struct EvaluateOptions {
  std::filesystem::path predictions;
  std::filesystem::path references;
  std::optional<std::filesystem::path> spice_file;
  std::optional<std::filesystem::path> out;
};

/// One WTF1 file per WAV (same stem) plus manifest.csv. Unreadable files
/// are skipped with a warning and make the exit code 1.
int cmd_extract(const ExtractOptions& options, std::ostream& out, std::ostream& err);

/// Builds the vocabulary and validation split, trains with early stopping and
/// writes best.wtck, last.wtck, train_log.csv, vocab.txt, train_split.txt and
/// val_split.txt into the output directory.
int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);

/// Captions every .wtf file and writes `file_name,caption_predicted`.
int cmd_caption(const CaptionOptions& options, std::ostream& out, std::ostream& err);

/// Prints (and optionally writes) the score report.
int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err);

/// Parses arguments and dispatches to a subcommand.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
