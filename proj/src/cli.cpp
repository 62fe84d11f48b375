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

#include "wavecap/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "wavecap/config.hpp"
#include "wavecap/metrics.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

namespace fs = std::filesystem;

namespace {

RunConfig resolve_config(const std::optional<fs::path>& path) {
  RunConfig c = path ? load_run_config(*path) : RunConfig{};
  apply_environment(c);
  c.validate();
  return c;
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string x = e.path().extension().string();
    std::transform(x.begin(), x.end(), x.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (e.is_regular_file() && x == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, FeatureMatrix> load_feature_dir(const fs::path& dir) {
  std::map<std::string, FeatureMatrix> out;
  for (const auto& p : files_with_extension(dir, ".wtf")) out[p.stem().string()] = load_features(p);
  if (out.empty()) throw DataError("no .wtf feature files in " + dir.string());
  return out;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitErrors;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

std::string format_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Words tokenize_or_empty(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  try {
    return tokenize(text);
  } catch (const DataError&) {
    return {};
  }
}

}  // namespace

int cmd_extract(const ExtractOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = resolve_config(o.config);
    const auto wavs = files_with_extension(o.audio_dir, ".wav");
    fs::create_directories(o.out_dir);
    // Files are independent: workers claim indices and results are reported in sorted order.
    std::vector<std::optional<FeatureMatrix>> results(wavs.size());
    std::vector<std::string> failures(wavs.size());
    std::vector<std::exception_ptr> fatal(wavs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < wavs.size();) {
        try {
          FeatureMatrix f = extract_features(load_wav(wavs[i]), config.audio);
          save_features(o.out_dir / (wavs[i].stem().string() + ".wtf"), f);
          results[i] = std::move(f);
        } catch (const Error& e) {
          failures[i] = e.what();
        } catch (...) {
          fatal[i] = std::current_exception();
        }
      }
    };
    const std::size_t n_workers =
        std::min<std::size_t>(wavs.size(), std::max(1u, std::thread::hardware_concurrency()));
    {
      std::vector<std::jthread> workers;
      for (std::size_t w = 1; w < n_workers; ++w) workers.emplace_back(work);
      work();
    }
    for (const auto& e : fatal)
      if (e) std::rethrow_exception(e);
    std::vector<CsvRow> manifest{{"file_name", "frames", "bands"}};
    int code = kExitOk;
    for (std::size_t i = 0; i < wavs.size(); ++i) {
      if (results[i]) {
        manifest.push_back({wavs[i].filename().string(), std::to_string(results[i]->frames),
                            std::to_string(results[i]->bands)});
      } else {
        err << "warning: skipped " << wavs[i].filename().string() << ": " << failures[i] << '\n';
        code = kExitWarnings;
      }
    }
    write_csv(o.out_dir / "manifest.csv", manifest);
    out << "extracted " << manifest.size() - 1 << " of " << wavs.size() << " files\n";
    return code;
  });
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig config = resolve_config(o.config);
    if (o.mode) config.encoder.mode = parse_encoder_mode(*o.mode);
    const CaptionCorpus corpus = read_caption_corpus(o.captions);
    const Vocabulary vocab = build_vocab(tokenized_captions(corpus));
    Rng split_rng = Rng::derive(config.seed, 0);
    const CorpusSplit split =
        make_validation_split(corpus, config.split.val_size, config.split.rarity_threshold, split_rng);
    const auto features = load_feature_dir(o.features);
    const Dataset train = make_dataset(split.train, features, vocab);
    const Dataset val = make_dataset(split.validation, features, vocab);

    fs::create_directories(o.out_dir);
    write_split_manifest(o.out_dir / "train_split.txt", split.train);
    write_split_manifest(o.out_dir / "val_split.txt", split.validation);
    write_text(o.out_dir / "vocab.txt", join(vocab.words(), "\n") + "\n");

    const ModelConfig model_config = config.model(vocab.size());
    WaveTransformer model(model_config, config.seed);
    TrainingProgress progress;
    progress.seed = config.seed;
    const fs::path last = o.out_dir / "last.wtck", best = o.out_dir / "best.wtck";
    if (o.resume) {
      const Checkpoint ck = load_checkpoint(last);
      if (ck.vocab.words() != vocab.words())
        throw CheckpointError("resume: vocabulary differs from the checkpoint");
      restore_model(model, ck);
      progress = ck.progress;
      progress.adam = restore_adam(ck);
      if (progress.seed != config.seed)
        throw CheckpointError("resume: seed " + std::to_string(config.seed) + " differs from the checkpoint's " +
                              std::to_string(progress.seed));
      out << "resuming after epoch " << progress.epoch << '\n';
    }
    out << "vocabulary " << vocab.size() << " words, " << train.examples.size() << " training and "
        << val.examples.size() << " validation captions, " << model.parameters().total_values()
        << " parameters\n";

    auto write_log = [&] {
      std::vector<CsvRow> rows{{"epoch", "train_loss", "val_loss"}};
      for (std::size_t i = 0; i < progress.val_history.size(); ++i)
        rows.push_back({std::to_string(i + 1), format_loss(progress.train_history[i]),
                        format_loss(progress.val_history[i])});
      write_csv(o.out_dir / "train_log.csv", rows);
    };
    fit(model, train, val, config.train, progress, [&](const EpochReport& r) {
      const Checkpoint ck = make_checkpoint(model, vocab, progress);
      save_checkpoint(last, ck);
      if (r.improved) save_checkpoint(best, ck);
      write_log();
      out << "epoch " << r.epoch << " train_loss=" << format_loss(r.train_loss)
          << " val_loss=" << format_loss(r.val_loss) << (r.improved ? " *" : "") << '\n';
    });
    const StopDecision d = early_stopping(progress.val_history, config.train.patience);
    out << "best epoch " << d.best_epoch << " val_loss=" << format_loss(d.best_loss) << '\n';
    return kExitOk;
  });
}

int cmd_caption(const CaptionOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = resolve_config(o.config);
    DecodeConfig decode = config.decode;
    if (o.beam) decode.beam_size = *o.beam;
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const auto model = model_from_checkpoint(ck);
    std::vector<std::pair<std::string, FeatureMatrix>> items;
    for (auto& [stem, f] : load_feature_dir(o.features)) items.emplace_back(stem + ".wav", std::move(f));
    const CaptionManifest manifest = caption_corpus(items, *model, ck.vocab, decode);
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    write_caption_manifest(o.out, manifest);
    if (o.verbose)
      for (const auto& [name, caption] : manifest) out << name << ": " << caption << '\n';
    out << "captioned " << manifest.size() << " files\n";
    return kExitOk;
  });
}

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CaptionManifest predictions = read_caption_manifest(o.predictions);
    const CaptionCorpus references = read_caption_corpus(o.references);
    std::map<std::string, const CaptionEntry*> by_stem;
    for (const auto& e : references) by_stem[fs::path(e.file_name).stem().string()] = &e;
    EvalCorpus corpus;
    std::vector<std::string> stems;
    for (const auto& [name, caption] : predictions) {
      const std::string stem = fs::path(name).stem().string();
      auto it = by_stem.find(stem);
      if (it == by_stem.end()) throw DataError("no references for prediction '" + name + "'");
      EvalPair pair;
      pair.candidate = tokenize_or_empty(caption);
      for (const auto& r : it->second->captions) pair.references.push_back(tokenize(r, it->second->file_name));
      corpus.push_back(std::move(pair));
      stems.push_back(stem);
    }
    if (corpus.empty()) throw DataError("no predictions to evaluate");
    std::optional<double> spice;
    if (o.spice_file) {
      const auto rows = read_csv(*o.spice_file);
      if (rows.empty() || rows[0] != CsvRow{"file_name", "spice"})
        throw DataError(o.spice_file->string() + ": header must be file_name,spice");
      std::map<std::string, double> values;
      for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 2) throw DataError(o.spice_file->string() + ": malformed row " + std::to_string(r + 1));
        values[fs::path(rows[r][0]).stem().string()] = std::stod(rows[r][1]);
      }
      double sum = 0.0;
      for (const auto& s : stems) {
        auto it = values.find(s);
        if (it == values.end()) throw DataError(o.spice_file->string() + ": no SPICE value for '" + s + "'");
        sum += it->second;
      }
      spice = sum / static_cast<double>(stems.size());
    }
    const std::string report = format_report(assemble_report(corpus, spice));
    out << report;
    if (o.out) write_text(*o.out, report);
    return kExitOk;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"wavecap: audio captioning with a WaveTransformer model"};
  app.require_subcommand(1);

  ExtractOptions ex;
  auto* extract = app.add_subcommand("extract", "Compute log-mel feature files from WAV audio");
  extract->add_option("--audio-dir", ex.audio_dir, "Directory of .wav files")->required();
  extract->add_option("--out-dir", ex.out_dir, "Destination for .wtf files")->required();
  extract->add_option("--config", ex.config, "INI configuration");

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train a model with early stopping");
  train->add_option("--features", tr.features, "Directory of .wtf files")->required();
  train->add_option("--captions", tr.captions, "Caption CSV (file_name,caption_1,...)")->required();
  train->add_option("--out", tr.out_dir, "Output directory for checkpoints and logs")->required();
  train->add_option("--config", tr.config, "INI configuration");
  train->add_option("--mode", tr.mode, "Encoder variant")
      ->check(CLI::IsMember({"full", "temp", "tf", "avg"}));
  train->add_flag("--resume", tr.resume, "Continue from <out>/last.wtck");

  CaptionOptions ca;
  auto* caption = app.add_subcommand("caption", "Caption feature files with a trained model");
  caption->add_option("--features", ca.features, "Directory of .wtf files")->required();
  caption->add_option("--checkpoint", ca.checkpoint, "Checkpoint file")->required();
  caption->add_option("--out", ca.out, "Prediction CSV")->required();
  caption->add_option("--config", ca.config, "INI configuration (decode section)");
  caption->add_option("--beam", ca.beam, "Beam size (1 = greedy)")->check(CLI::PositiveNumber);
  caption->add_flag("--verbose", ca.verbose, "Print each caption");

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against references");
  evaluate->add_option("--predictions", ev.predictions, "Prediction CSV")->required();
  evaluate->add_option("--references", ev.references, "Reference caption CSV")->required();
  evaluate->add_option("--spice-file", ev.spice_file, "CSV file_name,spice with external SPICE scores");
  evaluate->add_option("--out", ev.out, "Also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitErrors;
  }
  if (*extract) return cmd_extract(ex, out, err);
  if (*train) return cmd_train(tr, out, err);
  if (*caption) return cmd_caption(ca, out, err);
  return cmd_evaluate(ev, out, err);
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
