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

#include "wavecap/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "binary_io.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (patience == 0) throw ConfigError("train: patience must be >= 1");
  if (!(clip_norm > 0)) throw ConfigError("train: clip_norm must be positive");
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
  if (!(adam.lr > 0)) throw ConfigError("train: lr must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(adam.eps > 0)) throw ConfigError("train: Adam eps must be positive");
}

Dataset make_dataset(const CaptionCorpus& entries,
                     const std::map<std::string, FeatureMatrix>& features_by_stem,
                     const Vocabulary& vocab) {
  Dataset d;
  for (const auto& e : entries) {
    const std::string stem = std::filesystem::path(e.file_name).stem().string();
    auto it = features_by_stem.find(stem);
    if (it == features_by_stem.end()) throw DataError("no features for '" + e.file_name + "'");
    const std::size_t clip = d.features.size();
    d.names.push_back(e.file_name);
    d.features.push_back(it->second);
    for (std::size_t c = 0; c < e.captions.size(); ++c) {
      const auto words = tokenize(e.captions[c], e.file_name + " caption " + std::to_string(c + 1));
      d.examples.push_back({clip, encode(words, vocab)});
    }
  }
  if (d.examples.empty()) throw DataError("dataset is empty");
  const std::size_t bands = d.features.front().bands;
  for (std::size_t i = 0; i < d.features.size(); ++i)
    if (d.features[i].bands != bands)
      throw DataError("feature band count differs for '" + d.names[i] + "'");
  return d;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> example_indices) {
  if (example_indices.empty()) throw UsageError("make_batch: empty batch");
  Batch b;
  b.size = example_indices.size();
  std::size_t t_max = 0, len_max = 0;
  for (auto i : example_indices) {
    const auto& ex = data.examples.at(i);
    t_max = std::max(t_max, data.features[ex.clip].frames);
    len_max = std::max(len_max, ex.tokens.size());
  }
  const std::size_t bands = data.features[data.examples[example_indices[0]].clip].bands;
  b.steps = len_max - 1;
  std::vector<Real> feats(b.size * t_max * bands, static_cast<Real>(std::log(kLogFloor)));
  b.inputs.assign(b.size * b.steps, Vocabulary::kPad);
  b.targets.assign(b.size * b.steps, Vocabulary::kPad);
  for (std::size_t k = 0; k < b.size; ++k) {
    const auto& ex = data.examples[example_indices[k]];
    const auto& fm = data.features[ex.clip];
    std::copy(fm.values.begin(), fm.values.end(), feats.begin() + static_cast<std::ptrdiff_t>(k * t_max * bands));
    b.frame_lengths.push_back(fm.frames);
    for (std::size_t s = 0; s + 1 < ex.tokens.size(); ++s) {
      b.inputs[k * b.steps + s] = ex.tokens[s];
      b.targets[k * b.steps + s] = ex.tokens[s + 1];
    }
  }
  b.features = Tensor::from({b.size, t_max, bands}, std::move(feats));
  return b;
}

Tensor batch_loss(const WaveTransformer& model, const Batch& batch, const ForwardContext& ctx) {
  Tensor logits = model.forward(batch.features, batch.frame_lengths, batch.inputs, ctx);
  return cross_entropy(logits, batch.targets, Vocabulary::kPad);
}

namespace {

std::size_t target_count(const Batch& b) {
  return static_cast<std::size_t>(
      std::count_if(b.targets.begin(), b.targets.end(), [](auto t) { return t != Vocabulary::kPad; }));
}

}  // namespace

double train_epoch(WaveTransformer& model, const Dataset& data, const TrainConfig& config,
                   TrainingProgress& progress) {
  config.validate();
  Rng rng = Rng::derive(progress.seed, progress.epoch + 1);
  const auto order = rng.permutation(data.examples.size());
  ForwardContext ctx{true, &rng};
  double weighted = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const Batch batch = make_batch(data, std::span(order).subspan(start, end - start));
    model.parameters().zero_grad();
    Tensor loss = batch_loss(model, batch, ctx);
    backward(loss);
    clip_grad_norm(model.parameters(), config.clip_norm);
    adam_step(model.parameters(), progress.adam, config.adam, progress.adam.step + 1);
    const std::size_t n = target_count(batch);
    weighted += static_cast<double>(loss.item()) * static_cast<double>(n);
    tokens += n;
  }
  return weighted / static_cast<double>(tokens);
}

double evaluate_loss(const WaveTransformer& model, const Dataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("evaluate_loss: batch_size must be >= 1");
  NoGradGuard guard;
  std::vector<std::size_t> order(data.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double weighted = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const Batch batch = make_batch(data, std::span(order).subspan(start, end - start));
    const std::size_t n = target_count(batch);
    weighted += static_cast<double>(batch_loss(model, batch, ForwardContext{}).item()) * static_cast<double>(n);
    tokens += n;
  }
  return weighted / static_cast<double>(tokens);
}

StopDecision early_stopping(std::span<const double> history, std::size_t patience) {
  if (patience == 0) throw ConfigError("early_stopping: patience must be >= 1");
  StopDecision d;
  std::size_t since = 0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (d.best_epoch == 0 || history[i] < d.best_loss) {
      d.best_epoch = i + 1;
      d.best_loss = history[i];
      since = 0;
    } else if (++since >= patience) {
      d.stop = true;
      return d;
    }
  }
  return d;
}

void fit(WaveTransformer& model, const Dataset& train, const Dataset& validation,
         const TrainConfig& config, TrainingProgress& progress,
         const std::function<void(const EpochReport&)>& on_epoch) {
  config.validate();
  while (progress.epoch < config.max_epochs &&
         !early_stopping(progress.val_history, config.patience).stop) {
    EpochReport r;
    r.train_loss = train_epoch(model, train, config, progress);
    r.val_loss = evaluate_loss(model, validation, config.batch_size);
    progress.train_history.push_back(r.train_loss);
    progress.val_history.push_back(r.val_loss);
    progress.epoch += 1;
    r.epoch = progress.epoch;
    r.improved = early_stopping(progress.val_history, config.patience).best_epoch == r.epoch;
    if (on_epoch) on_epoch(r);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw CheckpointError("checkpoint: bad number for " + key + ": '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw CheckpointError("checkpoint: bad integer for " + key + ": '" + s + "'");
  return static_cast<std::size_t>(std::stoull(s));
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw CheckpointError("checkpoint: missing field '" + key + "'");
  return it->second;
}

Checkpoint::Record record_of(const Tensor& t) {
  return {t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
}

}  // namespace

std::map<std::string, std::string> model_config_to_map(const ModelConfig& c) {
  std::map<std::string, std::string> m;
  const auto& e = c.encoder;
  const auto& d = c.decoder;
  m["encoder.n_features"] = std::to_string(e.n_features);
  m["encoder.wave_blocks"] = std::to_string(e.wave_blocks);
  m["encoder.tf_blocks"] = std::to_string(e.tf_blocks);
  m["encoder.channels"] = std::to_string(e.channels);
  m["encoder.pcnn_kernel"] = std::to_string(e.pcnn_kernel);
  std::string pools;
  for (std::size_t i = 0; i < e.pool_factors.size(); ++i) pools += (i ? "," : "") + std::to_string(e.pool_factors[i]);
  m["encoder.pool_factors"] = pools;
  m["encoder.tf_dropout"] = format_double(e.tf_dropout);
  m["encoder.leaky_slope"] = format_double(e.leaky_slope);
  m["encoder.tf_post_relu"] = e.tf_post_relu ? "1" : "0";
  m["encoder.mode"] = to_string(e.mode);
  m["decoder.vocab_size"] = std::to_string(d.vocab_size);
  m["decoder.d_model"] = std::to_string(d.d_model);
  m["decoder.blocks"] = std::to_string(d.blocks);
  m["decoder.heads"] = std::to_string(d.heads);
  m["decoder.max_len"] = std::to_string(d.max_len);
  m["decoder.dropout"] = format_double(d.dropout);
  m["decoder.embedding_dropout"] = d.embedding_dropout ? "1" : "0";
  return m;
}

ModelConfig model_config_from_map(const std::map<std::string, std::string>& m) {
  ModelConfig c;
  auto& e = c.encoder;
  auto& d = c.decoder;
  auto size = [&](const char* k) { return parse_size(k, need(m, k)); };
  auto real = [&](const char* k) { return parse_double(k, need(m, k)); };
  e.n_features = size("encoder.n_features");
  e.wave_blocks = size("encoder.wave_blocks");
  e.tf_blocks = size("encoder.tf_blocks");
  e.channels = size("encoder.channels");
  e.pcnn_kernel = size("encoder.pcnn_kernel");
  e.pool_factors.clear();
  for (const auto& p : split(need(m, "encoder.pool_factors"), ',')) e.pool_factors.push_back(parse_size("encoder.pool_factors", p));
  e.tf_dropout = real("encoder.tf_dropout");
  e.leaky_slope = real("encoder.leaky_slope");
  e.tf_post_relu = need(m, "encoder.tf_post_relu") == "1";
  e.mode = parse_encoder_mode(need(m, "encoder.mode"));
  d.vocab_size = size("decoder.vocab_size");
  d.d_model = size("decoder.d_model");
  d.blocks = size("decoder.blocks");
  d.heads = size("decoder.heads");
  d.max_len = size("decoder.max_len");
  d.dropout = real("decoder.dropout");
  d.embedding_dropout = need(m, "decoder.embedding_dropout") == "1";
  d.memory_dim = e.output_dim();
  return c;
}

Checkpoint make_checkpoint(const WaveTransformer& model, const Vocabulary& vocab,
                           const TrainingProgress& progress) {
  Checkpoint c;
  c.model = model.config();
  c.vocab = vocab;
  c.progress = progress;
  c.progress.adam.m.clear();
  c.progress.adam.v.clear();
  for (const auto& [name, t] : model.parameters()) c.tensors["param/" + name] = record_of(t);
  for (const auto& [name, t] : model.buffers()) c.tensors["buffer/" + name] = record_of(t);
  for (const auto& [name, m] : progress.adam.m) {
    const Shape shape = model.parameters().at(name).shape();
    c.tensors["adam.m/" + name] = {shape, std::vector<float>(m.begin(), m.end())};
    const auto& v = progress.adam.v.at(name);
    c.tensors["adam.v/" + name] = {shape, std::vector<float>(v.begin(), v.end())};
  }
  return c;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c) {
  std::map<std::string, std::string> meta;
  for (auto& [k, v] : model_config_to_map(c.model)) meta["model." + k] = v;
  Words words(c.vocab.words().begin() + Vocabulary::kReserved, c.vocab.words().end());
  meta["vocab"] = join(words, "\n");
  meta["train.seed"] = std::to_string(c.progress.seed);
  meta["train.epoch"] = std::to_string(c.progress.epoch);
  meta["train.history"] = join_doubles(c.progress.train_history);
  meta["val.history"] = join_doubles(c.progress.val_history);
  meta["adam.step"] = std::to_string(c.progress.adam.step);

  detail::ByteWriter w;
  w.raw("WTCK", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, rec] : c.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(rec.shape.size()));
    for (auto d : rec.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : rec.values) w.f32(v);
  }
  return w.bytes();
}

Checkpoint deserialize_checkpoint(std::span<const unsigned char> bytes) {
  detail::ByteReader<CheckpointError> r(bytes.data(), bytes.size(), "checkpoint");
  if (bytes.size() < 8 || std::memcmp(r.take(4), "WTCK", 4) != 0)
    throw CheckpointError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  std::map<std::string, std::string> meta;
  for (std::uint32_t n = r.u32(), i = 0; i < n; ++i) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  Checkpoint c;
  std::map<std::string, std::string> model_meta;
  for (const auto& [k, v] : meta)
    if (k.starts_with("model.")) model_meta[k.substr(6)] = v;
  try {
    c.model = model_config_from_map(model_meta);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  c.vocab = Vocabulary(split(need(meta, "vocab"), '\n'));
  c.progress.seed = std::stoull(need(meta, "train.seed"));
  c.progress.epoch = parse_size("train.epoch", need(meta, "train.epoch"));
  for (const auto& s : split(need(meta, "train.history"), ','))
    c.progress.train_history.push_back(parse_double("train.history", s));
  for (const auto& s : split(need(meta, "val.history"), ','))
    c.progress.val_history.push_back(parse_double("val.history", s));
  c.progress.adam.step = parse_size("adam.step", need(meta, "adam.step"));
  for (std::uint32_t n = r.u32(), i = 0; i < n; ++i) {
    std::string name = r.str();
    Checkpoint::Record rec;
    const std::uint32_t ndim = r.u32();
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      rec.shape.push_back(r.u32());
      count *= rec.shape.back();
    }
    r.need(4 * count);
    rec.values.resize(count);
    for (auto& v : rec.values) v = r.f32();
    c.tensors[std::move(name)] = std::move(rec);
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  detail::write_file<CheckpointError>(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file<CheckpointError>(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

namespace {

void restore_store(TensorStore& store, const Checkpoint& c, const std::string& prefix) {
  for (auto& [name, t] : store) {
    auto it = c.tensors.find(prefix + name);
    if (it == c.tensors.end())
      throw CheckpointError("checkpoint: missing " + prefix + name);
    if (it->second.shape != t.shape())
      throw CheckpointError("checkpoint: " + prefix + name + " has shape " + to_string(it->second.shape) +
                            ", model expects " + to_string(t.shape()));
    std::copy(it->second.values.begin(), it->second.values.end(), t.data().begin());
  }
  for (const auto& [name, _] : c.tensors)
    if (name.starts_with(prefix) && !store.contains(name.substr(prefix.size())))
      throw CheckpointError("checkpoint: unexpected " + name + " (not in the current model)");
}

}  // namespace

void restore_model(WaveTransformer& model, const Checkpoint& checkpoint) {
  restore_store(model.parameters(), checkpoint, "param/");
  restore_store(model.buffers(), checkpoint, "buffer/");
}

AdamState restore_adam(const Checkpoint& checkpoint) {
  AdamState s;
  s.step = checkpoint.progress.adam.step;
  for (const auto& [name, rec] : checkpoint.tensors) {
    if (name.starts_with("adam.m/")) s.m[name.substr(7)].assign(rec.values.begin(), rec.values.end());
    if (name.starts_with("adam.v/")) s.v[name.substr(7)].assign(rec.values.begin(), rec.values.end());
  }
  return s;
}

std::unique_ptr<WaveTransformer> model_from_checkpoint(const Checkpoint& checkpoint) {
  auto model = std::make_unique<WaveTransformer>(checkpoint.model, 0);
  restore_model(*model, checkpoint);
  return model;
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
