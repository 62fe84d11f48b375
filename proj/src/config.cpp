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

#include "wavecap/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace wavecap {
inline namespace WAVECAP_ABI {

namespace pt = boost::property_tree;

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(std::stoull(v));
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    out.push_back(to_size(key, b == std::string::npos ? "" : item.substr(b, e - b + 1)));
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define WC_SIZE(path, member)                                                            {path, {[](RunConfig& c, const std::string& v) { c.member = to_size(path, v); },               [](const RunConfig& c) { return std::to_string(c.member); }}}
#define WC_REAL(path, member)                                                            {path, {[](RunConfig& c, const std::string& v) { c.member = to_double(path, v); },             [](const RunConfig& c) { return fmt(c.member); }}}
#define WC_BOOL(path, member)                                                            {path, {[](RunConfig& c, const std::string& v) { c.member = to_bool(path, v); },               [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}}
#define WC_TEXT(path, member)                                                            {path, {[](RunConfig& c, const std::string& v) { c.member = v; },                              [](const RunConfig& c) { return c.member; }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"seed", {[](RunConfig& c, const std::string& v) { c.seed = to_size("seed", v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      WC_SIZE("audio.window_length", audio.window_length),
      WC_SIZE("audio.n_fft", audio.n_fft),
      WC_SIZE("audio.hop", audio.hop),
      WC_SIZE("audio.n_mels", audio.n_mels),
      WC_REAL("audio.f_min", audio.f_min),
      WC_REAL("audio.f_max", audio.f_max),
      WC_SIZE("encoder.wave_blocks", encoder.wave_blocks),
      WC_SIZE("encoder.tf_blocks", encoder.tf_blocks),
      WC_SIZE("encoder.channels", encoder.channels),
      WC_SIZE("encoder.pcnn_kernel", encoder.pcnn_kernel),
      {"encoder.pool_factors",
       {[](RunConfig& c, const std::string& v) { c.encoder.pool_factors = to_sizes("encoder.pool_factors", v); },
        [](const RunConfig& c) { return join_sizes(c.encoder.pool_factors); }}},
      WC_REAL("encoder.tf_dropout", encoder.tf_dropout),
      WC_REAL("encoder.leaky_slope", encoder.leaky_slope),
      WC_BOOL("encoder.tf_post_relu", encoder.tf_post_relu),
      {"encoder.mode",
       {[](RunConfig& c, const std::string& v) { c.encoder.mode = parse_encoder_mode(v); },
        [](const RunConfig& c) { return to_string(c.encoder.mode); }}},
      WC_SIZE("decoder.d_model", decoder.d_model),
      WC_SIZE("decoder.blocks", decoder.blocks),
      WC_SIZE("decoder.heads", decoder.heads),
      WC_SIZE("decoder.max_len", decoder.max_len),
      WC_REAL("decoder.dropout", decoder.dropout),
      WC_BOOL("decoder.embedding_dropout", decoder.embedding_dropout),
      WC_SIZE("train.batch_size", train.batch_size),
      WC_REAL("train.lr", train.adam.lr),
      WC_REAL("train.beta1", train.adam.beta1),
      WC_REAL("train.beta2", train.adam.beta2),
      WC_REAL("train.eps", train.adam.eps),
      WC_REAL("train.clip_norm", train.clip_norm),
      WC_SIZE("train.patience", train.patience),
      WC_SIZE("train.max_epochs", train.max_epochs),
      WC_SIZE("train.val_size", split.val_size),
      WC_SIZE("train.rarity_threshold", split.rarity_threshold),
      WC_SIZE("decode.max_words", decode.max_words),
      WC_SIZE("decode.beam_size", decode.beam_size),
      WC_REAL("decode.length_norm_alpha", decode.length_norm_alpha),
      WC_TEXT("paths.data_dir", paths.data_dir),
      WC_TEXT("paths.feature_dir", paths.feature_dir),
      WC_TEXT("paths.checkpoint_dir", paths.checkpoint_dir),
      WC_TEXT("paths.output_dir", paths.output_dir),
  };
  return table;
}

#undef WC_SIZE
#undef WC_REAL
#undef WC_BOOL
#undef WC_TEXT

}  // namespace

ModelConfig RunConfig::model(std::size_t vocab_size) const {
  ModelConfig m;
  m.encoder = encoder;
  m.encoder.n_features = audio.n_mels;
  m.decoder = decoder;
  m.decoder.vocab_size = vocab_size;
  m.decoder.memory_dim = m.encoder.output_dim();
  return m;
}

void RunConfig::validate() const {
  audio.validate();
  EncoderConfig e = encoder;
  e.n_features = audio.n_mels;
  e.validate();
  DecoderConfig d = decoder;
  d.vocab_size = 4;
  d.validate();
  train.validate();
  decode.validate();
  if (decode.max_words + 2 > decoder.max_len)
    throw ConfigError("config: decoder.max_len must exceed decode.max_words + 1");
  if (split.val_size == 0) throw ConfigError("config: train.val_size must be >= 1");
}

RunConfig parse_run_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  const auto& table = fields();
  for (const auto& [section, node] : tree) {
    if (node.empty()) {
      static const std::set<std::string> sections = {"audio", "encoder", "decoder", "train", "decode", "paths"};
      if (sections.count(section) && node.data().empty()) continue;
      auto it = table.find(section);
      if (it == table.end() || section.find('.') != std::string::npos)
        throw ConfigError("config: unknown top-level key '" + section + "'");
      it->second.set(c, node.data());
      continue;
    }
    for (const auto& [key, value] : node) {
      const std::string path = section + "." + key;
      auto it = table.find(path);
      if (it == table.end()) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      it->second.set(c, value.data());
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  std::string current;
  const auto& table = fields();
  out += "seed = " + table.at("seed").get(config) + "\n";
  for (const auto& [path, field] : table) {
    const auto dot = path.find('.');
    if (dot == std::string::npos) continue;
    const std::string section = path.substr(0, dot);
    if (section != current) {
      out += "\n[" + section + "]\n";
      current = section;
    }
    out += path.substr(dot + 1) + " = " + field.get(config) + "\n";
  }
  return out;
}

void apply_environment(RunConfig& config) {
  if (const char* s = std::getenv("WT_SEED"); s && *s) config.seed = to_size("WT_SEED", s);
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
