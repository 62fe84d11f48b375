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


#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "wavecap/audio.hpp"
#include "wavecap/inference.hpp"
#include "wavecap/metrics.hpp"
#include "wavecap/text.hpp"
#include "wavecap/training.hpp"

namespace py = pybind11;
using namespace wavecap;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray to_array(const FeatureMatrix& f) {
  FloatArray out({f.frames, f.bands});
  std::copy(f.values.begin(), f.values.end(), out.mutable_data());
  return out;
}

FeatureMatrix from_array(const FloatArray& a) {
  if (a.ndim() != 2) throw DimensionError("features must be a 2-D array [frames, bands]");
  FeatureMatrix f;
  f.frames = static_cast<std::size_t>(a.shape(0));
  f.bands = static_cast<std::size_t>(a.shape(1));
  f.values.assign(a.data(), a.data() + a.size());
  return f;
}

EvalCorpus eval_corpus(const std::vector<std::string>& candidates,
                       const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size())
    throw UsageError("candidates and references must have the same length");
  EvalCorpus corpus;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    EvalPair p;
    if (candidates[i].find_first_not_of(" \t\r\n") != std::string::npos) p.candidate = tokenize(candidates[i]);
    for (const auto& r : references[i]) p.references.push_back(tokenize(r));
    corpus.push_back(std::move(p));
  }
  return corpus;
}

/// A trained model with its vocabulary, ready to caption feature matrices.
class Captioner {
 public:
  explicit Captioner(const std::filesystem::path& checkpoint)
      : checkpoint_(load_checkpoint(checkpoint)), model_(model_from_checkpoint(checkpoint_)) {}

  std::string caption(const FloatArray& features, std::size_t beam_size, std::size_t max_words, double alpha) const {
    DecodeConfig config;
    config.beam_size = beam_size;
    config.max_words = max_words;
    config.length_norm_alpha = alpha;
    config.validate();
    const FeatureMatrix f = from_array(features);
    if (f.bands != model_->config().encoder.n_features)
      throw DimensionError("features have " + std::to_string(f.bands) + " bands, model expects " +
                           std::to_string(model_->config().encoder.n_features));
    py::gil_scoped_release release;
    ModelScorer scorer(*model_, f);
    return join(generate_caption(scorer, checkpoint_.vocab, config));
  }

  std::vector<std::string> vocabulary() const { return checkpoint_.vocab.words(); }
  std::size_t n_features() const { return model_->config().encoder.n_features; }
  std::string mode() const { return to_string(model_->config().encoder.mode); }

 private:
  Checkpoint checkpoint_;
  std::unique_ptr<WaveTransformer> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "WaveTransformer audio captioning core";

  auto base = py::register_exception<Error>(m, "WavecapError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());

  m.def("tokenize", [](const std::string& text) { return tokenize(text); }, py::arg("text"),
        "Lower-cased word tokens with punctuation removed.");
  m.def(
      "build_vocab",
      [](const std::vector<std::string>& captions, std::size_t min_count) {
        std::vector<Words> tokenized;
        for (const auto& c : captions) tokenized.push_back(tokenize(c));
        return build_vocab(tokenized, min_count).words();
      },
      py::arg("captions"), py::arg("min_count") = 1,
      "Vocabulary (reserved tokens first) built from raw caption strings.");

  m.def(
      "load_wav",
      [](const std::filesystem::path& path) {
        const AudioClip clip = load_wav(path);
        FloatArray samples(static_cast<py::ssize_t>(clip.samples.size()));
        std::copy(clip.samples.begin(), clip.samples.end(), samples.mutable_data());
        return py::make_tuple(samples, clip.sample_rate);
      },
      py::arg("path"), "Mono samples and the sample rate of a WAV file.");
  m.def(
      "extract_features",
      [](const FloatArray& samples, double sample_rate, std::size_t window_length, std::size_t n_fft,
         std::size_t hop, std::size_t n_mels) {
        if (samples.ndim() != 1) throw DimensionError("samples must be a 1-D array");
        AudioClip clip;
        clip.sample_rate = sample_rate;
        clip.samples.assign(samples.data(), samples.data() + samples.size());
        AudioConfig config;
        config.window_length = window_length;
        config.n_fft = n_fft;
        config.hop = hop;
        config.n_mels = n_mels;
        FeatureMatrix f;
        {
          py::gil_scoped_release release;
          f = extract_features(clip, config);
        }
        return to_array(f);
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("window_length") = 2028, py::arg("n_fft") = 2048,
      py::arg("hop") = 512, py::arg("n_mels") = 64, "Log mel-band energies, shape [frames, n_mels].");
  m.def(
      "load_features", [](const std::filesystem::path& path) { return to_array(load_features(path)); },
      py::arg("path"), "Reads a WTF1 feature file.");
  m.def(
      "save_features",
      [](const std::filesystem::path& path, const FloatArray& features, double sample_rate, std::size_t hop,
         std::size_t window_length) {
        FeatureMatrix f = from_array(features);
        f.sample_rate = sample_rate;
        f.hop = hop;
        f.window_length = window_length;
        save_features(path, f);
      },
      py::arg("path"), py::arg("features"), py::arg("sample_rate") = 44100.0, py::arg("hop") = 512,
      py::arg("window_length") = 2028, "Writes a WTF1 feature file.");

  m.def(
      "bleu",
      [](const std::vector<std::string>& c, const std::vector<std::vector<std::string>>& r, std::size_t n) {
        return bleu(eval_corpus(c, r), n);
      },
      py::arg("candidates"), py::arg("references"), py::arg("n") = 4);
  m.def(
      "rouge_l",
      [](const std::vector<std::string>& c, const std::vector<std::vector<std::string>>& r) {
        return rouge_l(eval_corpus(c, r));
      },
      py::arg("candidates"), py::arg("references"));
  m.def(
      "cider_d",
      [](const std::vector<std::string>& c, const std::vector<std::vector<std::string>>& r) {
        return cider_d(eval_corpus(c, r));
      },
      py::arg("candidates"), py::arg("references"));
  m.def(
      "evaluate",
      [](const std::vector<std::string>& c, const std::vector<std::vector<std::string>>& r,
         std::optional<double> spice) {
        py::dict out;
        for (const auto& [name, value] : assemble_report(eval_corpus(c, r), spice).entries())
          out[py::str(name)] = value;
        return out;
      },
      py::arg("candidates"), py::arg("references"), py::arg("spice") = py::none(),
      "Score report on the natural scale; spider appears only when spice is given.");

  py::class_<Captioner>(m, "Captioner")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("caption", &Captioner::caption, py::arg("features"), py::arg("beam_size") = 2, py::arg("max_words") = 22,
           py::arg("length_norm_alpha") = 1.0)
      .def_property_readonly("vocabulary", &Captioner::vocabulary)
      .def_property_readonly("n_features", &Captioner::n_features)
      .def_property_readonly("mode", &Captioner::mode);
}
