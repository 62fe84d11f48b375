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

#include "wavecap/audio.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "binary_io.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

using Reader = detail::ByteReader<FormatError>;

AudioClip parse_wav(std::span<const unsigned char> bytes) {
  Reader r(bytes.data(), bytes.size(), "wav");
  if (bytes.size() < 12) r.fail("file shorter than a RIFF header");
  const auto* riff = r.take(4);
  r.u32();
  const auto* wave = r.take(4);
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw FormatError("wav: missing RIFF/WAVE signature at byte 0");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::size_t chunk_at = r.offset();
    const std::string id(reinterpret_cast<const char*>(r.take(4)), 4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16) r.fail("fmt chunk too small");
      r.need(size);
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();
      r.u16();
      bits = r.u16();
      std::size_t used = 16;
      if (format == 0xFFFE) {
        if (size < 40) r.fail("extensible fmt chunk too small");
        r.u16();
        r.u16();
        r.u32();
        format = r.u16();  // first two bytes of the sub-format GUID
        r.skip(14);
        used = 40;
      }
      r.skip(size - used + (size & 1));
      have_fmt = true;
      continue;
    }
    if (id == "data") {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk at byte " + std::to_string(chunk_at));
      if (channels == 0) throw FormatError("wav: zero channels in fmt chunk");
      if (rate == 0) throw FormatError("wav: zero sample rate in fmt chunk");
      const bool pcm16 = format == 1 && bits == 16;
      const bool float32 = format == 3 && bits == 32;
      if (!pcm16 && !float32)
        throw FormatError("wav: unsupported codec (format " + std::to_string(format) + ", " +
                          std::to_string(bits) + " bits) in chunk at byte " + std::to_string(chunk_at));
      if (r.remaining() < size)
        throw FormatError("wav: data chunk at byte " + std::to_string(chunk_at) + " declares " +
                          std::to_string(size) + " bytes but only " +
                          std::to_string(r.remaining()) + " remain");
      const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
      const std::size_t frames = size / frame_bytes;
      if (frames == 0) throw FormatError("wav: empty data chunk at byte " + std::to_string(chunk_at));
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
          if (pcm16) acc += static_cast<std::int16_t>(r.u16()) / 32768.0;
          else acc += r.f32();
        }
        const double v = acc / channels;
        if (!std::isfinite(v)) throw FormatError("wav: non-finite sample at byte " + std::to_string(r.offset()));
        clip.samples[i] = static_cast<float>(v);
      }
      return clip;
    }
    r.skip(size + (size & 1));
  }
  throw FormatError("wav: no data chunk found before byte " + std::to_string(r.offset()));
}

AudioClip load_wav(const std::filesystem::path& path) {
  const auto bytes = detail::read_file<FormatError>(path);
  try {
    return parse_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_wav_pcm16(const std::filesystem::path& path, std::span<const float> samples,
                    unsigned sample_rate) {
  detail::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  w.raw("RIFF", 4);
  w.u32(36 + data_bytes);
  w.raw("WAVE", 4);
  w.raw("fmt ", 4);
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(sample_rate);
  w.u32(sample_rate * 2);
  w.u16(2);
  w.u16(16);
  w.raw("data", 4);
  w.u32(data_bytes);
  for (float s : samples) {
    const double scaled = std::clamp(std::round(static_cast<double>(s) * 32768.0), -32768.0, 32767.0);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  detail::write_file<FormatError>(path, w.bytes());
}

void AudioConfig::validate() const {
  if (n_fft < 2) throw ConfigError("audio: n_fft must be >= 2");
  if (window_length == 0 || window_length > n_fft)
    throw ConfigError("audio: window_length must lie in [1, n_fft]");
  if (hop == 0) throw ConfigError("audio: hop must be >= 1");
  if (n_mels == 0) throw ConfigError("audio: n_mels must be >= 1");
  if (f_min < 0 || (f_max != 0 && f_max <= f_min)) throw ConfigError("audio: need 0 <= f_min < f_max");
}

std::vector<double> hamming_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / length);
  return w;
}

std::size_t frame_count(std::size_t samples, std::size_t hop) { return samples / hop + 1; }

namespace {

// FFTW planning is not thread-safe; execution of a finished plan is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftwf_free(p); }
};
struct PlanDestroy {
  void operator()(fftwf_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftwf_destroy_plan(p);
  }
};

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Spectrogram stft_power(std::span<const float> samples, std::size_t window_length, std::size_t hop,
                       std::size_t n_fft) {
  if (hop == 0 || window_length == 0 || window_length > n_fft)
    throw ConfigError("stft: need hop >= 1 and 1 <= window_length <= n_fft");
  if (samples.size() < hop)
    throw FormatError("stft: clip of " + std::to_string(samples.size()) +
                      " samples is shorter than one hop (" + std::to_string(hop) + ")");
  Spectrogram spec;
  spec.frames = frame_count(samples.size(), hop);
  spec.bins = n_fft / 2 + 1;
  spec.power.assign(spec.frames * spec.bins, 0.0);

  std::unique_ptr<float, FftwFree> in(static_cast<float*>(fftwf_malloc(sizeof(float) * n_fft)));
  std::unique_ptr<fftwf_complex, FftwFree> out(
      static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * spec.bins)));
  std::unique_ptr<fftwf_plan_s, PlanDestroy> plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan.reset(fftwf_plan_dft_r2c_1d(static_cast<int>(n_fft), in.get(), out.get(), FFTW_ESTIMATE));
  }
  if (!plan) throw Error("stft: FFTW planning failed");

  const auto window = hamming_window(window_length);
  const std::size_t offset = (n_fft - window_length) / 2;
  const auto half = static_cast<std::ptrdiff_t>(n_fft / 2);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const auto centre = static_cast<std::ptrdiff_t>(t * hop);
    std::fill(in.get(), in.get() + n_fft, 0.0f);
    for (std::size_t n = 0; n < window_length; ++n) {
      const std::ptrdiff_t idx = centre - half + static_cast<std::ptrdiff_t>(offset + n);
      in.get()[offset + n] = static_cast<float>(samples[reflect(idx, samples.size())] * window[n]);
    }
    fftwf_execute(plan.get());
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      spec.power[t * spec.bins + k] = re * re + im * im;
    }
  }
  return spec;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t n_fft, double sample_rate,
                             double f_min, double f_max) {
  if (n_mels == 0 || n_fft < 2 || !(sample_rate > 0)) throw ConfigError("mel: invalid geometry");
  if (f_max == 0) f_max = sample_rate / 2;
  if (f_min < 0 || f_max <= f_min || f_max > sample_rate / 2 + 1e-9)
    throw ConfigError("mel: need 0 <= f_min < f_max <= sample_rate / 2");
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.bins = n_fft / 2 + 1;
  fb.f_min = f_min;
  fb.f_max = f_max;
  const double m_lo = hz_to_mel(f_min), m_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / (n_mels + 1));
  fb.centers_hz.assign(edges.begin() + 1, edges.end() - 1);
  fb.weights.assign(n_mels * fb.bins, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb.weights[m * fb.bins + k] = w;
      any = any || w > 0;
    }
    if (!any)
      throw ConfigError("mel: filter " + std::to_string(m) +
                        " covers no FFT bin; use fewer mel bands or a larger n_fft");
  }
  return fb;
}

FeatureMatrix log_mel(const Spectrogram& power, const MelFilterbank& fb) {
  if (power.bins != fb.bins)
    throw DimensionError("log_mel: spectrogram has " + std::to_string(power.bins) +
                         " bins, filterbank expects " + std::to_string(fb.bins));
  FeatureMatrix out;
  out.frames = power.frames;
  out.bands = fb.n_mels;
  out.values.resize(out.frames * out.bands);
  for (std::size_t t = 0; t < power.frames; ++t) {
    const double* row = power.power.data() + t * power.bins;
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      const double* w = fb.weights.data() + m * fb.bins;
      double e = 0.0;
      for (std::size_t k = 0; k < fb.bins; ++k) e += row[k] * w[k];
      out.values[t * out.bands + m] = static_cast<float>(std::log(std::max(e, kLogFloor)));
    }
  }
  return out;
}

FeatureMatrix extract_features(const AudioClip& clip, const AudioConfig& config) {
  config.validate();
  const auto spec = stft_power(clip.samples, config.window_length, config.hop, config.n_fft);
  const auto fb = mel_filterbank(config.n_mels, config.n_fft, clip.sample_rate, config.f_min, config.f_max);
  FeatureMatrix out = log_mel(spec, fb);
  out.sample_rate = clip.sample_rate;
  out.hop = config.hop;
  out.window_length = config.window_length;
  return out;
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& f) {
  if (f.values.size() != f.frames * f.bands) throw DimensionError("save_features: value count mismatch");
  detail::ByteWriter w;
  w.raw("WTF1", 4);
  w.u32(kFeatureFileVersion);
  w.u32(static_cast<std::uint32_t>(f.frames));
  w.u32(static_cast<std::uint32_t>(f.bands));
  w.f32(static_cast<float>(f.sample_rate));
  w.u32(static_cast<std::uint32_t>(f.hop));
  w.u32(static_cast<std::uint32_t>(f.window_length));
  for (float v : f.values) w.f32(v);
  detail::write_file<FormatError>(path, w.bytes());
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  const auto bytes = detail::read_file<FormatError>(path);
  Reader r(bytes.data(), bytes.size(), path.string());
  r.need(kFeatureHeaderBytes);
  if (std::memcmp(r.take(4), "WTF1", 4) != 0) throw FormatError(path.string() + ": bad magic at byte 0");
  const std::uint32_t version = r.u32();
  if (version != kFeatureFileVersion)
    throw FormatError(path.string() + ": unsupported feature version " + std::to_string(version));
  FeatureMatrix f;
  f.frames = r.u32();
  f.bands = r.u32();
  f.sample_rate = r.f32();
  f.hop = r.u32();
  f.window_length = r.u32();
  if (f.frames == 0 || f.bands == 0) throw FormatError(path.string() + ": empty feature matrix");
  const std::size_t expect = kFeatureHeaderBytes + 4 * f.frames * f.bands;
  if (bytes.size() != expect)
    throw FormatError(path.string() + ": expected " + std::to_string(expect) + " bytes, found " +
                      std::to_string(bytes.size()));
  f.values.resize(f.frames * f.bands);
  for (auto& v : f.values) v = r.f32();
  return f;
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
