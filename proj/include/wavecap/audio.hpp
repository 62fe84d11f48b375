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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wavecap/common.hpp"

namespace wavecap {
inline namespace WAVECAP_ABI {

struct AudioClip {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  double sample_rate = 0;
};

/// Reads RIFF/WAVE with 16-bit PCM or 32-bit float samples (plain or
/// WAVE_FORMAT_EXTENSIBLE). Channels are averaged. Throws FormatError with
/// the byte offset of the first problem.
AudioClip load_wav(const std::filesystem::path& path);
AudioClip parse_wav(std::span<const unsigned char> bytes);

/// Writes 16-bit PCM mono (used by tests and tooling).
void save_wav_pcm16(const std::filesystem::path& path, std::span<const float> samples,
                    unsigned sample_rate);

struct AudioConfig {
  std::size_t window_length = 2028;
  std::size_t n_fft = 2048;
  std::size_t hop = 512;
  std::size_t n_mels = 64;
  double f_min = 0;
  double f_max = 0;  // 0 selects sample_rate / 2

  void validate() const;
};

/// Periodic Hamming window of `length` samples.
std::vector<double> hamming_window(std::size_t length);

/// Power spectrogram, row-major [frames, n_fft/2 + 1]. Frames are centred on
/// multiples of hop using reflection padding, so frames = floor(len/hop) + 1.
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> power;
};

Spectrogram stft_power(std::span<const float> samples, std::size_t window_length, std::size_t hop,
                       std::size_t n_fft);

/// Number of frames stft_power yields for a clip of the given length.
std::size_t frame_count(std::size_t samples, std::size_t hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters evenly spaced on the mel scale, peak value 1.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t bins = 0;
  double f_min = 0, f_max = 0;
  std::vector<double> centers_hz;  // n_mels
  std::vector<double> weights;     // [n_mels, bins]

  double at(std::size_t mel, std::size_t bin) const { return weights[mel * bins + bin]; }
};

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t n_fft, double sample_rate,
                             double f_min = 0, double f_max = 0);

inline constexpr double kLogFloor = 1e-10;

/// Log mel energies, row-major [frames, n_mels].
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t bands = 0;
  double sample_rate = 0;
  std::size_t hop = 0;
  std::size_t window_length = 0;
  std::vector<float> values;

  float at(std::size_t t, std::size_t f) const { return values[t * bands + f]; }
};

/// ln(max(power . fb^T, 1e-10)) per frame.
FeatureMatrix log_mel(const Spectrogram& power, const MelFilterbank& fb);

/// Full pipeline: STFT, mel projection and log.
FeatureMatrix extract_features(const AudioClip& clip, const AudioConfig& config);

/// WTF1 feature file: magic "WTF1", u32 version, u32 frames, u32 bands,
/// f32 sample rate, u32 hop, u32 window, then frames*bands f32, all
/// little-endian. The header is 28 bytes.
inline constexpr std::uint32_t kFeatureFileVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 28;

void save_features(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix load_features(const std::filesystem::path& path);

}  // namespace WAVECAP_ABI
}  // namespace wavecap
