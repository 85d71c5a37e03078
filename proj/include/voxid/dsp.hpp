// Copyright 2026 The Voxid Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Deterministic signal front end: windowing, STFT, mel filterbank, log-mel
// spectrogram, and fixed-window chunking. Everything in this module is a
// pure function of its inputs and safe to call from concurrent workers.

#ifndef VOXID_DSP_HPP_
#define VOXID_DSP_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace voxid::dsp {

enum class WindowKind { kHamming, kHann, kRectangular };

WindowKind window_kind_from_string(const std::string& name);
std::string to_string(WindowKind kind);

struct AudioClip {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 16000;
  std::string track_id;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct StftConfig {
  int n_fft = 2048;  // must be a power of two
  int hop = 512;     // 0 < hop <= n_fft
  WindowKind window = WindowKind::kHamming;
};

// Magnitude spectrogram, frames x (n_fft/2 + 1), row-major.
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> magnitudes;
  StftConfig config;
  int sample_rate = 0;

  double at(int frame, int bin) const { return magnitudes[static_cast<size_t>(frame) * bins + bin]; }
};

// Log-compressed mel energies, frames x n_mels, row-major.
struct MelSpectrogram {
  int frames = 0;
  int n_mels = 0;
  std::vector<double> values;
  // provenance
  int sample_rate = 0;
  int n_fft = 0;
  int hop = 0;

  double at(int frame, int mel) const { return values[static_cast<size_t>(frame) * n_mels + mel]; }
  double& at(int frame, int mel) { return values[static_cast<size_t>(frame) * n_mels + mel]; }
};

struct DspConfig {
  StftConfig stft;
  int n_mels = 128;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;  // applied to power before the log
};

struct Chunk {
  std::string track_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<double> samples;  // exactly window_s * sample_rate samples
  int sample_rate = 0;
};

// Window coefficients. n = 1 returns {1.0} for every kind (the coefficient
// formulas would otherwise divide by zero).
std::vector<double> make_window(WindowKind kind, int n);

// mel = 2595 * log10(1 + f/700); strictly increasing; rejects f < 0.
double hz_to_mel(double f_hz);
double mel_to_hz(double mel);

// Center frequencies of n_mels triangular filters equally spaced on the
// mel axis between f_min and f_max (exclusive of the band edges).
std::vector<double> mel_filter_centers(int n_mels, double f_min, double f_max);

// Triangular filterbank matrix, row-major n_mels x (n_fft/2 + 1). Filters
// have unit peak and span [center[m-1], center[m+1]] evaluated at the FFT
// bin frequencies k * sample_rate / n_fft.
std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate,
                                   double f_min, double f_max);

// Magnitude STFT of the windowed signal. Frame count is
// floor((len - n_fft)/hop) + 1; clips shorter than one frame are an error.
Spectrogram stft(const AudioClip& clip, const StftConfig& config);

// log(max(filterbank * |X|^2, log_floor)) per frame.
MelSpectrogram log_mel_spectrogram(const AudioClip& clip, const DspConfig& config);

// Cuts a track into fixed windows at offsets 0, slide, 2*slide, ... keeping
// only offsets whose full window fits. A track shorter than one window
// yields exactly one zero-padded chunk.
std::vector<Chunk> chunk_track(const AudioClip& clip, double window_s = 30.0,
                               double slide_s = 10.0);

// Number of chunks chunk_track produces for a given duration.
int chunk_count_for_duration(double duration_s, double window_s, double slide_s);

// Loads a mono 16-bit PCM WAV as an AudioClip. A file whose rate differs
// from expected_rate is rejected unless allow_resample is set, in which
// case a linear resampler brings it to expected_rate.
AudioClip load_audio(const std::filesystem::path& path, const std::string& track_id,
                     int expected_rate, bool allow_resample = false);

// Linear interpolation resampler (the config-gated path; not a quality
// resampler).
std::vector<double> resample_linear(const std::vector<double>& in, int rate_in,
                                    int rate_out);

}  // namespace voxid::dsp

#endif  // VOXID_DSP_HPP_
