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

#include "voxid/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "voxid/errors.hpp"
#include "voxid/io.hpp"

namespace voxid::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place, complex interleaved (re, im).
void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
  const size_t n = re.size();
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace

WindowKind window_kind_from_string(const std::string& name) {
  if (name == "hamming") return WindowKind::kHamming;
  if (name == "hann") return WindowKind::kHann;
  if (name == "rectangular") return WindowKind::kRectangular;
  throw InvalidArgumentError("unknown window kind: " + name);
}

std::string to_string(WindowKind kind) {
  switch (kind) {
    case WindowKind::kHamming: return "hamming";
    case WindowKind::kHann: return "hann";
    case WindowKind::kRectangular: return "rectangular";
  }
  return "?";
}

std::vector<double> make_window(WindowKind kind, int n) {
  if (n < 1) throw InvalidArgumentError("window length must be >= 1");
  std::vector<double> w(static_cast<size_t>(n), 1.0);
  if (n == 1) return w;  // degenerate case: all kinds return {1.0}
  switch (kind) {
    case WindowKind::kRectangular:
      break;
    case WindowKind::kHamming:
      for (int i = 0; i < n; ++i) {
        w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n - 1));
      }
      break;
    case WindowKind::kHann:
      for (int i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
      }
      break;
  }
  return w;
}

double hz_to_mel(double f_hz) {
  if (f_hz < 0.0) throw InvalidArgumentError("hz_to_mel: frequency must be >= 0");
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> mel_filter_centers(int n_mels, double f_min, double f_max) {
  if (n_mels < 1) throw InvalidArgumentError("mel_filter_centers: n_mels must be >= 1");
  if (!(f_min >= 0.0 && f_min < f_max)) {
    throw InvalidArgumentError("mel_filter_centers: need 0 <= f_min < f_max");
  }
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  const double step = (mel_hi - mel_lo) / (n_mels + 1);
  std::vector<double> centers(static_cast<size_t>(n_mels));
  for (int m = 0; m < n_mels; ++m) {
    centers[m] = mel_to_hz(mel_lo + step * (m + 1));
  }
  return centers;
}

std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate,
                                   double f_min, double f_max) {
  if (n_mels < 1) throw InvalidArgumentError("mel_filterbank: n_mels must be >= 1");
  if (!is_power_of_two(n_fft)) {
    throw InvalidArgumentError("mel_filterbank: n_fft must be a power of two");
  }
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw InvalidArgumentError(
        "mel_filterbank: need 0 <= f_min < f_max <= sample_rate/2");
  }
  const int bins = n_fft / 2 + 1;
  if (n_mels > bins) {
    throw InvalidArgumentError("mel_filterbank: more filters than FFT bins");
  }

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  const double step = (mel_hi - mel_lo) / (n_mels + 1);
  // n_mels + 2 edge points; filter m spans [edge[m], edge[m+2]] with its
  // peak at edge[m+1].
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_lo + step * i);

  std::vector<double> bank(static_cast<size_t>(n_mels) * bins, 0.0);
  const double bin_hz = static_cast<double>(sample_rate) / n_fft;
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f > lo && f < c) {
        v = (f - lo) / (c - lo);
      } else if (f >= c && f < hi) {
        v = (hi - f) / (hi - c);
      }
      bank[static_cast<size_t>(m) * bins + k] = v;
    }
  }
  return bank;
}

Spectrogram stft(const AudioClip& clip, const StftConfig& config) {
  if (clip.samples.empty()) throw InvalidArgumentError("stft: empty clip");
  if (!is_power_of_two(config.n_fft)) {
    throw InvalidArgumentError("stft: n_fft must be a power of two");
  }
  if (config.hop <= 0 || config.hop > config.n_fft) {
    throw InvalidArgumentError("stft: need 0 < hop <= n_fft");
  }
  const int n = config.n_fft;
  if (static_cast<int>(clip.samples.size()) < n) {
    throw InvalidArgumentError("stft: clip shorter than one frame (" +
                               std::to_string(clip.samples.size()) + " < " +
                               std::to_string(n) + " samples)");
  }

  const int frames =
      static_cast<int>((clip.samples.size() - static_cast<size_t>(n)) / config.hop) + 1;
  const int bins = n / 2 + 1;
  const std::vector<double> window = make_window(config.window, n);

  Spectrogram out;
  out.frames = frames;
  out.bins = bins;
  out.config = config;
  out.sample_rate = clip.sample_rate;
  out.magnitudes.resize(static_cast<size_t>(frames) * bins);

  std::vector<double> re(static_cast<size_t>(n)), im(static_cast<size_t>(n));
  for (int f = 0; f < frames; ++f) {
    const size_t off = static_cast<size_t>(f) * config.hop;
    for (int i = 0; i < n; ++i) {
      re[i] = clip.samples[off + i] * window[i];
      im[i] = 0.0;
    }
    fft_inplace(re, im);
    for (int k = 0; k < bins; ++k) {
      out.magnitudes[static_cast<size_t>(f) * bins + k] =
          std::sqrt(re[k] * re[k] + im[k] * im[k]);
    }
  }
  return out;
}

MelSpectrogram log_mel_spectrogram(const AudioClip& clip, const DspConfig& config) {
  Spectrogram spec = stft(clip, config.stft);
  const std::vector<double> bank = mel_filterbank(
      config.n_mels, config.stft.n_fft, clip.sample_rate, config.f_min, config.f_max);
  const int bins = spec.bins;

  // Filters are local on the frequency axis; precompute each row's support.
  std::vector<std::pair<int, int>> support(static_cast<size_t>(config.n_mels));
  for (int m = 0; m < config.n_mels; ++m) {
    int lo = bins, hi = 0;
    for (int k = 0; k < bins; ++k) {
      if (bank[static_cast<size_t>(m) * bins + k] > 0.0) {
        lo = std::min(lo, k);
        hi = std::max(hi, k + 1);
      }
    }
    support[m] = {std::min(lo, hi), hi};
  }

  MelSpectrogram mel;
  mel.frames = spec.frames;
  mel.n_mels = config.n_mels;
  mel.sample_rate = clip.sample_rate;
  mel.n_fft = config.stft.n_fft;
  mel.hop = config.stft.hop;
  mel.values.resize(static_cast<size_t>(spec.frames) * config.n_mels);

  std::vector<double> power(static_cast<size_t>(bins));
  for (int f = 0; f < spec.frames; ++f) {
    for (int k = 0; k < bins; ++k) {
      const double v = spec.magnitudes[static_cast<size_t>(f) * bins + k];
      power[k] = v * v;
    }
    for (int m = 0; m < config.n_mels; ++m) {
      double acc = 0.0;
      const auto [lo, hi] = support[m];
      const double* row = &bank[static_cast<size_t>(m) * bins];
      for (int k = lo; k < hi; ++k) acc += row[k] * power[k];
      mel.values[static_cast<size_t>(f) * config.n_mels + m] =
          std::log(std::max(acc, config.log_floor));
    }
  }
  return mel;
}

int chunk_count_for_duration(double duration_s, double window_s, double slide_s) {
  if (duration_s < window_s) return 1;
  return static_cast<int>(std::floor((duration_s - window_s) / slide_s)) + 1;
}

std::vector<Chunk> chunk_track(const AudioClip& clip, double window_s,
                               double slide_s) {
  if (clip.samples.empty()) throw InvalidArgumentError("chunk_track: empty clip");
  if (window_s <= 0.0) throw InvalidArgumentError("chunk_track: window_s must be > 0");
  if (!(slide_s > 0.0 && slide_s <= window_s)) {
    throw InvalidArgumentError("chunk_track: need 0 < slide_s <= window_s");
  }

  const auto window_n = static_cast<size_t>(std::llround(window_s * clip.sample_rate));
  const auto slide_n = static_cast<size_t>(std::llround(slide_s * clip.sample_rate));

  std::vector<Chunk> chunks;
  if (clip.samples.size() < window_n) {
    // Short track: one zero-padded chunk so every track contributes.
    Chunk c;
    c.track_id = clip.track_id;
    c.start_s = 0.0;
    c.end_s = window_s;
    c.sample_rate = clip.sample_rate;
    c.samples = clip.samples;
    c.samples.resize(window_n, 0.0);
    chunks.push_back(std::move(c));
    return chunks;
  }

  for (size_t off = 0; off + window_n <= clip.samples.size(); off += slide_n) {
    Chunk c;
    c.track_id = clip.track_id;
    c.start_s = static_cast<double>(off) / clip.sample_rate;
    c.end_s = c.start_s + window_s;
    c.sample_rate = clip.sample_rate;
    c.samples.assign(clip.samples.begin() + static_cast<ptrdiff_t>(off),
                     clip.samples.begin() + static_cast<ptrdiff_t>(off + window_n));
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<double> resample_linear(const std::vector<double>& in, int rate_in,
                                    int rate_out) {
  if (rate_in <= 0 || rate_out <= 0) {
    throw InvalidArgumentError("resample_linear: rates must be positive");
  }
  if (rate_in == rate_out || in.empty()) return in;
  const double ratio = static_cast<double>(rate_in) / rate_out;
  const auto n_out = static_cast<size_t>(
      std::floor(static_cast<double>(in.size() - 1) / ratio)) + 1;
  std::vector<double> out(n_out);
  for (size_t i = 0; i < n_out; ++i) {
    const double pos = i * ratio;
    const auto i0 = static_cast<size_t>(pos);
    const size_t i1 = std::min(i0 + 1, in.size() - 1);
    const double frac = pos - static_cast<double>(i0);
    out[i] = in[i0] * (1.0 - frac) + in[i1] * frac;
  }
  return out;
}

AudioClip load_audio(const std::filesystem::path& path, const std::string& track_id,
                     int expected_rate, bool allow_resample) {
  io::WavData wav = io::read_wav(path);
  AudioClip clip;
  clip.track_id = track_id;
  if (wav.sample_rate != expected_rate) {
    if (!allow_resample) {
      throw DataError("sample rate " + std::to_string(wav.sample_rate) +
                      " != expected " + std::to_string(expected_rate) + " for " +
                      path.string() + " (pass the resample flag to convert)");
    }
    clip.samples = resample_linear(wav.samples, wav.sample_rate, expected_rate);
  } else {
    clip.samples = std::move(wav.samples);
  }
  clip.sample_rate = expected_rate;
  if (clip.samples.empty()) throw DataError("empty audio file: " + path.string());
  return clip;
}

}  // namespace voxid::dsp
