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

#include "voxid/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "voxid/errors.hpp"
#include "voxid/io.hpp"

namespace voxid::pipeline {

void run_parallel(const std::vector<std::function<void()>>& tasks, int jobs) {
  const int n_jobs = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_jobs <= 1) {
    for (const auto& t : tasks) t();
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(tasks.size());
  std::atomic<bool> failed{false};
  auto work = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (const std::exception& e) {
        errors[i] = e.what();
        failed = true;
      } catch (...) {
        errors[i] = "unknown error";
        failed = true;
      }
    }
  };
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(n_jobs));
  for (int j = 0; j < n_jobs; ++j) workers.emplace_back(work);
  for (auto& w : workers) w.join();
  if (failed) {
    for (const auto& e : errors) {
      if (!e.empty()) throw DataError("parallel task failed: " + e);
    }
  }
}

void standardize(neuralcore::Tensor& m) {
  const int64_t n = m.size();
  if (n == 0) return;
  double mean = 0.0;
  for (int64_t i = 0; i < n; ++i) mean += m[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = m[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::max(std::sqrt(var), 1e-6);
  for (int64_t i = 0; i < n; ++i) m[i] = (m[i] - mean) * inv_std;
}

std::string format_start_seconds(double start_s) {
  const auto rounded = std::llround(start_s);
  if (std::abs(start_s - static_cast<double>(rounded)) < 1e-9) {
    return std::to_string(rounded);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", start_s);
  return buf;
}

FeatureStore::FeatureStore(data::DatasetManifest manifest, data::Split split,
                           dsp::DspConfig dsp_config, double window_s, double slide_s,
                           std::filesystem::path data_root,
                           std::filesystem::path cache_dir)
    : manifest_(std::move(manifest)),
      split_(std::move(split)),
      dsp_config_(dsp_config),
      window_s_(window_s),
      slide_s_(slide_s),
      data_root_(std::move(data_root)),
      cache_dir_(std::move(cache_dir)) {
  if (manifest_.tracks.empty()) throw InvalidArgumentError("FeatureStore: empty manifest");
  labels_ = manifest_.encode_labels();
  // every chunk is exactly window_s long (short tracks are padded), so the
  // frame count is uniform; audio is pinned to 16 kHz
  const auto window_samples = std::llround(window_s_ * 16000);
  if (window_samples < dsp_config_.stft.n_fft) {
    throw ConfigError("chunk window shorter than one STFT frame");
  }
  frames_ = static_cast<int>((window_samples - dsp_config_.stft.n_fft) /
                             dsp_config_.stft.hop) + 1;
  build_inventory();
}

void FeatureStore::build_inventory() {
  track_chunks_.resize(manifest_.tracks.size());
  for (size_t ti = 0; ti < manifest_.tracks.size(); ++ti) {
    const auto& track = manifest_.tracks[ti];
    const int count =
        dsp::chunk_count_for_duration(track.duration_s, window_s_, slide_s_);
    const data::Subset subset = split_.subset_of(track);
    const int label = labels_.at(track.artist_id);
    for (int k = 0; k < count; ++k) {
      ChunkInfo c;
      c.track_index = static_cast<int>(ti);
      c.track_id = track.track_id;
      c.start_s = k * slide_s_;
      c.label = label;
      c.subset = subset;
      track_chunks_[ti].push_back(static_cast<int>(chunks_.size()));
      chunks_.push_back(std::move(c));
    }
  }
}

std::filesystem::path FeatureStore::chunk_cache_path(const ChunkInfo& c) const {
  return cache_dir_ / c.track_id / (format_start_seconds(c.start_s) + ".vxf");
}

void FeatureStore::extract_all(int jobs, bool allow_resample) {
  std::vector<std::function<void()>> tasks;
  tasks.reserve(manifest_.tracks.size());
  for (size_t ti = 0; ti < manifest_.tracks.size(); ++ti) {
    tasks.push_back([this, ti, allow_resample]() {
      const auto& track = manifest_.tracks[ti];
      const auto& chunk_ids = track_chunks_[ti];
      bool all_cached = true;
      for (int ci : chunk_ids) {
        if (!std::filesystem::exists(chunk_cache_path(chunks_[static_cast<size_t>(ci)]))) {
          all_cached = false;
          break;
        }
      }
      if (all_cached) return;
      const dsp::AudioClip clip = dsp::load_audio(
          data_root_ / track.audio_path, track.track_id, 16000, allow_resample);
      const std::vector<dsp::Chunk> cut =
          dsp::chunk_track(clip, window_s_, slide_s_);
      if (cut.size() != chunk_ids.size()) {
        throw DataError("track " + track.track_id + ": expected " +
                        std::to_string(chunk_ids.size()) + " chunks from manifest " +
                        "duration, audio yields " + std::to_string(cut.size()));
      }
      for (size_t k = 0; k < cut.size(); ++k) {
        dsp::AudioClip cc;
        cc.samples = cut[k].samples;
        cc.sample_rate = clip.sample_rate;
        cc.track_id = track.track_id;
        const dsp::MelSpectrogram mel = dsp::log_mel_spectrogram(cc, dsp_config_);
        io::FeatureMatrix fm;
        fm.frames = static_cast<uint32_t>(mel.frames);
        fm.bins = static_cast<uint32_t>(mel.n_mels);
        fm.values.assign(mel.values.begin(), mel.values.end());
        io::write_vxf(chunk_cache_path(chunks_[static_cast<size_t>(chunk_ids[k])]), fm);
      }
    });
  }
  run_parallel(tasks, jobs);
  preload(jobs);
}

void FeatureStore::preload(int jobs) {
  mels_.assign(chunks_.size(), neuralcore::Tensor());
  std::vector<std::function<void()>> tasks;
  tasks.reserve(chunks_.size());
  for (size_t i = 0; i < chunks_.size(); ++i) {
    tasks.push_back([this, i]() {
      const io::FeatureMatrix fm = io::read_vxf(chunk_cache_path(chunks_[i]));
      if (static_cast<int>(fm.frames) != frames_ ||
          static_cast<int>(fm.bins) != dsp_config_.n_mels) {
        throw DimensionError(
            "cached features for " + chunks_[i].track_id + "@" +
            format_start_seconds(chunks_[i].start_s) + " are " +
            std::to_string(fm.frames) + "x" + std::to_string(fm.bins) +
            ", config expects " + std::to_string(frames_) + "x" +
            std::to_string(dsp_config_.n_mels));
      }
      neuralcore::Tensor t({frames_, dsp_config_.n_mels});
      for (int64_t j = 0; j < t.size(); ++j) {
        t[j] = static_cast<double>(fm.values[static_cast<size_t>(j)]);
      }
      standardize(t);
      mels_[i] = std::move(t);
    });
  }
  run_parallel(tasks, jobs);
  loaded_ = true;
}

const neuralcore::Tensor& FeatureStore::mel(int chunk_index) const {
  if (!loaded_) throw StateError("FeatureStore: preload() before mel()");
  return mels_[static_cast<size_t>(chunk_index)];
}

std::vector<int> FeatureStore::subset_chunks(data::Subset s) const {
  std::vector<int> out;
  for (size_t i = 0; i < chunks_.size(); ++i) {
    if (chunks_[i].subset == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::pair<int, std::vector<int>>> FeatureStore::subset_tracks(
    data::Subset s) const {
  std::vector<std::pair<int, std::vector<int>>> out;
  for (size_t ti = 0; ti < track_chunks_.size(); ++ti) {
    if (track_chunks_[ti].empty()) continue;
    if (chunks_[static_cast<size_t>(track_chunks_[ti][0])].subset != s) continue;
    out.emplace_back(static_cast<int>(ti), track_chunks_[ti]);
  }
  return out;
}

neuralcore::Tensor FeatureStore::batch_mel(const std::vector<int>& chunk_indices) const {
  if (chunk_indices.empty()) throw InvalidArgumentError("batch_mel: empty batch");
  const int b = static_cast<int>(chunk_indices.size());
  neuralcore::Tensor out({b, frames_, dsp_config_.n_mels});
  const size_t plane = static_cast<size_t>(frames_) * dsp_config_.n_mels;
  for (int i = 0; i < b; ++i) {
    const neuralcore::Tensor& m = mel(chunk_indices[static_cast<size_t>(i)]);
    std::copy_n(m.data(), plane, out.data() + static_cast<size_t>(i) * plane);
  }
  return out;
}

}  // namespace voxid::pipeline
