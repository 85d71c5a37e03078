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
// Chunk inventory and the on-disk feature cache tying dsp to the
// dataset manifests.

#ifndef VOXID_PIPELINE_HPP_
#define VOXID_PIPELINE_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "voxid/data.hpp"
#include "voxid/dsp.hpp"
#include "voxid/neuralcore/tensor.hpp"

namespace voxid::pipeline {

// Runs tasks on up to `jobs` threads. Exceptions are collected and the
// first one (in task order) is rethrown after all tasks finish.
void run_parallel(const std::vector<std::function<void()>>& tasks, int jobs);

struct ChunkInfo {
  int track_index = 0;  // into manifest.tracks
  std::string track_id;
  double start_s = 0.0;
  int label = 0;  // artist index
  data::Subset subset = data::Subset::kTrain;
};

// Standardize a feature matrix in place to zero mean, unit variance
// (whole-matrix statistics). The cache keeps raw log-mel; networks consume
// the standardized form.
void standardize(neuralcore::Tensor& m);

// Chunk-level view of a manifest plus its split, backed by the VXF1 mel
// cache at <cache_dir>/<track_id>/<start_s>.vxf.
class FeatureStore {
 public:
  FeatureStore(data::DatasetManifest manifest, data::Split split,
               dsp::DspConfig dsp_config, double window_s, double slide_s,
               std::filesystem::path data_root, std::filesystem::path cache_dir);

  // Ensures every chunk's mel is cached (parallel per track), then loads
  // the whole cache into memory.
  void extract_all(int jobs, bool allow_resample = false);
  // Loads an existing cache without touching audio.
  void preload(int jobs);

  int n_chunks() const { return static_cast<int>(chunks_.size()); }
  const std::vector<ChunkInfo>& chunks() const { return chunks_; }
  const ChunkInfo& chunk(int i) const { return chunks_[static_cast<size_t>(i)]; }
  int n_classes() const { return static_cast<int>(labels_.size()); }
  const std::map<std::string, int>& labels() const { return labels_; }
  int frames() const { return frames_; }
  int n_mels() const { return dsp_config_.n_mels; }
  const data::DatasetManifest& manifest() const { return manifest_; }
  const data::Split& split() const { return split_; }
  const dsp::DspConfig& dsp_config() const { return dsp_config_; }
  double window_s() const { return window_s_; }
  double slide_s() const { return slide_s_; }

  // Standardized mel, frames x n_mels. preload()/extract_all() first.
  const neuralcore::Tensor& mel(int chunk_index) const;

  std::vector<int> subset_chunks(data::Subset s) const;
  // (track_index, chunk indices) pairs for a subset, manifest order.
  std::vector<std::pair<int, std::vector<int>>> subset_tracks(data::Subset s) const;

  // B x T x F batch of standardized mels.
  neuralcore::Tensor batch_mel(const std::vector<int>& chunk_indices) const;

  std::filesystem::path chunk_cache_path(const ChunkInfo& c) const;

 private:
  void build_inventory();

  data::DatasetManifest manifest_;
  data::Split split_;
  dsp::DspConfig dsp_config_;
  double window_s_;
  double slide_s_;
  std::filesystem::path data_root_;
  std::filesystem::path cache_dir_;
  std::map<std::string, int> labels_;
  std::vector<ChunkInfo> chunks_;
  std::vector<std::vector<int>> track_chunks_;  // track_index -> chunk indices
  std::vector<neuralcore::Tensor> mels_;        // standardized, per chunk
  int frames_ = 0;
  bool loaded_ = false;
};

std::string format_start_seconds(double start_s);

}  // namespace voxid::pipeline

#endif  // VOXID_PIPELINE_HPP_
