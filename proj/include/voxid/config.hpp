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

#ifndef VOXID_CONFIG_HPP_
#define VOXID_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxid/dsp.hpp"
#include "voxid/embeddings.hpp"
#include "voxid/model.hpp"

namespace voxid::config {

struct DspSettings {
  int sample_rate = 16000;
  int n_fft = 2048;
  int hop = 512;
  std::string window = "hamming";
  int n_mels = 128;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
  bool resample = false;
  double window_s = 30.0;
  double slide_s = 10.0;
};

struct XvecSettings {
  int embed_dim = 512;
  std::vector<int> channels{512, 512, 512};
  std::vector<int> dilations{1, 2, 3};
  std::vector<int> kernels{3, 3, 3};
  int epochs = 10;
  int batch = 16;
  double lr = 1e-3;
  std::string source = "trained";  // trained | file
  std::string file_dir;            // per-chunk VXF1 files when source=file
};

struct MiddleSettings {
  int stem_channels = 16;
  int stem_pool_t = 4, stem_pool_f = 2;
  int block1_channels = 64;
  int block1_pool_t = 2, block1_pool_f = 2;
  int block2_pool_t = 2, block2_pool_f = 2;
  int dense1 = 64;
  int dense2 = 32;
  int epochs = 10;
  int batch = 16;
  double lr = 1e-3;
  std::string source = "trained";  // trained | file
  std::string file_dir;            // expects l3/ l4/ l5/ subdirectories
};

struct FusionSettings {
  std::vector<model::ConvBlockSpec> blocks{{64, 2, 2}, {128, 3, 3}, {128, 4, 4}, {128, 4, 4}};
  int gru_hidden = 256;
  int gru_layers = 2;
  std::vector<std::string> middle_selection{"L4"};
  bool timbre_enabled = true;
  double dropout = 0.0;
  int epochs = 100;
  int batch = 16;
  double lr = 1e-3;
  int patience = 10;
};

struct Paths {
  std::string data_root;  // falls back to VOXID_DATA_ROOT
  std::string cache_dir;  // falls back to VOXID_CACHE_DIR
  std::string out_dir = "out";
};

struct Config {
  std::string preset = "desk";
  DspSettings dsp;
  XvecSettings xvector;
  MiddleSettings middle;
  FusionSettings fusion;
  Paths paths;
  uint64_t seed = 1;
  std::vector<uint64_t> seeds{1, 2, 3};
  int jobs = 2;
};

// Complete presets. "paper": 512-d x-vector, 128 mels, full conv widths
// (needs externally supplied data at scale). "desk": reduced widths, the
// CI target.
Config preset_config(const std::string& name);

nlohmann::json to_json(const Config& c);
// Merges fields present in j over base (unknown keys are config errors).
Config merge_json(const Config& base, const nlohmann::json& j);
Config load_config_file(const std::string& path, const Config& base);

// FNV-1a over the canonical (sorted-key) JSON dump; stable across key
// reordering in input files.
std::string config_hash(const Config& c);

// Every violation, not just the first; empty means valid.
std::vector<std::string> validate(const Config& c);

// --- converters into module configs -------------------------------------------

dsp::DspConfig make_dsp_config(const Config& c);
embeddings::TdnnConfig make_tdnn_config(const Config& c, int n_classes);
embeddings::TrainHyper make_tdnn_hyper(const Config& c);
embeddings::InceptionLiteConfig make_inception_config(const Config& c);
embeddings::TrainHyper make_inception_hyper(const Config& c);
model::FusionConfig make_fusion_config(const Config& c, int n_classes, int frames);
model::FusionHyper make_fusion_hyper(const Config& c);

// Resolves data_root / cache_dir with environment fallbacks
// (VOXID_DATA_ROOT, VOXID_CACHE_DIR).
std::string resolved_data_root(const Config& c);
std::string resolved_cache_dir(const Config& c);

}  // namespace voxid::config

#endif  // VOXID_CONFIG_HPP_
