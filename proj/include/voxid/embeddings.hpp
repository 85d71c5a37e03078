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
// The two auxiliary feature extractors: a TDNN x-vector timbre embedder
// with statistics pooling, and an Inception-style network exposing the
// L3/L4/L5 tap vectors plus a 7-dimensional perceptual head.

#ifndef VOXID_EMBEDDINGS_HPP_
#define VOXID_EMBEDDINGS_HPP_

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "voxid/data.hpp"
#include "voxid/dsp.hpp"
#include "voxid/neuralcore/graph.hpp"
#include "voxid/neuralcore/layers.hpp"
#include "voxid/pipeline.hpp"

namespace voxid::embeddings {

inline constexpr int kL3Width = 128;
inline constexpr int kL4Width = 128;
inline constexpr int kL5Width = 256;

struct TimbreEmbedding {
  std::vector<double> values;
  std::string source_chunk;
};

struct MiddleLevelFeatures {
  std::vector<double> l3;  // 128
  std::vector<double> l4;  // 128
  std::vector<double> l5;  // 256
  std::array<double, data::kNumPerceptual> perceptual{};  // clamped to [1, 10]
};

// --- x-vector ---------------------------------------------------------------

struct TdnnConfig {
  int in_dim = 40;  // mel bins
  std::vector<int> channels{64, 64, 64};
  std::vector<int> dilations{1, 2, 3};
  std::vector<int> kernels{3, 3, 3};  // context width per layer (1 or 3)
  int embed_dim = 64;                 // 512 at paper scale
  int n_classes = 2;                  // speakers in the training split

  void validate() const;
};

// TDNN stack -> statistics pooling -> two embedding layers -> softmax head.
// The x-vector is the first post-pooling dense output, pre-activation.
class XVectorNet {
 public:
  XVectorNet(TdnnConfig config, uint64_t seed);

  // B x T x F -> B x embed_dim (pre-activation first embedding layer).
  neuralcore::Value embed(neuralcore::Graph& g, neuralcore::Value mel_batch);
  // B x T x F -> B x n_classes.
  neuralcore::Value logits(neuralcore::Graph& g, neuralcore::Value mel_batch);

  neuralcore::ParamList params();
  const TdnnConfig& config() const { return config_; }

 private:
  TdnnConfig config_;
  std::vector<neuralcore::TdnnLayer> tdnn_;
  neuralcore::Dense emb1_;
  neuralcore::Dense emb2_;
  neuralcore::Dense head_;
};

struct TrainHyper {
  int epochs = 4;
  int batch = 16;
  double lr = 1e-3;
};

struct TrainLog {
  std::vector<double> epoch_losses;  // mean training loss per epoch
  double first_loss = 0.0;           // before any update
  double last_loss = 0.0;
};

// Speaker-classification pretraining on the training split; the softmax
// head is discarded by callers that only want embeddings.
TrainLog train_xvector(XVectorNet& net, const pipeline::FeatureStore& store,
                       const TrainHyper& hyper, uint64_t seed);

// Single-clip extraction (standardizes the mel the same way training did).
TimbreEmbedding extract_xvector(const dsp::MelSpectrogram& mel, XVectorNet& net);

// Embeddings for every chunk of the store, n_chunks x embed_dim.
neuralcore::Tensor extract_xvectors_all(XVectorNet& net,
                                        const pipeline::FeatureStore& store,
                                        int jobs);

// --- Inception-lite middle-level network --------------------------------------

struct InceptionLiteConfig {
  int in_mels = 40;
  int stem_channels = 8;
  int stem_pool_t = 4, stem_pool_f = 2;
  int block1_channels = 64;
  int block1_pool_t = 2, block1_pool_f = 2;
  int block2_pool_t = 2, block2_pool_f = 2;
  // Tap widths counted backward from the output head: the inverse 5th,
  // 4th and 3rd layers. Must be 256/128/128; validate() rejects anything
  // else before training.
  int l5_width = kL5Width;
  int l4_width = kL4Width;
  int l3_width = kL3Width;
  int dense1 = 32;
  int dense2 = 16;

  void validate() const;
};

// Layer stack: stem, block1, block2 (L5 tap), block3 (L4 tap),
// block4 (L3 tap), dense1, dense2, head(7). Taps are post-activation
// block outputs flattened by global average pooling.
class InceptionLiteNet {
 public:
  InceptionLiteNet(InceptionLiteConfig config, uint64_t seed);

  struct Taps {
    neuralcore::Value l3;          // B x 128
    neuralcore::Value l4;          // B x 128
    neuralcore::Value l5;          // B x 256
    neuralcore::Value perceptual;  // B x 7, unclamped head output
  };
  // mel batch B x 1 x T x F.
  Taps forward(neuralcore::Graph& g, neuralcore::Value mel4);

  neuralcore::ParamList params();
  const InceptionLiteConfig& config() const { return config_; }

 private:
  struct Block {
    neuralcore::Conv2d b1;       // 1x1
    neuralcore::Conv2d b3_red;   // 1x1 reduce
    neuralcore::Conv2d b3;       // 3x3
    neuralcore::Conv2d b5_red;   // 1x1 reduce
    neuralcore::Conv2d b5a;      // 3x3
    neuralcore::Conv2d b5b;      // 3x3 (stacked pair ~ 5x5 receptive field)
    neuralcore::Conv2d proj;     // 1x1 passthrough
    neuralcore::Value forward(neuralcore::Graph& g, neuralcore::Value x);
    neuralcore::ParamList params(const std::string& prefix);
  };
  static Block make_block(int in_channels, int out_channels, voxid::Rng& rng);

  InceptionLiteConfig config_;
  neuralcore::Conv2d stem_;
  Block block1_, block2_, block3_, block4_;
  neuralcore::Dense d1_, d2_, head_;
};

TrainLog train_middle_level(InceptionLiteNet& net, const pipeline::FeatureStore& store,
                            const TrainHyper& hyper, uint64_t seed);

MiddleLevelFeatures extract_middle_level(const dsp::MelSpectrogram& mel,
                                         InceptionLiteNet& net);

struct MiddleMatrices {
  neuralcore::Tensor l3;          // n_chunks x 128
  neuralcore::Tensor l4;          // n_chunks x 128
  neuralcore::Tensor l5;          // n_chunks x 256
  neuralcore::Tensor perceptual;  // n_chunks x 7, clamped
};

MiddleMatrices extract_middle_all(InceptionLiteNet& net,
                                  const pipeline::FeatureStore& store, int jobs);

// --- embedding files (VXF1, frames = 1) ---------------------------------------

void save_embedding_file(const std::filesystem::path& path,
                         const std::vector<double>& values);
// expected_len < 0 skips the length check.
std::vector<double> load_embedding_file(const std::filesystem::path& path,
                                        int expected_len = -1);

// Per-chunk embeddings laid out <dir>/<track_id>/<start_s>.vxf, returned
// as n_chunks x expected_len in store chunk order.
neuralcore::Tensor load_chunk_embeddings_dir(const pipeline::FeatureStore& store,
                                             const std::filesystem::path& dir,
                                             int expected_len);

// Tap matrices from <dir>/l3, <dir>/l4, <dir>/l5 (perceptual scores are
// not part of the file interface; the matrix is left empty).
MiddleMatrices load_middle_dir(const pipeline::FeatureStore& store,
                               const std::filesystem::path& dir);

}  // namespace voxid::embeddings

#endif  // VOXID_EMBEDDINGS_HPP_
