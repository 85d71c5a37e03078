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
// The CRNN fusion classifier: stack mel and projected timbre as input
// channels, convolve, feed the selected middle-level vectors into the
// GRU stage, classify from the bottleneck.

#ifndef VOXID_MODEL_HPP_
#define VOXID_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxid/embeddings.hpp"
#include "voxid/neuralcore/graph.hpp"
#include "voxid/neuralcore/layers.hpp"
#include "voxid/pipeline.hpp"

namespace voxid::model {

enum class MiddleTap { kL3, kL4, kL5 };

int tap_width(MiddleTap tap);
const char* to_string(MiddleTap tap);
MiddleTap tap_from_string(const std::string& s);

struct ConvBlockSpec {
  int channels = 16;
  int pool_t = 2;
  int pool_f = 2;
};

struct FusionConfig {
  std::vector<ConvBlockSpec> blocks = {
      {8, 2, 2}, {16, 2, 2}, {16, 3, 2}, {16, 3, 2}};
  int gru_hidden = 32;
  int gru_layers = 2;
  std::vector<MiddleTap> middle_selection;  // canonical order L3 < L4 < L5
  bool timbre_enabled = true;
  int timbre_dim = 64;
  int n_classes = 2;
  int frames = 234;  // mel frames per chunk
  int n_mels = 40;
  double dropout_p = 0.0;

  int conv_out_time() const;
  int conv_out_freq() const;
  // feature width per step after the conv stack (channels * freq bins)
  int conv_feature_width() const;
  int middle_width() const;      // sum of selected tap widths
  int gru_input_width() const;   // conv_feature_width + middle_width
  int bottleneck_width() const;  // gru_hidden + middle_width
  int input_channels() const { return timbre_enabled ? 2 : 1; }

  // Throws ConfigError with an explanatory message on bad geometry
  // (empty sequence after pooling, < 2 classes, block/GRU count).
  void validate() const;
};

struct FusionOutput {
  neuralcore::Value logits;
  neuralcore::Value bottleneck;
};

class FusionModel {
 public:
  FusionModel(FusionConfig config, uint64_t seed);

  // Stacks the mel map with the projected-broadcast timbre vector as a
  // second input channel: B x 2 x T x F (B x 1 x T x F with timbre
  // disabled). The timbre vector is linearly projected to width F, then
  // tiled along T.
  neuralcore::Value fuse(neuralcore::Graph& g, const neuralcore::Tensor& mel,
                         const neuralcore::Tensor& timbre);

  // mel: B x T x F (standardized); timbre: B x timbre_dim (ignored when
  // timbre is disabled); middle: B x middle_width (ignored when the
  // selection is empty).
  FusionOutput forward(neuralcore::Graph& g, const neuralcore::Tensor& mel,
                       const neuralcore::Tensor& timbre,
                       const neuralcore::Tensor& middle, bool training,
                       uint64_t dropout_seed = 0);

  neuralcore::Dense& timbre_projection() { return timbre_proj_; }

  neuralcore::ParamList params();
  const FusionConfig& config() const { return config_; }

 private:
  FusionConfig config_;
  neuralcore::Dense timbre_proj_;  // timbre_dim -> n_mels
  std::vector<neuralcore::Conv2d> convs_;
  std::vector<neuralcore::BatchNorm2d> bns_;
  std::vector<neuralcore::GruLayer> grus_;
  neuralcore::Dense classifier_;
};

// Per-chunk class scores for a set of chunks (softmax rows), eval mode.
neuralcore::Tensor chunk_scores(FusionModel& model, const pipeline::FeatureStore& store,
                                const neuralcore::Tensor& xvec,
                                const neuralcore::Tensor& middle,
                                const std::vector<int>& chunk_ids, int batch);

// Mean of per-chunk softmax vectors, then argmax (ties to the lowest
// class index).
struct TrackPrediction {
  int label = 0;
  std::vector<double> scores;  // averaged class scores
};
TrackPrediction predict_track(const std::vector<std::vector<double>>& chunk_softmax);

struct EvalResult {
  double song_f1 = 0.0;
  double chunk_f1 = 0.0;
  std::vector<int> song_true, song_pred;
  std::vector<int> chunk_true, chunk_pred;
};

// Song-level and chunk-level evaluation over a subset.
EvalResult evaluate(FusionModel& model, const pipeline::FeatureStore& store,
                    const neuralcore::Tensor& xvec, const neuralcore::Tensor& middle,
                    data::Subset subset, int batch);

struct FusionHyper {
  int epochs = 100;
  int batch = 16;
  double lr = 1e-3;
  int patience = 10;  // early stopping on validation song-level macro-F1
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_song_f1 = 0.0;
  double val_chunk_f1 = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_song_f1 = 0.0;
  EvalResult test;  // at the best-on-validation checkpoint
};

// Trains with Adam + early stopping; the model is left at its
// best-on-validation parameters. Per-epoch records go to `log_path` as
// line-delimited JSON when non-empty.
TrainResult train_fusion(FusionModel& model, const pipeline::FeatureStore& store,
                         const neuralcore::Tensor& xvec, const neuralcore::Tensor& middle,
                         const FusionHyper& hyper, uint64_t seed,
                         const std::string& log_path = "");

// Assembles the B x middle_width matrix for the configured selection from
// the full tap matrices.
neuralcore::Tensor select_middle(const embeddings::MiddleMatrices& mats,
                                 const std::vector<MiddleTap>& selection);

}  // namespace voxid::model

#endif  // VOXID_MODEL_HPP_
