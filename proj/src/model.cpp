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

#include "voxid/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "voxid/errors.hpp"
#include "voxid/evaluation.hpp"
#include "voxid/neuralcore/optim.hpp"

namespace voxid::model {

using neuralcore::Graph;
using neuralcore::ParamList;
using neuralcore::Tensor;
using neuralcore::Value;

int tap_width(MiddleTap tap) {
  switch (tap) {
    case MiddleTap::kL3: return embeddings::kL3Width;
    case MiddleTap::kL4: return embeddings::kL4Width;
    case MiddleTap::kL5: return embeddings::kL5Width;
  }
  return 0;
}

const char* to_string(MiddleTap tap) {
  switch (tap) {
    case MiddleTap::kL3: return "L3";
    case MiddleTap::kL4: return "L4";
    case MiddleTap::kL5: return "L5";
  }
  return "?";
}

MiddleTap tap_from_string(const std::string& s) {
  if (s == "L3") return MiddleTap::kL3;
  if (s == "L4") return MiddleTap::kL4;
  if (s == "L5") return MiddleTap::kL5;
  throw ConfigError("unknown middle-level tap: " + s);
}

int FusionConfig::conv_out_time() const {
  int t = frames;
  for (const auto& b : blocks) t /= b.pool_t;
  return t;
}

int FusionConfig::conv_out_freq() const {
  int f = n_mels;
  for (const auto& b : blocks) f /= b.pool_f;
  return f;
}

int FusionConfig::conv_feature_width() const {
  return blocks.back().channels * conv_out_freq();
}

int FusionConfig::middle_width() const {
  int w = 0;
  for (MiddleTap tap : middle_selection) w += tap_width(tap);
  return w;
}

int FusionConfig::gru_input_width() const {
  return conv_feature_width() + middle_width();
}

int FusionConfig::bottleneck_width() const { return gru_hidden + middle_width(); }

void FusionConfig::validate() const {
  if (blocks.size() != 4) {
    throw ConfigError("FusionConfig: the paper-faithful preset has exactly 4 conv "
                      "blocks, got " + std::to_string(blocks.size()));
  }
  if (gru_layers != 2) {
    throw ConfigError("FusionConfig: the paper-faithful preset has exactly 2 GRU "
                      "layers, got " + std::to_string(gru_layers));
  }
  if (n_classes < 2) throw ConfigError("FusionConfig: need n_classes >= 2");
  if (gru_hidden < 1) throw ConfigError("FusionConfig: gru_hidden must be >= 1");
  if (timbre_enabled && timbre_dim < 1) {
    throw ConfigError("FusionConfig: timbre_dim must be >= 1");
  }
  for (const auto& b : blocks) {
    if (b.channels < 1 || b.pool_t < 1 || b.pool_f < 1) {
      throw ConfigError("FusionConfig: bad conv block spec");
    }
  }
  // duplicate taps would double-count widths
  for (size_t i = 0; i < middle_selection.size(); ++i) {
    for (size_t j = i + 1; j < middle_selection.size(); ++j) {
      if (middle_selection[i] == middle_selection[j]) {
        throw ConfigError("FusionConfig: duplicate middle-level tap in selection");
      }
    }
  }
  if (conv_out_time() < 1 || conv_out_freq() < 1) {
    throw ConfigError(
        "FusionConfig: pooling empties the sequence: input " +
        std::to_string(frames) + "x" + std::to_string(n_mels) +
        " reduces to " + std::to_string(conv_out_time()) + "x" +
        std::to_string(conv_out_freq()) +
        "; shrink the pool sizes or enlarge the input");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("FusionConfig: dropout_p must be in [0, 1)");
  }
}

FusionModel::FusionModel(FusionConfig config, uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, "fusion_init"));
  timbre_proj_ = neuralcore::Dense(std::max(1, config_.timbre_dim), config_.n_mels, rng);
  int in_ch = config_.input_channels();
  for (const auto& b : config_.blocks) {
    convs_.emplace_back(in_ch, b.channels, 3, 3, 1, 1, rng);
    bns_.emplace_back(b.channels);
    in_ch = b.channels;
  }
  int gru_in = config_.gru_input_width();
  for (int i = 0; i < config_.gru_layers; ++i) {
    grus_.emplace_back(gru_in, config_.gru_hidden, rng);
    gru_in = config_.gru_hidden;
  }
  classifier_ = neuralcore::Dense(config_.bottleneck_width(), config_.n_classes, rng);
}

Value FusionModel::fuse(Graph& g, const Tensor& mel, const Tensor& timbre) {
  if (mel.ndim() != 3 || mel.dim(1) != config_.frames || mel.dim(2) != config_.n_mels) {
    throw ShapeError("FusionModel: mel batch must be B x " +
                     std::to_string(config_.frames) + " x " +
                     std::to_string(config_.n_mels) + ", got " + mel.shape_str());
  }
  const int b = mel.dim(0);
  Value mel4 = g.reshape(g.input(mel), {b, 1, config_.frames, config_.n_mels});
  if (!config_.timbre_enabled) return mel4;
  if (timbre.ndim() != 2 || timbre.dim(0) != b || timbre.dim(1) != config_.timbre_dim) {
    throw ShapeError("FusionModel: timbre batch must be B x " +
                     std::to_string(config_.timbre_dim) + ", got " +
                     timbre.shape_str());
  }
  Value tv = g.input(timbre);
  Value proj = timbre_proj_.forward(g, tv);              // B x F
  Value tile = g.broadcast_time(proj, config_.frames);   // B x 1 x T x F
  return g.concat_channels(mel4, tile);
}

FusionOutput FusionModel::forward(Graph& g, const Tensor& mel, const Tensor& timbre,
                                  const Tensor& middle, bool training,
                                  uint64_t dropout_seed) {
  const int b = mel.ndim() == 3 ? mel.dim(0) : 0;
  Value x = fuse(g, mel, timbre);

  for (size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i].forward(g, x);
    x = bns_[i].forward(g, x, training);
    x = g.relu(x);
    x = g.max_pool2d(x, config_.blocks[i].pool_t, config_.blocks[i].pool_f);
  }

  Value seq = g.nchw_to_tbd(x);  // T' x B x (C*F')

  std::optional<Value> middle_in;
  if (!config_.middle_selection.empty()) {
    if (middle.ndim() != 2 || middle.dim(0) != b ||
        middle.dim(1) != config_.middle_width()) {
      throw ShapeError("FusionModel: middle batch must be B x " +
                       std::to_string(config_.middle_width()) + ", got " +
                       middle.shape_str());
    }
    middle_in = g.input(middle);
    // the GRU sees the middle-level vectors at every step
    seq = g.concat_time_aux(seq, *middle_in);
  }

  for (auto& gru : grus_) seq = gru.forward(g, seq);
  Value last = g.select_time(seq, g.value(seq).dim(0) - 1);  // B x H

  Value bottleneck = middle_in ? g.concat_cols(last, *middle_in) : last;
  Value pre = bottleneck;
  if (training && config_.dropout_p > 0.0) {
    pre = g.dropout(pre, config_.dropout_p, dropout_seed);
  }
  Value logits = classifier_.forward(g, pre);
  return {logits, bottleneck};
}

ParamList FusionModel::params() {
  ParamList out;
  auto append = [&out](ParamList p) { out.insert(out.end(), p.begin(), p.end()); };
  append(timbre_proj_.params("timbre_proj"));
  for (size_t i = 0; i < convs_.size(); ++i) {
    append(convs_[i].params("conv" + std::to_string(i)));
    append(bns_[i].params("bn" + std::to_string(i)));
  }
  for (size_t i = 0; i < grus_.size(); ++i) {
    append(grus_[i].params("gru" + std::to_string(i)));
  }
  append(classifier_.params("classifier"));
  return out;
}

// --- inference helpers -----------------------------------------------------------

namespace {

Tensor rows_for(const Tensor& all, const std::vector<int>& ids) {
  if (all.size() == 0) return Tensor();
  const int d = all.dim(1);
  Tensor out({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(all.data() + static_cast<size_t>(ids[i]) * d, d,
                out.data() + i * static_cast<size_t>(d));
  }
  return out;
}

}  // namespace

Tensor chunk_scores(FusionModel& model, const pipeline::FeatureStore& store,
                    const Tensor& xvec, const Tensor& middle,
                    const std::vector<int>& chunk_ids, int batch) {
  const int k = model.config().n_classes;
  Tensor out({static_cast<int>(chunk_ids.size()), k});
  for (size_t pos = 0; pos < chunk_ids.size(); pos += static_cast<size_t>(batch)) {
    const size_t end = std::min(chunk_ids.size(), pos + static_cast<size_t>(batch));
    const std::vector<int> ids(chunk_ids.begin() + static_cast<ptrdiff_t>(pos),
                               chunk_ids.begin() + static_cast<ptrdiff_t>(end));
    Graph g;
    FusionOutput fo = model.forward(g, store.batch_mel(ids), rows_for(xvec, ids),
                                    rows_for(middle, ids), /*training=*/false);
    Value sm = g.softmax_rows(fo.logits);
    const Tensor& probs = g.value(sm);
    std::copy_n(probs.data(), probs.size(),
                out.data() + static_cast<size_t>(pos) * k);
  }
  return out;
}

TrackPrediction predict_track(const std::vector<std::vector<double>>& chunk_softmax) {
  if (chunk_softmax.empty()) {
    throw InvalidArgumentError("predict_track: need at least one chunk");
  }
  const size_t k = chunk_softmax.front().size();
  TrackPrediction out;
  out.scores.assign(k, 0.0);
  for (const auto& scores : chunk_softmax) {
    if (scores.size() != k) throw ShapeError("predict_track: ragged chunk scores");
    for (size_t j = 0; j < k; ++j) out.scores[j] += scores[j];
  }
  for (auto& s : out.scores) s /= static_cast<double>(chunk_softmax.size());
  out.label = static_cast<int>(std::max_element(out.scores.begin(), out.scores.end()) -
                               out.scores.begin());
  return out;
}

EvalResult evaluate(FusionModel& model, const pipeline::FeatureStore& store,
                    const Tensor& xvec, const Tensor& middle, data::Subset subset,
                    int batch) {
  EvalResult res;
  const int k = model.config().n_classes;
  for (const auto& [track_index, chunk_ids] : store.subset_tracks(subset)) {
    Tensor scores = chunk_scores(model, store, xvec, middle, chunk_ids, batch);
    std::vector<std::vector<double>> per_chunk;
    for (size_t i = 0; i < chunk_ids.size(); ++i) {
      per_chunk.emplace_back(scores.data() + i * static_cast<size_t>(k),
                             scores.data() + (i + 1) * static_cast<size_t>(k));
      const int label = store.chunk(chunk_ids[i]).label;
      res.chunk_true.push_back(label);
      res.chunk_pred.push_back(static_cast<int>(
          std::max_element(per_chunk.back().begin(), per_chunk.back().end()) -
          per_chunk.back().begin()));
    }
    const TrackPrediction pred = predict_track(per_chunk);
    res.song_true.push_back(store.chunk(chunk_ids[0]).label);
    res.song_pred.push_back(pred.label);
    (void)track_index;
  }
  res.song_f1 = evaluation::macro_f1(res.song_pred, res.song_true, k);
  res.chunk_f1 = evaluation::macro_f1(res.chunk_pred, res.chunk_true, k);
  return res;
}

// --- training ---------------------------------------------------------------------

TrainResult train_fusion(FusionModel& model, const pipeline::FeatureStore& store,
                         const Tensor& xvec, const Tensor& middle,
                         const FusionHyper& hyper, uint64_t seed,
                         const std::string& log_path) {
  const std::vector<int> train_ids = store.subset_chunks(data::Subset::kTrain);
  if (train_ids.empty()) throw InvalidArgumentError("train_fusion: empty training split");

  ParamList params = model.params();
  neuralcore::Adam adam(params, {hyper.lr, 0.9, 0.999, 1e-8});

  std::ofstream log;
  if (!log_path.empty()) {
    std::filesystem::path p(log_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    log.open(log_path, std::ios::trunc);
  }

  TrainResult result;
  std::vector<std::vector<double>> best_params;
  int since_best = 0;
  uint64_t dropout_counter = derive_seed(seed, "dropout");

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "fusion_epoch/" + std::to_string(epoch)));
    std::vector<int> order = train_ids;
    shuffle_rng.shuffle(order);

    double total_loss = 0.0;
    int batches = 0;
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(hyper.batch)) {
      const size_t end = std::min(order.size(), pos + static_cast<size_t>(hyper.batch));
      const std::vector<int> ids(order.begin() + static_cast<ptrdiff_t>(pos),
                                 order.begin() + static_cast<ptrdiff_t>(end));
      std::vector<int> labels;
      labels.reserve(ids.size());
      for (int ci : ids) labels.push_back(store.chunk(ci).label);
      Graph g;
      FusionOutput fo =
          model.forward(g, store.batch_mel(ids), rows_for(xvec, ids),
                        rows_for(middle, ids), /*training=*/true, ++dropout_counter);
      Value loss = g.softmax_cross_entropy(fo.logits, labels);
      neuralcore::zero_grads(params);
      g.backward(loss);
      adam.step();
      total_loss += g.value(loss)[0];
      ++batches;
    }

    EvalResult val = evaluate(model, store, xvec, middle, data::Subset::kVal, hyper.batch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total_loss / std::max(1, batches);
    rec.val_song_f1 = val.song_f1;
    rec.val_chunk_f1 = val.chunk_f1;
    result.epochs.push_back(rec);
    if (log.is_open()) {
      nlohmann::json j{{"epoch", epoch},
                       {"split", "train"},
                       {"loss", rec.train_loss},
                       {"val_song_f1", rec.val_song_f1},
                       {"val_chunk_f1", rec.val_chunk_f1}};
      log << j.dump() << "\n";
    }

    if (result.best_epoch < 0 || val.song_f1 > result.best_val_song_f1) {
      result.best_epoch = epoch;
      result.best_val_song_f1 = val.song_f1;
      best_params.clear();
      for (auto& [name, p] : params) {
        (void)name;
        best_params.push_back(p->values());
      }
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }

  // restore best-on-validation parameters
  if (!best_params.empty()) {
    for (size_t i = 0; i < params.size(); ++i) {
      params[i].second->values() = best_params[i];
    }
  }
  result.test = evaluate(model, store, xvec, middle, data::Subset::kTest, hyper.batch);
  return result;
}

Tensor select_middle(const embeddings::MiddleMatrices& mats,
                     const std::vector<MiddleTap>& selection) {
  if (selection.empty()) return Tensor();
  const int n = mats.l3.size() > 0 ? mats.l3.dim(0)
               : mats.l4.size() > 0 ? mats.l4.dim(0)
                                    : mats.l5.dim(0);
  int width = 0;
  for (MiddleTap tap : selection) width += tap_width(tap);
  Tensor out({n, width});
  int offset = 0;
  for (MiddleTap tap : selection) {
    const Tensor* src = tap == MiddleTap::kL3   ? &mats.l3
                        : tap == MiddleTap::kL4 ? &mats.l4
                                                : &mats.l5;
    const int w = tap_width(tap);
    if (src->size() == 0 || src->dim(0) != n || src->dim(1) != w) {
      throw ShapeError("select_middle: tap matrix missing or mis-sized");
    }
    for (int i = 0; i < n; ++i) {
      std::copy_n(src->data() + static_cast<size_t>(i) * w, w,
                  out.data() + static_cast<size_t>(i) * width + offset);
    }
    offset += w;
  }
  return out;
}

}  // namespace voxid::model
