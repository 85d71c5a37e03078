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

#include "voxid/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "voxid/errors.hpp"
#include "voxid/io.hpp"
#include "voxid/neuralcore/optim.hpp"

namespace voxid::embeddings {

using neuralcore::Graph;
using neuralcore::ParamList;
using neuralcore::Tensor;
using neuralcore::Value;

// --- TdnnConfig / XVectorNet ---------------------------------------------------

void TdnnConfig::validate() const {
  if (in_dim < 1) throw ConfigError("TdnnConfig: in_dim must be >= 1");
  if (channels.empty()) throw ConfigError("TdnnConfig: need at least one TDNN layer");
  if (channels.size() != dilations.size() || channels.size() != kernels.size()) {
    throw ConfigError("TdnnConfig: channels/dilations/kernels sizes must agree");
  }
  for (int k : kernels) {
    if (k != 1 && k != 3) throw ConfigError("TdnnConfig: kernels must be 1 or 3");
  }
  if (embed_dim < 1) throw ConfigError("TdnnConfig: embed_dim must be >= 1");
  if (n_classes < 2) throw ConfigError("TdnnConfig: need at least 2 classes");
}

XVectorNet::XVectorNet(TdnnConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, "xvector_init"));
  int in_dim = config_.in_dim;
  for (size_t i = 0; i < config_.channels.size(); ++i) {
    tdnn_.emplace_back(in_dim, config_.channels[i], config_.kernels[i],
                       config_.dilations[i], rng);
    in_dim = config_.channels[i];
  }
  emb1_ = neuralcore::Dense(2 * in_dim, config_.embed_dim, rng);
  emb2_ = neuralcore::Dense(config_.embed_dim, config_.embed_dim, rng);
  head_ = neuralcore::Dense(config_.embed_dim, config_.n_classes, rng);
}

Value XVectorNet::embed(Graph& g, Value mel_batch) {
  const Tensor& t = g.value(mel_batch);
  if (t.ndim() != 3) throw ShapeError("XVectorNet: expected B x T x F input");
  if (t.dim(1) < 1) throw InvalidArgumentError("XVectorNet: zero frames");
  if (t.dim(2) != config_.in_dim) {
    throw ShapeError("XVectorNet: mel width " + std::to_string(t.dim(2)) +
                     " != configured " + std::to_string(config_.in_dim));
  }
  Value x = mel_batch;
  for (auto& layer : tdnn_) x = g.relu(layer.forward(g, x));
  Value pooled = g.stats_pool_time(x);  // B x 2C
  return emb1_.forward(g, pooled);      // pre-activation x-vector
}

Value XVectorNet::logits(Graph& g, Value mel_batch) {
  Value e = g.relu(embed(g, mel_batch));
  Value h = g.relu(emb2_.forward(g, e));
  return head_.forward(g, h);
}

ParamList XVectorNet::params() {
  ParamList out;
  for (size_t i = 0; i < tdnn_.size(); ++i) {
    auto p = tdnn_[i].params("tdnn" + std::to_string(i));
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto& [layer, name] : std::initializer_list<std::pair<neuralcore::Dense*, std::string>>{
           {&emb1_, "emb1"}, {&emb2_, "emb2"}, {&head_, "head"}}) {
    auto p = layer->params(name);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

// --- shared training loop --------------------------------------------------------

namespace {

std::vector<std::vector<int>> make_batches(std::vector<int> indices, int batch,
                                           uint64_t seed, int epoch) {
  Rng rng(derive_seed(seed, "epoch/" + std::to_string(epoch)));
  rng.shuffle(indices);
  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < indices.size(); i += static_cast<size_t>(batch)) {
    const size_t end = std::min(indices.size(), i + static_cast<size_t>(batch));
    batches.emplace_back(indices.begin() + static_cast<ptrdiff_t>(i),
                         indices.begin() + static_cast<ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace

TrainLog train_xvector(XVectorNet& net, const pipeline::FeatureStore& store,
                       const TrainHyper& hyper, uint64_t seed) {
  const std::vector<int> train_ids = store.subset_chunks(data::Subset::kTrain);
  if (train_ids.empty()) throw InvalidArgumentError("train_xvector: empty training split");
  {
    std::set<int> distinct;
    for (int ci : train_ids) distinct.insert(store.chunk(ci).label);
    if (distinct.size() < 2) {
      throw InvalidArgumentError(
          "train_xvector: training split has a single singer; need >= 2");
    }
  }

  ParamList params = net.params();
  neuralcore::Adam adam(params, {hyper.lr, 0.9, 0.999, 1e-8});
  TrainLog log;

  // loss before any update, on the first deterministic batch
  {
    auto batches = make_batches(train_ids, hyper.batch, seed, 0);
    Graph g;
    std::vector<int> labels;
    for (int ci : batches[0]) labels.push_back(store.chunk(ci).label);
    Value mel = g.input(store.batch_mel(batches[0]));
    Value loss = g.softmax_cross_entropy(net.logits(g, mel), labels);
    log.first_loss = g.value(loss)[0];
  }

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    double total = 0.0;
    int count = 0;
    for (const auto& batch : make_batches(train_ids, hyper.batch, seed, epoch)) {
      std::vector<int> labels;
      labels.reserve(batch.size());
      for (int ci : batch) labels.push_back(store.chunk(ci).label);
      Graph g;
      Value mel = g.input(store.batch_mel(batch));
      Value loss = g.softmax_cross_entropy(net.logits(g, mel), labels);
      neuralcore::zero_grads(params);
      g.backward(loss);
      adam.step();
      total += g.value(loss)[0];
      ++count;
    }
    log.epoch_losses.push_back(total / std::max(1, count));
  }
  log.last_loss = log.epoch_losses.empty() ? log.first_loss : log.epoch_losses.back();
  return log;
}

TimbreEmbedding extract_xvector(const dsp::MelSpectrogram& mel, XVectorNet& net) {
  if (mel.frames < 1) throw InvalidArgumentError("extract_xvector: zero frames");
  Tensor t({1, mel.frames, mel.n_mels});
  std::copy(mel.values.begin(), mel.values.end(), t.data());
  // standardize exactly as the training pipeline does
  Tensor flat = Tensor::from_data({mel.frames, mel.n_mels},
                                  std::vector<double>(mel.values.begin(), mel.values.end()));
  pipeline::standardize(flat);
  std::copy(flat.data(), flat.data() + flat.size(), t.data());

  Graph g;
  Value v = net.embed(g, g.input(std::move(t)));
  const Tensor& e = g.value(v);
  TimbreEmbedding out;
  out.values.assign(e.data(), e.data() + e.size());
  return out;
}

neuralcore::Tensor extract_xvectors_all(XVectorNet& net,
                                        const pipeline::FeatureStore& store,
                                        int jobs) {
  const int n = store.n_chunks();
  const int e = net.config().embed_dim;
  Tensor out({n, e});
  std::vector<std::function<void()>> tasks;
  tasks.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    tasks.push_back([&net, &store, &out, i, e]() {
      Graph g;
      Value mel = g.input(store.batch_mel({i}));
      // frozen extraction: per-sample forwards are independent, so chunk
      // parallelism cannot change any value
      Value emb = net.embed(g, mel);
      const Tensor& v = g.value(emb);
      std::copy_n(v.data(), e, out.data() + static_cast<size_t>(i) * e);
    });
  }
  pipeline::run_parallel(tasks, jobs);
  return out;
}

// --- InceptionLite ---------------------------------------------------------------

namespace {
constexpr double kHeadCenter = 5.5;  // midpoint of the [1, 10] score range
constexpr double kHeadScale = 2.0;
}  // namespace

void InceptionLiteConfig::validate() const {
  if (in_mels < 1) throw ConfigError("InceptionLiteConfig: in_mels must be >= 1");
  if (l5_width != kL5Width || l4_width != kL4Width || l3_width != kL3Width) {
    throw ConfigError(
        "InceptionLiteConfig: tap widths must be (L3, L4, L5) = (128, 128, 256); got (" +
        std::to_string(l3_width) + ", " + std::to_string(l4_width) + ", " +
        std::to_string(l5_width) + ")");
  }
  if (stem_channels < 1 || block1_channels < 8) {
    throw ConfigError("InceptionLiteConfig: bad channel widths");
  }
  if (dense1 < 1 || dense2 < 1) throw ConfigError("InceptionLiteConfig: bad dense widths");
}

InceptionLiteNet::Block InceptionLiteNet::make_block(int in_channels, int out_channels,
                                                     voxid::Rng& rng) {
  // branch widths: 1x1 half, 3x3 quarter, stacked-3x3 eighth, projection
  // takes the remainder
  const int w1 = out_channels / 2;
  const int w3 = out_channels / 4;
  const int w5 = out_channels / 8;
  const int wp = out_channels - w1 - w3 - w5;
  if (w5 < 2 || wp < 2) {
    throw ConfigError("inception block too narrow: " + std::to_string(out_channels));
  }
  const int r3 = std::max(4, w3 / 2);
  const int r5 = std::max(4, w5 / 2);
  Block b;
  b.b1 = neuralcore::Conv2d(in_channels, w1, 1, 1, 1, 0, rng);
  b.b3_red = neuralcore::Conv2d(in_channels, r3, 1, 1, 1, 0, rng);
  b.b3 = neuralcore::Conv2d(r3, w3, 3, 3, 1, 1, rng);
  b.b5_red = neuralcore::Conv2d(in_channels, r5, 1, 1, 1, 0, rng);
  b.b5a = neuralcore::Conv2d(r5, r5, 3, 3, 1, 1, rng);
  b.b5b = neuralcore::Conv2d(r5, w5, 3, 3, 1, 1, rng);
  b.proj = neuralcore::Conv2d(in_channels, wp, 1, 1, 1, 0, rng);
  return b;
}

Value InceptionLiteNet::Block::forward(Graph& g, Value x) {
  Value v1 = g.relu(b1.forward(g, x));
  Value v3 = g.relu(b3.forward(g, g.relu(b3_red.forward(g, x))));
  Value v5 = g.relu(b5b.forward(g, g.relu(b5a.forward(g, g.relu(b5_red.forward(g, x))))));
  Value vp = g.relu(proj.forward(g, x));
  return g.concat_channels(g.concat_channels(v1, v3), g.concat_channels(v5, vp));
}

ParamList InceptionLiteNet::Block::params(const std::string& prefix) {
  ParamList out;
  for (auto& [conv, name] :
       std::initializer_list<std::pair<neuralcore::Conv2d*, std::string>>{
           {&b1, "b1"},         {&b3_red, "b3_red"}, {&b3, "b3"},
           {&b5_red, "b5_red"}, {&b5a, "b5a"},       {&b5b, "b5b"},
           {&proj, "proj"}}) {
    auto p = conv->params(prefix + "." + name);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

InceptionLiteNet::InceptionLiteNet(InceptionLiteConfig config, uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, "inception_init"));
  stem_ = neuralcore::Conv2d(1, config_.stem_channels, 3, 3, 1, 1, rng);
  block1_ = make_block(config_.stem_channels, config_.block1_channels, rng);
  block2_ = make_block(config_.block1_channels, config_.l5_width, rng);
  block3_ = make_block(config_.l5_width, config_.l4_width, rng);
  block4_ = make_block(config_.l4_width, config_.l3_width, rng);
  d1_ = neuralcore::Dense(config_.l3_width, config_.dense1, rng);
  d2_ = neuralcore::Dense(config_.dense1, config_.dense2, rng);
  head_ = neuralcore::Dense(config_.dense2, data::kNumPerceptual, rng);
}

InceptionLiteNet::Taps InceptionLiteNet::forward(Graph& g, Value mel4) {
  const Tensor& t = g.value(mel4);
  if (t.ndim() != 4 || t.dim(1) != 1) {
    throw ShapeError("InceptionLiteNet: expected B x 1 x T x F input");
  }
  if (t.dim(3) != config_.in_mels) {
    throw ShapeError("InceptionLiteNet: mel width " + std::to_string(t.dim(3)) +
                     " != configured " + std::to_string(config_.in_mels));
  }
  Value x = g.relu(stem_.forward(g, mel4));
  x = g.max_pool2d(x, config_.stem_pool_t, config_.stem_pool_f);
  x = block1_.forward(g, x);
  x = g.max_pool2d(x, config_.block1_pool_t, config_.block1_pool_f);
  Value b2 = block2_.forward(g, x);       // inverse 5th layer
  Value b2p = g.max_pool2d(b2, config_.block2_pool_t, config_.block2_pool_f);
  Value b3 = block3_.forward(g, b2p);     // inverse 4th layer
  Value b4 = block4_.forward(g, b3);      // inverse 3rd layer

  Taps taps;
  taps.l5 = g.global_avg_pool(b2p);
  taps.l4 = g.global_avg_pool(b3);
  taps.l3 = g.global_avg_pool(b4);
  Value h = g.relu(d1_.forward(g, taps.l3));
  h = g.relu(d2_.forward(g, h));
  // fixed affine de-normalization: the head works in ~N(0,1) range and is
  // mapped onto the center of the [1, 10] score scale
  Value raw = head_.forward(g, h);
  taps.perceptual = g.add_row_bias(
      g.scale(raw, kHeadScale),
      g.input(Tensor::full({data::kNumPerceptual}, kHeadCenter)));
  return taps;
}

ParamList InceptionLiteNet::params() {
  ParamList out;
  auto append = [&out](ParamList p) { out.insert(out.end(), p.begin(), p.end()); };
  append(stem_.params("stem"));
  append(block1_.params("block1"));
  append(block2_.params("block2"));
  append(block3_.params("block3"));
  append(block4_.params("block4"));
  append(d1_.params("dense1"));
  append(d2_.params("dense2"));
  append(head_.params("head"));
  return out;
}

TrainLog train_middle_level(InceptionLiteNet& net, const pipeline::FeatureStore& store,
                            const TrainHyper& hyper, uint64_t seed) {
  const std::vector<int> train_ids = store.subset_chunks(data::Subset::kTrain);
  if (train_ids.empty()) {
    throw InvalidArgumentError("train_middle_level: empty training split");
  }
  for (int ci : train_ids) {
    const auto& track = store.manifest().tracks[static_cast<size_t>(
        store.chunk(ci).track_index)];
    if (!track.perceptual.has_value()) {
      throw InvalidArgumentError("train_middle_level: track " + track.track_id +
                                 " has no perceptual targets");
    }
  }

  auto targets_for = [&store](const std::vector<int>& batch) {
    Tensor t({static_cast<int>(batch.size()), data::kNumPerceptual});
    for (size_t i = 0; i < batch.size(); ++i) {
      const auto& track = store.manifest().tracks[static_cast<size_t>(
          store.chunk(batch[i]).track_index)];
      for (int j = 0; j < data::kNumPerceptual; ++j) {
        t.at(static_cast<int>(i), j) = (*track.perceptual)[static_cast<size_t>(j)];
      }
    }
    return t;
  };

  ParamList params = net.params();
  neuralcore::Adam adam(params, {hyper.lr, 0.9, 0.999, 1e-8});
  TrainLog log;

  {
    auto batches = make_batches(train_ids, hyper.batch, seed, 0);
    Graph g;
    const auto& b0 = batches[0];
    Tensor mel = store.batch_mel(b0);
    Value mel4 = g.reshape(g.input(std::move(mel)),
                           {static_cast<int>(b0.size()), 1, store.frames(), store.n_mels()});
    auto taps = net.forward(g, mel4);
    Value loss = g.mse_loss(taps.perceptual, targets_for(b0));
    log.first_loss = g.value(loss)[0];
  }

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    double total = 0.0;
    int count = 0;
    for (const auto& batch : make_batches(train_ids, hyper.batch, seed, epoch)) {
      Graph g;
      Tensor mel = store.batch_mel(batch);
      Value mel4 = g.reshape(g.input(std::move(mel)),
                             {static_cast<int>(batch.size()), 1, store.frames(),
                              store.n_mels()});
      auto taps = net.forward(g, mel4);
      Value loss = g.mse_loss(taps.perceptual, targets_for(batch));
      neuralcore::zero_grads(params);
      g.backward(loss);
      adam.step();
      total += g.value(loss)[0];
      ++count;
    }
    log.epoch_losses.push_back(total / std::max(1, count));
  }
  log.last_loss = log.epoch_losses.empty() ? log.first_loss : log.epoch_losses.back();
  return log;
}

MiddleLevelFeatures extract_middle_level(const dsp::MelSpectrogram& mel,
                                         InceptionLiteNet& net) {
  if (mel.frames < 1) throw InvalidArgumentError("extract_middle_level: zero frames");
  Tensor flat = Tensor::from_data(
      {mel.frames, mel.n_mels}, std::vector<double>(mel.values.begin(), mel.values.end()));
  pipeline::standardize(flat);
  Graph g;
  Value mel4 = g.reshape(g.input(std::move(flat)), {1, 1, mel.frames, mel.n_mels});
  auto taps = net.forward(g, mel4);

  MiddleLevelFeatures out;
  const Tensor& l3 = g.value(taps.l3);
  const Tensor& l4 = g.value(taps.l4);
  const Tensor& l5 = g.value(taps.l5);
  const Tensor& p = g.value(taps.perceptual);
  out.l3.assign(l3.data(), l3.data() + l3.size());
  out.l4.assign(l4.data(), l4.data() + l4.size());
  out.l5.assign(l5.data(), l5.data() + l5.size());
  for (int j = 0; j < data::kNumPerceptual; ++j) {
    out.perceptual[static_cast<size_t>(j)] = std::clamp(p[j], 1.0, 10.0);
  }
  return out;
}

MiddleMatrices extract_middle_all(InceptionLiteNet& net,
                                  const pipeline::FeatureStore& store, int jobs) {
  const int n = store.n_chunks();
  MiddleMatrices out;
  out.l3 = Tensor({n, kL3Width});
  out.l4 = Tensor({n, kL4Width});
  out.l5 = Tensor({n, kL5Width});
  out.perceptual = Tensor({n, data::kNumPerceptual});
  std::vector<std::function<void()>> tasks;
  tasks.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    tasks.push_back([&net, &store, &out, i]() {
      Graph g;
      Tensor mel = store.batch_mel({i});
      Value mel4 =
          g.reshape(g.input(std::move(mel)), {1, 1, store.frames(), store.n_mels()});
      auto taps = net.forward(g, mel4);
      std::copy_n(g.value(taps.l3).data(), kL3Width,
                  out.l3.data() + static_cast<size_t>(i) * kL3Width);
      std::copy_n(g.value(taps.l4).data(), kL4Width,
                  out.l4.data() + static_cast<size_t>(i) * kL4Width);
      std::copy_n(g.value(taps.l5).data(), kL5Width,
                  out.l5.data() + static_cast<size_t>(i) * kL5Width);
      const Tensor& p = g.value(taps.perceptual);
      for (int j = 0; j < data::kNumPerceptual; ++j) {
        out.perceptual.at(i, j) = std::clamp(p[j], 1.0, 10.0);
      }
    });
  }
  pipeline::run_parallel(tasks, jobs);
  return out;
}

// --- embedding files ----------------------------------------------------------

void save_embedding_file(const std::filesystem::path& path,
                         const std::vector<double>& values) {
  io::FeatureMatrix fm;
  fm.frames = 1;
  fm.bins = static_cast<uint32_t>(values.size());
  fm.values.assign(values.begin(), values.end());
  io::write_vxf(path, fm);
}

std::vector<double> load_embedding_file(const std::filesystem::path& path,
                                        int expected_len) {
  const io::FeatureMatrix fm = io::read_vxf(path);
  if (fm.frames != 1) {
    throw CorruptFileError("embedding file must have frames=1: " + path.string());
  }
  if (expected_len >= 0 && static_cast<int>(fm.bins) != expected_len) {
    throw DimensionError("embedding length " + std::to_string(fm.bins) +
                         " != configured " + std::to_string(expected_len) + " in " +
                         path.string());
  }
  return {fm.values.begin(), fm.values.end()};
}

neuralcore::Tensor load_chunk_embeddings_dir(const pipeline::FeatureStore& store,
                                             const std::filesystem::path& dir,
                                             int expected_len) {
  const int n = store.n_chunks();
  Tensor out({n, expected_len});
  for (int i = 0; i < n; ++i) {
    const auto& c = store.chunk(i);
    const auto path =
        dir / c.track_id / (pipeline::format_start_seconds(c.start_s) + ".vxf");
    const std::vector<double> v = load_embedding_file(path, expected_len);
    std::copy(v.begin(), v.end(), out.data() + static_cast<size_t>(i) * expected_len);
  }
  return out;
}

MiddleMatrices load_middle_dir(const pipeline::FeatureStore& store,
                               const std::filesystem::path& dir) {
  MiddleMatrices out;
  out.l3 = load_chunk_embeddings_dir(store, dir / "l3", kL3Width);
  out.l4 = load_chunk_embeddings_dir(store, dir / "l4", kL4Width);
  out.l5 = load_chunk_embeddings_dir(store, dir / "l5", kL5Width);
  return out;
}

}  // namespace voxid::embeddings
