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

#include <cmath>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "voxid/errors.hpp"
#include "voxid/io.hpp"
#include "voxid/neuralcore/optim.hpp"

using namespace voxid;
using embeddings::InceptionLiteConfig;
using embeddings::InceptionLiteNet;
using embeddings::TdnnConfig;
using embeddings::XVectorNet;
using neuralcore::Graph;
using neuralcore::Tensor;

namespace {

dsp::MelSpectrogram random_mel(int frames, int mels, uint64_t seed) {
  dsp::MelSpectrogram m;
  m.frames = frames;
  m.n_mels = mels;
  m.sample_rate = 16000;
  m.values.resize(static_cast<size_t>(frames) * mels);
  Rng rng(seed);
  for (auto& v : m.values) v = rng.normal(-5.0, 2.0);
  return m;
}

TdnnConfig small_tdnn() {
  TdnnConfig tc;
  tc.in_dim = 16;
  tc.channels = {8, 8, 8};
  tc.dilations = {1, 2, 3};
  tc.kernels = {3, 3, 3};
  tc.embed_dim = 6;
  tc.n_classes = 2;
  return tc;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb + 1e-30);
}

}  // namespace

TEST_CASE("x-vector length is duration invariant") {
  XVectorNet net(small_tdnn(), 5);
  for (int frames : {10, 938}) {
    const auto emb = embeddings::extract_xvector(random_mel(frames, 16, 1), net);
    CHECK(emb.values.size() == 6);
    for (double v : emb.values) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(embeddings::extract_xvector(random_mel(0, 16, 1), net),
                  InvalidArgumentError);
}

TEST_CASE("context width 1 makes the embedding frame-permutation invariant") {
  TdnnConfig tc = small_tdnn();
  tc.kernels = {1, 1, 1};  // per-frame map + statistics pooling
  XVectorNet net(tc, 5);

  dsp::MelSpectrogram mel = random_mel(12, 16, 3);
  dsp::MelSpectrogram permuted = mel;
  // rotate frames by 5
  for (int t = 0; t < 12; ++t) {
    for (int f = 0; f < 16; ++f) {
      permuted.values[static_cast<size_t>(t) * 16 + f] =
          mel.values[(static_cast<size_t>((t + 5) % 12)) * 16 + f];
    }
  }
  const auto a = embeddings::extract_xvector(mel, net);
  const auto b = embeddings::extract_xvector(permuted, net);
  for (size_t i = 0; i < a.values.size(); ++i) {
    CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-10));
  }

  // with real temporal context the same permutation changes the embedding
  XVectorNet ctx_net(small_tdnn(), 5);
  const auto c = embeddings::extract_xvector(mel, ctx_net);
  const auto d = embeddings::extract_xvector(permuted, ctx_net);
  double diff = 0;
  for (size_t i = 0; i < c.values.size(); ++i) diff += std::abs(c.values[i] - d.values[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("x-vector training on the tiny corpus") {
  auto corpus = voxid_test::make_tiny_corpus("xvec", 3, 2, 21);
  auto& store = *corpus.store;

  TdnnConfig tc = small_tdnn();
  tc.n_classes = store.n_classes();
  embeddings::TrainHyper hyper{3, 8, 2e-3};

  XVectorNet net(tc, 42);
  const auto log = embeddings::train_xvector(net, store, hyper, 42);

  SUBCASE("loss decreases from the untrained baseline") {
    CHECK(log.epoch_losses.front() < log.first_loss);
    CHECK(log.last_loss < log.first_loss);
  }
  SUBCASE("held-out accuracy beats chance") {
    const auto test_ids = store.subset_chunks(data::Subset::kTest);
    REQUIRE(!test_ids.empty());
    int correct = 0;
    for (int ci : test_ids) {
      Graph g;
      auto logits = net.logits(g, g.input(store.batch_mel({ci})));
      const Tensor& row = g.value(logits);
      int arg = 0;
      for (int k = 1; k < row.dim(1); ++k) {
        if (row[k] > row[arg]) arg = k;
      }
      if (arg == store.chunk(ci).label) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(test_ids.size());
    CHECK(acc > 1.0 / store.n_classes());
  }
  SUBCASE("same seed reproduces the checkpoint bit-exactly") {
    XVectorNet net2(tc, 42);
    embeddings::train_xvector(net2, store, hyper, 42);
    voxid_test::TempDir dir("xvec_ckpt");
    auto p1 = net.params();
    auto p2 = net2.params();
    neuralcore::save_checkpoint(dir.path() / "a.vxc", p1);
    neuralcore::save_checkpoint(dir.path() / "b.vxc", p2);
    CHECK(io::read_file_bytes(dir.path() / "a.vxc") ==
          io::read_file_bytes(dir.path() / "b.vxc"));
  }
  SUBCASE("trained embeddings separate singers (cosine check)") {
    const auto emb = embeddings::extract_xvectors_all(net, store, 2);
    double same = 0, cross = 0;
    int n_same = 0, n_cross = 0;
    for (int i = 0; i < store.n_chunks(); ++i) {
      for (int j = i + 1; j < store.n_chunks(); ++j) {
        std::vector<double> a(emb.data() + static_cast<size_t>(i) * 6,
                              emb.data() + static_cast<size_t>(i) * 6 + 6);
        std::vector<double> b(emb.data() + static_cast<size_t>(j) * 6,
                              emb.data() + static_cast<size_t>(j) * 6 + 6);
        if (store.chunk(i).label == store.chunk(j).label) {
          same += cosine(a, b);
          ++n_same;
        } else {
          cross += cosine(a, b);
          ++n_cross;
        }
      }
    }
    CHECK(same / n_same > cross / n_cross);
  }
}

TEST_CASE("single-class training split is rejected") {
  voxid_test::TempDir dir("single");
  data::SynthSpec spec;
  spec.n_artists = 2;
  spec.albums_per_artist = 3;
  spec.tracks_per_album = 1;
  spec.track_duration_s = 5.0;
  spec.seed = 3;
  const auto manifest = data::generate_synthetic_corpus(spec, dir.path(), 2);
  // adversarial split: artist0 only in train
  data::Split split;
  for (const auto& t : manifest.tracks) {
    split.albums[t.album_id] = t.artist_id == "artist00" ? data::Subset::kTrain
                                                         : data::Subset::kTest;
  }
  pipeline::FeatureStore store(manifest, split, voxid_test::tiny_dsp_config(), 4.0,
                               2.0, dir.path(), dir.path() / "cache");
  store.extract_all(2);
  TdnnConfig tc = small_tdnn();
  XVectorNet net(tc, 1);
  CHECK_THROWS_AS(embeddings::train_xvector(net, store, {1, 8, 1e-3}, 1),
                  InvalidArgumentError);
}

TEST_CASE("inception-lite tap dimensions are pinned") {
  InceptionLiteConfig cfg;
  cfg.in_mels = 16;
  cfg.stem_channels = 4;
  cfg.block1_channels = 16;
  cfg.stem_pool_t = 4;
  cfg.stem_pool_f = 2;
  cfg.dense1 = 8;
  cfg.dense2 = 8;
  InceptionLiteNet net(cfg, 7);

  SUBCASE("dims are (128, 128, 256, 7) for any valid input") {
    for (int frames : {124, 60}) {
      const auto feats = embeddings::extract_middle_level(random_mel(frames, 16, 2), net);
      CHECK(feats.l3.size() == 128);
      CHECK(feats.l4.size() == 128);
      CHECK(feats.l5.size() == 256);
      for (double v : feats.perceptual) {
        CHECK(v >= 1.0);
        CHECK(v <= 10.0);
      }
    }
  }
  SUBCASE("configs violating the tap widths are rejected before training") {
    InceptionLiteConfig bad = cfg;
    bad.l4_width = 64;
    CHECK_THROWS_AS(InceptionLiteNet(bad, 1), ConfigError);
    bad = cfg;
    bad.l5_width = 512;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("middle-level training") {
  auto corpus = voxid_test::make_tiny_corpus("middle", 2, 2, 31);
  auto& store = *corpus.store;

  InceptionLiteConfig cfg;
  cfg.in_mels = 16;
  cfg.stem_channels = 4;
  cfg.block1_channels = 16;
  cfg.dense1 = 8;
  cfg.dense2 = 8;

  SUBCASE("constant-target corpus converges to the constant") {
    // overwrite targets with a constant
    auto manifest = corpus.manifest;
    for (auto& t : manifest.tracks) t.perceptual = {{6, 6, 6, 6, 6, 6, 6}};
    pipeline::FeatureStore store2(manifest, corpus.split, voxid_test::tiny_dsp_config(),
                                  4.0, 2.0, corpus.dir->path(),
                                  corpus.dir->path() / "cache");
    store2.preload(2);
    InceptionLiteNet net(cfg, 3);
    embeddings::train_middle_level(net, store2, {100, 8, 1e-2}, 3);
    double mae = 0;
    int count = 0;
    for (int ci : store2.subset_chunks(data::Subset::kTrain)) {
      Graph g;
      Tensor mel = store2.batch_mel({ci});
      auto taps = net.forward(
          g, g.reshape(g.input(std::move(mel)), {1, 1, store2.frames(), store2.n_mels()}));
      const Tensor& p = g.value(taps.perceptual);
      for (int j = 0; j < 7; ++j) {
        mae += std::abs(p[j] - 6.0);
        ++count;
      }
    }
    CHECK(mae / count < 0.1);
  }
  SUBCASE("training beats the untrained head on every target and is seed-stable") {
    InceptionLiteNet untrained(cfg, 11);
    InceptionLiteNet trained(cfg, 11);
    const auto log = embeddings::train_middle_level(trained, store, {150, 8, 1e-2}, 11);
    CHECK(log.last_loss < log.first_loss);

    std::array<double, 7> mae_untrained{}, mae_trained{};
    auto accumulate_mae = [&store](InceptionLiteNet& net, int ci,
                                   std::array<double, 7>& acc) {
      const auto& track =
          store.manifest().tracks[static_cast<size_t>(store.chunk(ci).track_index)];
      Graph g;
      Tensor mel = store.batch_mel({ci});
      auto taps = net.forward(
          g, g.reshape(g.input(std::move(mel)), {1, 1, store.frames(), store.n_mels()}));
      const Tensor& p = g.value(taps.perceptual);
      for (int j = 0; j < 7; ++j) {
        const double clamped = std::clamp(p[j], 1.0, 10.0);
        acc[static_cast<size_t>(j)] +=
            std::abs(clamped - (*track.perceptual)[static_cast<size_t>(j)]);
      }
    };
    for (int ci : store.subset_chunks(data::Subset::kTrain)) {
      accumulate_mae(untrained, ci, mae_untrained);
      accumulate_mae(trained, ci, mae_trained);
    }
    for (int j = 0; j < 7; ++j) {
      CHECK(mae_trained[static_cast<size_t>(j)] < mae_untrained[static_cast<size_t>(j)]);
    }

    // bit-exact rerun
    InceptionLiteNet rerun(cfg, 11);
    embeddings::train_middle_level(rerun, store, {150, 8, 1e-2}, 11);
    voxid_test::TempDir dir("mid_ckpt");
    auto p1 = trained.params();
    auto p2 = rerun.params();
    neuralcore::save_checkpoint(dir.path() / "a.vxc", p1);
    neuralcore::save_checkpoint(dir.path() / "b.vxc", p2);
    CHECK(io::read_file_bytes(dir.path() / "a.vxc") ==
          io::read_file_bytes(dir.path() / "b.vxc"));
  }
}

TEST_CASE("embedding files") {
  voxid_test::TempDir dir("embfile");
  std::vector<double> vec(64);
  Rng rng(6);
  for (auto& v : vec) v = rng.normal();
  const auto path = dir.path() / "e.vxf";
  embeddings::save_embedding_file(path, vec);

  SUBCASE("round trip within f32 precision") {
    const auto back = embeddings::load_embedding_file(path, 64);
    REQUIRE(back.size() == vec.size());
    for (size_t i = 0; i < vec.size(); ++i) {
      CHECK(back[i] == doctest::Approx(vec[i]).epsilon(1e-6));
    }
  }
  SUBCASE("truncated file is a corrupt-file error") {
    auto bytes = io::read_file_bytes(path);
    bytes.resize(bytes.size() - 3);
    io::write_file_bytes(path, bytes);
    CHECK_THROWS_AS(embeddings::load_embedding_file(path, 64), CorruptFileError);
  }
  SUBCASE("512-length file under a 64-length config is a dimension error") {
    embeddings::save_embedding_file(dir.path() / "big.vxf", std::vector<double>(512, 1.0));
    CHECK_THROWS_AS(embeddings::load_embedding_file(dir.path() / "big.vxf", 64),
                    DimensionError);
  }
}

TEST_CASE("file-sourced per-chunk embeddings") {
  auto corpus = voxid_test::make_tiny_corpus("embdir", 2, 1, 17);
  auto& store = *corpus.store;
  voxid_test::TempDir dir("embdir_files");
  // write one 8-d embedding per chunk
  for (int i = 0; i < store.n_chunks(); ++i) {
    const auto& c = store.chunk(i);
    std::vector<double> v(8, static_cast<double>(i));
    embeddings::save_embedding_file(
        dir.path() / c.track_id /
            (pipeline::format_start_seconds(c.start_s) + ".vxf"),
        v);
  }
  const Tensor all = embeddings::load_chunk_embeddings_dir(store, dir.path(), 8);
  CHECK(all.shape() == std::vector<int>{store.n_chunks(), 8});
  CHECK(all.at(3, 0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(embeddings::load_chunk_embeddings_dir(store, dir.path(), 16),
                  DimensionError);
}
