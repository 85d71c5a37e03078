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

#include "voxid/data.hpp"

#include <fstream>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "voxid/dsp.hpp"
#include "voxid/errors.hpp"
#include "voxid/io.hpp"
#include "voxid/rng.hpp"

using namespace voxid;
using data::DatasetManifest;
using data::Subset;
using data::SynthSpec;
using data::TrackRecord;

namespace {

DatasetManifest make_manifest(int artists, int albums, int tracks) {
  DatasetManifest m;
  for (int a = 0; a < artists; ++a) {
    for (int b = 0; b < albums; ++b) {
      for (int t = 0; t < tracks; ++t) {
        TrackRecord r;
        r.artist_id = "artist" + std::to_string(a);
        r.album_id = "artist" + std::to_string(a) + "_alb" + std::to_string(b);
        r.track_id = "a" + std::to_string(a) + "b" + std::to_string(b) + "t" +
                     std::to_string(t);
        r.audio_path = "audio/" + r.track_id + ".wav";
        r.duration_s = 30.0;
        m.tracks.push_back(r);
      }
    }
  }
  return m;
}

}  // namespace

TEST_CASE("manifest round trip and validation") {
  voxid_test::TempDir dir("manifest");
  DatasetManifest m = make_manifest(2, 3, 2);
  m.tracks[0].perceptual = {{5, 5, 5, 5, 5, 5, 5}};
  // mixed presence is rejected on save; give everyone targets
  for (auto& t : m.tracks) t.perceptual = {{5, 5.5, 4.5, 6, 5, 6.5, 5.2}};
  const auto path = dir.path() / "manifest.csv";
  data::save_manifest(path, m);
  const DatasetManifest back = data::load_manifest(path);
  REQUIRE(back.tracks.size() == m.tracks.size());
  CHECK(back.tracks[3].track_id == m.tracks[3].track_id);
  CHECK((*back.tracks[3].perceptual)[1] == doctest::Approx(5.5));

  SUBCASE("reloading an emitted manifest is idempotent") {
    data::save_manifest(dir.path() / "again.csv", back);
    const auto bytes1 = io::read_file_bytes(path);
    const auto bytes2 = io::read_file_bytes(dir.path() / "again.csv");
    CHECK(bytes1 == bytes2);
  }
  SUBCASE("20 artists encode to indices 0..19 in lexicographic order") {
    DatasetManifest big = make_manifest(20, 1, 1);
    const auto labels = big.encode_labels();
    CHECK(labels.size() == 20);
    CHECK(labels.at("artist0") == 0);
    // lexicographic: artist1 < artist10 < artist11 < ... < artist2
    CHECK(labels.at("artist1") == 1);
    CHECK(labels.at("artist10") == 2);
    CHECK(labels.at("artist2") == 12);
  }
}

TEST_CASE("manifest parse errors carry line numbers") {
  voxid_test::TempDir dir("manifest_err");
  const auto path = dir.path() / "bad.csv";

  SUBCASE("unknown header field") {
    std::ofstream(path) << "artist_id,album_id,track_id,audio_path,bitrate\n";
    CHECK_THROWS_WITH_AS(data::load_manifest(path),
                         doctest::Contains("line 1"), DataError);
  }
  SUBCASE("duplicate track row names the row") {
    std::ofstream(path) << "artist_id,album_id,track_id,audio_path,duration_s\n"
                           "a,alb,t1,x.wav,30\n"
                           "a,alb,t1,x.wav,30\n";
    try {
      data::load_manifest(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("t1") != std::string::npos);
      CHECK(msg.find("line 3") != std::string::npos);
    }
  }
  SUBCASE("bad duration") {
    std::ofstream(path) << "artist_id,album_id,track_id,audio_path,duration_s\n"
                           "a,alb,t1,x.wav,-3\n";
    CHECK_THROWS_AS(data::load_manifest(path), DataError);
  }
  SUBCASE("perceptual outside [1,10]") {
    std::ofstream(path)
        << "artist_id,album_id,track_id,audio_path,duration_s,melodiousness,"
           "articulation,rhythmic_complexity,rhythmic_stability,dissonance,"
           "tonal_stability,modality\n"
           "a,alb,t1,x.wav,30,11,5,5,5,5,5,5\n";
    CHECK_THROWS_AS(data::load_manifest(path), DataError);
  }
}

TEST_CASE("album split") {
  SUBCASE("canonical 20x6 manifest gives 80/20/20 albums") {
    const DatasetManifest m = make_manifest(20, 6, 2);
    const data::Split split = data::album_split(m, 42);
    int train = 0, val = 0, test = 0;
    for (const auto& [album, subset] : split.albums) {
      (void)album;
      if (subset == Subset::kTrain) ++train;
      if (subset == Subset::kVal) ++val;
      if (subset == Subset::kTest) ++test;
    }
    CHECK(train == 80);
    CHECK(val == 20);
    CHECK(test == 20);
  }
  SUBCASE("no album in two subsets, partition property over seeds") {
    const DatasetManifest m = make_manifest(5, 6, 2);
    std::set<std::string> all_albums;
    for (const auto& t : m.tracks) all_albums.insert(t.album_id);
    for (uint64_t seed = 0; seed < 100; ++seed) {
      const data::Split split = data::album_split(m, seed);
      CHECK(split.albums.size() == all_albums.size());  // every album exactly once
      int per_artist_train = 0;
      for (const auto& [album, subset] : split.albums) {
        if (album.rfind("artist0_", 0) == 0 && subset == Subset::kTrain) {
          ++per_artist_train;
        }
      }
      CHECK(per_artist_train == 4);
    }
  }
  SUBCASE("same seed reproduces the split") {
    const DatasetManifest m = make_manifest(4, 6, 1);
    const data::Split a = data::album_split(m, 7);
    const data::Split b = data::album_split(m, 7);
    CHECK(a.albums == b.albums);
    const data::Split c = data::album_split(m, 8);
    CHECK(a.albums != c.albums);
  }
  SUBCASE("artist with the wrong album count is named") {
    DatasetManifest m = make_manifest(2, 6, 1);
    // artist1 loses an album
    m.tracks.erase(std::remove_if(m.tracks.begin(), m.tracks.end(),
                                  [](const TrackRecord& t) {
                                    return t.artist_id == "artist1" &&
                                           t.album_id == "artist1_alb5";
                                  }),
                   m.tracks.end());
    CHECK_THROWS_WITH_AS(data::album_split(m, 1), doctest::Contains("artist1"),
                         InvalidArgumentError);
  }
  SUBCASE("proportional counts handle other album counts") {
    const DatasetManifest m = make_manifest(2, 9, 1);
    const data::Split split = data::album_split(m, 3, {4, 1, 1}, true);
    int train = 0, val = 0, test = 0;
    for (const auto& [album, subset] : split.albums) {
      if (album.rfind("artist0_", 0) != 0) continue;
      if (subset == Subset::kTrain) ++train;
      if (subset == Subset::kVal) ++val;
      if (subset == Subset::kTest) ++test;
    }
    CHECK(train + val + test == 9);
    CHECK(val >= 1);
    CHECK(test >= 1);
    CHECK(train >= 5);
  }
  SUBCASE("split file round trip") {
    voxid_test::TempDir dir("split");
    const DatasetManifest m = make_manifest(3, 6, 1);
    const data::Split split = data::album_split(m, 11);
    data::save_split(dir.path() / "s.json", split);
    const data::Split back = data::load_split(dir.path() / "s.json");
    CHECK(back.albums == split.albums);
    CHECK_FALSE(back.by_song);
  }
}

TEST_CASE("song split leaks albums by design") {
  const DatasetManifest m = make_manifest(3, 6, 4);
  const data::Split split = data::song_split(m, 5);
  REQUIRE(split.by_song);

  // per artist proportions: 24 tracks -> 16/4/4
  int train = 0, val = 0, test = 0;
  std::set<std::string> train_albums, test_albums;
  for (const auto& t : m.tracks) {
    if (t.artist_id != "artist0") continue;
    switch (split.subset_of(t)) {
      case Subset::kTrain: ++train; train_albums.insert(t.album_id); break;
      case Subset::kVal: ++val; break;
      case Subset::kTest: ++test; test_albums.insert(t.album_id); break;
    }
  }
  CHECK(train == 16);
  CHECK(val == 4);
  CHECK(test == 4);
  // the producer-effect leak: some album appears on both sides
  std::set<std::string> overlap;
  for (const auto& a : test_albums) {
    if (train_albums.count(a)) overlap.insert(a);
  }
  CHECK(!overlap.empty());
}

TEST_CASE("synthetic corpus") {
  SynthSpec spec;
  spec.n_artists = 2;
  spec.albums_per_artist = 3;
  spec.tracks_per_album = 1;
  spec.track_duration_s = 6.0;
  spec.seed = 13;

  SUBCASE("distinct artists have disjoint formant sets") {
    const auto voices = data::default_voices(8);
    std::set<double> all;
    size_t n = 0;
    for (const auto& v : voices) {
      for (double f : v.formants_hz) {
        all.insert(f);
        ++n;
      }
    }
    CHECK(all.size() == n);  // pairwise disjoint by construction
  }
  SUBCASE("wavs are mono 16 kHz and load through dsp") {
    voxid_test::TempDir dir("synth");
    const DatasetManifest m = data::generate_synthetic_corpus(spec, dir.path(), 2);
    REQUIRE(m.tracks.size() == 6);
    for (const auto& t : m.tracks) {
      const auto clip =
          dsp::load_audio(dir.path() / t.audio_path, t.track_id, 16000);
      CHECK(clip.sample_rate == 16000);
      CHECK(clip.duration_s() == doctest::Approx(6.0));
      // peak normalized to ~0.7
      double peak = 0;
      for (double s : clip.samples) peak = std::max(peak, std::abs(s));
      CHECK(peak == doctest::Approx(0.7).epsilon(0.01));
    }
    CHECK(std::filesystem::exists(dir.path() / "manifest.csv"));
  }
  SUBCASE("bit-identical regeneration regardless of job count") {
    voxid_test::TempDir d1("synth_a"), d2("synth_b");
    data::generate_synthetic_corpus(spec, d1.path(), 1);
    data::generate_synthetic_corpus(spec, d2.path(), 2);
    const DatasetManifest m = data::load_manifest(d1.path() / "manifest.csv");
    for (const auto& t : m.tracks) {
      const auto b1 = io::read_file_bytes(d1.path() / t.audio_path);
      const auto b2 = io::read_file_bytes(d2.path() / t.audio_path);
      CHECK(b1 == b2);
    }
    CHECK(io::read_file_bytes(d1.path() / "manifest.csv") ==
          io::read_file_bytes(d2.path() / "manifest.csv"));
  }
  SUBCASE("melodiousness targets echo the published mean at n=500") {
    double sum = 0.0;
    for (int i = 0; i < 500; ++i) {
      const auto targets =
          data::sample_perceptual_targets(voxid::derive_seed(99, "t" + std::to_string(i)));
      for (double v : targets) {
        CHECK(v >= 1.0);
        CHECK(v <= 10.0);
      }
      sum += targets[0];
    }
    CHECK(std::abs(sum / 500.0 - 5.97) <= 0.5);
  }
  SUBCASE("album tilt is bounded and seed-stable") {
    spec.album_tilt_db = 5.0;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 3; ++b) {
        const double tilt = data::album_tilt_for(spec, a, b);
        CHECK(std::abs(tilt) <= 5.0);
        CHECK(tilt == data::album_tilt_for(spec, a, b));
      }
    }
    SynthSpec flat = spec;
    flat.album_tilt_db = 0.0;
    CHECK(data::album_tilt_for(flat, 0, 0) == 0.0);
  }
  SUBCASE("invalid specs are rejected") {
    SynthSpec bad = spec;
    bad.n_artists = 1;
    voxid_test::TempDir dir("synth_bad");
    CHECK_THROWS_AS(data::generate_synthetic_corpus(bad, dir.path(), 1),
                    InvalidArgumentError);
  }
}

TEST_CASE("feature store inventory and cache") {
  auto corpus = voxid_test::make_tiny_corpus("store", 2, 1);
  auto& store = *corpus.store;
  // 2 artists x 3 albums x 1 track, 8 s tracks -> 3 chunks each at 4 s / 2 s
  CHECK(store.n_chunks() == 2 * 3 * 1 * 3);
  CHECK(store.n_classes() == 2);
  CHECK(store.frames() == (4 * 16000 - 512) / 512 + 1);

  SUBCASE("chunk subsets never leak tracks") {
    std::set<std::string> train_tracks, test_tracks;
    for (int ci : store.subset_chunks(data::Subset::kTrain)) {
      train_tracks.insert(store.chunk(ci).track_id);
    }
    for (int ci : store.subset_chunks(data::Subset::kTest)) {
      test_tracks.insert(store.chunk(ci).track_id);
    }
    for (const auto& t : test_tracks) CHECK(train_tracks.count(t) == 0);
  }
  SUBCASE("mel features are standardized") {
    const auto& mel = store.mel(0);
    double mean = 0.0;
    for (int64_t i = 0; i < mel.size(); ++i) mean += mel[i];
    mean /= static_cast<double>(mel.size());
    CHECK(std::abs(mean) < 1e-9);
  }
  SUBCASE("extract is idempotent: cache reused bit-identically") {
    const auto& c0 = store.chunk(0);
    const auto path = store.chunk_cache_path(c0);
    const auto before = io::read_file_bytes(path);
    store.extract_all(2);  // second run hits the cache
    CHECK(io::read_file_bytes(path) == before);
  }
  SUBCASE("batch assembly stacks rows") {
    const auto batch = store.batch_mel({0, 1});
    CHECK(batch.shape() ==
          std::vector<int>{2, store.frames(), store.n_mels()});
  }
}
