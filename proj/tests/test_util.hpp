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
// Shared fixtures for the test binaries.

#ifndef VOXID_TESTS_TEST_UTIL_HPP_
#define VOXID_TESTS_TEST_UTIL_HPP_

#include <filesystem>
#include <memory>
#include <string>

#include "voxid/data.hpp"
#include "voxid/dsp.hpp"
#include "voxid/pipeline.hpp"

namespace voxid_test {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("voxid_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Fast dsp settings for unit-test corpora (short chunks, few mels).
inline voxid::dsp::DspConfig tiny_dsp_config() {
  voxid::dsp::DspConfig c;
  c.stft.n_fft = 512;
  c.stft.hop = 512;
  c.n_mels = 16;
  c.f_min = 0.0;
  c.f_max = 8000.0;
  return c;
}

struct TinyCorpus {
  std::unique_ptr<TempDir> dir;
  voxid::data::DatasetManifest manifest;
  voxid::data::Split split;
  std::unique_ptr<voxid::pipeline::FeatureStore> store;
};

// Small synthetic corpus with an album split and extracted features:
// `artists` x 3 albums x `tracks_per_album` tracks of 8 s each, chunked
// at 4 s / 2 s (3 chunks per track).
inline TinyCorpus make_tiny_corpus(const std::string& tag, int artists = 3,
                                   int tracks_per_album = 2, uint64_t seed = 7) {
  TinyCorpus out;
  out.dir = std::make_unique<TempDir>(tag);
  voxid::data::SynthSpec spec;
  spec.n_artists = artists;
  spec.albums_per_artist = 3;
  spec.tracks_per_album = tracks_per_album;
  spec.track_duration_s = 8.0;
  spec.seed = seed;
  spec.album_tilt_db = 4.0;
  out.manifest = voxid::data::generate_synthetic_corpus(spec, out.dir->path(), 2);
  out.split = voxid::data::album_split(out.manifest, seed, {1, 1, 1});
  out.store = std::make_unique<voxid::pipeline::FeatureStore>(
      out.manifest, out.split, tiny_dsp_config(), /*window_s=*/4.0, /*slide_s=*/2.0,
      out.dir->path(), out.dir->path() / "cache");
  out.store->extract_all(2);
  return out;
}

}  // namespace voxid_test

#endif  // VOXID_TESTS_TEST_UTIL_HPP_
