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
// Dataset manifests, the album-split protocol, label encoding, and the
// synthetic desk-scale corpus generator.

#ifndef VOXID_DATA_HPP_
#define VOXID_DATA_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace voxid::data {

inline constexpr int kNumPerceptual = 7;

inline constexpr std::array<const char*, kNumPerceptual> kPerceptualNames = {
    "melodiousness",      "articulation",   "rhythmic_complexity",
    "rhythmic_stability", "dissonance",     "tonal_stability",
    "modality"};

struct TrackRecord {
  std::string artist_id;
  std::string album_id;
  std::string track_id;
  std::string audio_path;  // relative to the dataset root
  double duration_s = 0.0;
  std::optional<std::array<double, kNumPerceptual>> perceptual;  // each in [1, 10]
};

struct DatasetManifest {
  std::vector<TrackRecord> tracks;

  // Sorted unique artist ids.
  std::vector<std::string> artist_ids() const;
  // Stable label map: artists in lexicographic order -> 0..K-1.
  std::map<std::string, int> encode_labels() const;
  // album ids per artist, sorted.
  std::map<std::string, std::vector<std::string>> albums_by_artist() const;
};

// CSV with header; unknown columns and duplicate rows are validation
// errors that name the offending line.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

enum class Subset { kTrain, kVal, kTest };
const char* to_string(Subset s);
Subset subset_from_string(const std::string& s);

struct SplitCounts {
  int train = 4;
  int val = 1;
  int test = 1;
  int total() const { return train + val + test; }
};

// Whole-album (or, in song mode, whole-track) assignment to subsets.
struct Split {
  bool by_song = false;
  std::map<std::string, Subset> albums;  // album mode
  std::map<std::string, Subset> tracks;  // song mode

  Subset subset_of(const TrackRecord& t) const;
};

// Per-artist seeded assignment of whole albums. With proportional=false
// every artist must own exactly counts.total() albums; otherwise the
// counts are scaled to the artist's album count (val/test at least 1).
Split album_split(const DatasetManifest& manifest, uint64_t seed,
                  SplitCounts counts = {}, bool proportional = false);

// Song-split mode (behind a flag; excluded from headline reports): tracks
// are assigned at random in the same proportions, leaking album identity
// between train and test.
Split song_split(const DatasetManifest& manifest, uint64_t seed,
                 SplitCounts counts = {});

void save_split(const std::filesystem::path& path, const Split& split);
Split load_split(const std::filesystem::path& path);

// --- synthetic corpus -------------------------------------------------------

struct VoiceParams {
  double f0_hz = 160.0;                       // fundamental register center
  std::array<double, 3> formants_hz{500, 1500, 2500};
  std::array<double, 3> formant_gains{4.0, 3.0, 2.0};
  double brightness = 1.0;                    // harmonic rolloff exponent
};

struct SynthSpec {
  int n_artists = 8;
  int albums_per_artist = 6;
  int tracks_per_album = 4;
  double track_duration_s = 60.0;
  int sample_rate = 16000;
  uint64_t seed = 42;
  // Shared accompaniment noise level relative to the voice.
  double accompaniment_level = 0.35;
  // Albums differ by a high-shelf EQ with gain drawn in
  // [-album_tilt_db, +album_tilt_db] (the "producer effect"). 0 disables.
  double album_tilt_db = 6.0;
  // Per-artist voices; filled with default_voices(n_artists) when empty.
  std::vector<VoiceParams> voices;
};

// Deterministic, pairwise-disjoint formant sets and distinct registers.
std::vector<VoiceParams> default_voices(int n_artists);

// Writes WAVs under out_dir/audio/ plus out_dir/manifest.csv and returns
// the manifest. Parallelizes per track with per-track derived seeds, so
// the output is bit-identical for any job count.
DatasetManifest generate_synthetic_corpus(const SynthSpec& spec,
                                          const std::filesystem::path& out_dir,
                                          int jobs = 1);

// Renders one track deterministically; exposed for tests.
std::vector<double> synthesize_track(const SynthSpec& spec, int artist,
                                     const std::array<double, kNumPerceptual>& targets,
                                     double tilt_db, uint64_t track_seed);

// Draws the 7 perceptual targets (clipped normal echoing the published
// summary statistics) for a track.
std::array<double, kNumPerceptual> sample_perceptual_targets(uint64_t track_seed);

// High-shelf gain for an album, in dB, drawn from the album's derived seed.
double album_tilt_for(const SynthSpec& spec, int artist, int album);

}  // namespace voxid::data

#endif  // VOXID_DATA_HPP_
