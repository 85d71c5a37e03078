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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "voxid/errors.hpp"
#include "voxid/io.hpp"
#include "voxid/rng.hpp"

namespace voxid::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

const std::vector<std::string> kBaseColumns = {
    "artist_id", "album_id", "track_id", "audio_path", "duration_s"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::vector<std::string> DatasetManifest::artist_ids() const {
  std::set<std::string> ids;
  for (const auto& t : tracks) ids.insert(t.artist_id);
  return {ids.begin(), ids.end()};
}

std::map<std::string, int> DatasetManifest::encode_labels() const {
  std::map<std::string, int> labels;
  int next = 0;
  for (const auto& id : artist_ids()) labels[id] = next++;
  return labels;
}

std::map<std::string, std::vector<std::string>> DatasetManifest::albums_by_artist() const {
  std::map<std::string, std::set<std::string>> sets;
  for (const auto& t : tracks) sets[t.artist_id].insert(t.album_id);
  std::map<std::string, std::vector<std::string>> out;
  for (auto& [artist, albums] : sets) out[artist] = {albums.begin(), albums.end()};
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest: " + path.string());
  const std::vector<std::string> header = split_csv_line(line);

  // Validate header: base columns in order, then optionally the 7
  // perceptual columns in order.
  for (size_t i = 0; i < header.size(); ++i) {
    std::string expected;
    if (i < kBaseColumns.size()) {
      expected = kBaseColumns[i];
    } else if (i < kBaseColumns.size() + kNumPerceptual) {
      expected = kPerceptualNames[i - kBaseColumns.size()];
    } else {
      throw DataError("unknown field '" + header[i] + "' (line 1)");
    }
    if (header[i] != expected) {
      throw DataError("unknown field '" + header[i] + "' (line 1), expected '" +
                      expected + "'");
    }
  }
  const bool has_perceptual = header.size() == kBaseColumns.size() + kNumPerceptual;
  if (header.size() != kBaseColumns.size() && !has_perceptual) {
    throw DataError("manifest header must have 5 or 12 columns (line 1)");
  }

  DatasetManifest manifest;
  std::set<std::string> seen_triples;
  std::set<std::string> seen_track_ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError("wrong field count on line " + std::to_string(line_no));
    }
    TrackRecord t;
    t.artist_id = f[0];
    t.album_id = f[1];
    t.track_id = f[2];
    t.audio_path = f[3];
    try {
      t.duration_s = std::stod(f[4]);
    } catch (const std::exception&) {
      throw DataError("bad duration_s on line " + std::to_string(line_no));
    }
    if (t.duration_s <= 0.0) {
      throw DataError("duration_s must be > 0 on line " + std::to_string(line_no));
    }
    if (has_perceptual) {
      std::array<double, kNumPerceptual> p{};
      for (int i = 0; i < kNumPerceptual; ++i) {
        try {
          p[static_cast<size_t>(i)] = std::stod(f[kBaseColumns.size() + static_cast<size_t>(i)]);
        } catch (const std::exception&) {
          throw DataError(std::string("bad ") + kPerceptualNames[i] + " on line " +
                          std::to_string(line_no));
        }
        if (p[static_cast<size_t>(i)] < 1.0 || p[static_cast<size_t>(i)] > 10.0) {
          throw DataError(std::string(kPerceptualNames[i]) + " outside [1, 10] on line " +
                          std::to_string(line_no));
        }
      }
      t.perceptual = p;
    }
    const std::string triple = t.artist_id + "\x1f" + t.album_id + "\x1f" + t.track_id;
    if (!seen_triples.insert(triple).second) {
      throw DataError("duplicate track row (" + t.artist_id + ", " + t.album_id +
                      ", " + t.track_id + ") on line " + std::to_string(line_no));
    }
    // track_id keys the feature cache layout, so it must be globally unique
    if (!seen_track_ids.insert(t.track_id).second) {
      throw DataError("track_id '" + t.track_id + "' reused on line " +
                      std::to_string(line_no) +
                      "; track ids must be unique (cache paths derive from them)");
    }
    manifest.tracks.push_back(std::move(t));
  }
  return manifest;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  const bool has_perceptual =
      !manifest.tracks.empty() && manifest.tracks.front().perceptual.has_value();
  for (size_t i = 0; i < kBaseColumns.size(); ++i) {
    if (i) out << ",";
    out << kBaseColumns[i];
  }
  if (has_perceptual) {
    for (const char* name : kPerceptualNames) out << "," << name;
  }
  out << "\n";
  for (const auto& t : manifest.tracks) {
    for (const std::string* s : {&t.artist_id, &t.album_id, &t.track_id, &t.audio_path}) {
      if (s->find(',') != std::string::npos) {
        throw DataError("manifest fields must not contain commas: " + *s);
      }
    }
    out << t.artist_id << "," << t.album_id << "," << t.track_id << ","
        << t.audio_path << "," << format_double(t.duration_s);
    if (has_perceptual) {
      if (!t.perceptual) throw DataError("mixed perceptual presence in manifest");
      for (double v : *t.perceptual) out << "," << format_double(v);
    }
    out << "\n";
  }
}

const char* to_string(Subset s) {
  switch (s) {
    case Subset::kTrain: return "train";
    case Subset::kVal: return "val";
    case Subset::kTest: return "test";
  }
  return "?";
}

Subset subset_from_string(const std::string& s) {
  if (s == "train") return Subset::kTrain;
  if (s == "val") return Subset::kVal;
  if (s == "test") return Subset::kTest;
  throw DataError("unknown subset name: " + s);
}

Subset Split::subset_of(const TrackRecord& t) const {
  if (by_song) {
    auto it = tracks.find(t.track_id);
    if (it == tracks.end()) throw DataError("track not in split: " + t.track_id);
    return it->second;
  }
  auto it = albums.find(t.album_id);
  if (it == albums.end()) throw DataError("album not in split: " + t.album_id);
  return it->second;
}

namespace {

// 4:1:1 scaled onto n units; val and test get at least one each.
SplitCounts proportional_counts(const SplitCounts& counts, int n,
                                const std::string& artist) {
  SplitCounts out;
  const double total = counts.total();
  out.val = std::max(1, static_cast<int>(std::lround(n * counts.val / total)));
  out.test = std::max(1, static_cast<int>(std::lround(n * counts.test / total)));
  out.train = n - out.val - out.test;
  if (out.train < 1) {
    throw InvalidArgumentError("artist '" + artist + "' has too few albums (" +
                               std::to_string(n) + ") to split");
  }
  return out;
}

}  // namespace

Split album_split(const DatasetManifest& manifest, uint64_t seed,
                  SplitCounts counts, bool proportional) {
  // album ids must be globally unique for the {album_id: subset} file to
  // be unambiguous
  std::map<std::string, std::string> album_owner;
  for (const auto& t : manifest.tracks) {
    auto [it, inserted] = album_owner.emplace(t.album_id, t.artist_id);
    if (!inserted && it->second != t.artist_id) {
      throw DataError("album_id '" + t.album_id +
                      "' appears under two artists; album ids must be unique");
    }
  }

  Split split;
  for (const auto& [artist, albums] : manifest.albums_by_artist()) {
    const int n = static_cast<int>(albums.size());
    SplitCounts c = counts;
    if (n != counts.total()) {
      if (!proportional) {
        throw InvalidArgumentError(
            "artist '" + artist + "' has " + std::to_string(n) + " albums, expected " +
            std::to_string(counts.total()) + " (enable proportional counts to adjust)");
      }
      c = proportional_counts(counts, n, artist);
    }
    std::vector<std::string> shuffled = albums;  // already sorted
    Rng rng(derive_seed(seed, "album_split/" + artist));
    rng.shuffle(shuffled);
    for (int i = 0; i < n; ++i) {
      Subset s = i < c.train             ? Subset::kTrain
                 : i < c.train + c.val   ? Subset::kVal
                                         : Subset::kTest;
      split.albums[shuffled[static_cast<size_t>(i)]] = s;
    }
  }
  return split;
}

Split song_split(const DatasetManifest& manifest, uint64_t seed, SplitCounts counts) {
  std::map<std::string, std::vector<std::string>> tracks_by_artist;
  for (const auto& t : manifest.tracks) tracks_by_artist[t.artist_id].push_back(t.track_id);

  Split split;
  split.by_song = true;
  for (auto& [artist, ids] : tracks_by_artist) {
    std::sort(ids.begin(), ids.end());
    const int n = static_cast<int>(ids.size());
    const SplitCounts c = proportional_counts(counts, n, artist);
    Rng rng(derive_seed(seed, "song_split/" + artist));
    rng.shuffle(ids);
    for (int i = 0; i < n; ++i) {
      Subset s = i < c.train             ? Subset::kTrain
                 : i < c.train + c.val   ? Subset::kVal
                                         : Subset::kTest;
      split.tracks[ids[static_cast<size_t>(i)]] = s;
    }
  }
  return split;
}

void save_split(const std::filesystem::path& path, const Split& split) {
  nlohmann::json j;
  if (split.by_song) {
    j["mode"] = "song";
    nlohmann::json assignment;
    for (const auto& [track, subset] : split.tracks) assignment[track] = to_string(subset);
    j["tracks"] = assignment;
  } else {
    // the album-split file is the flat {album_id: subset} object
    for (const auto& [album, subset] : split.albums) j[album] = to_string(subset);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write split: " + path.string());
  out << j.dump(2) << "\n";
}

Split load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("bad split JSON in " + path.string() + ": " + e.what());
  }
  Split split;
  if (j.contains("mode") && j["mode"] == "song") {
    split.by_song = true;
    for (const auto& [track, subset] : j["tracks"].items()) {
      split.tracks[track] = subset_from_string(subset.get<std::string>());
    }
  } else {
    for (const auto& [album, subset] : j.items()) {
      split.albums[album] = subset_from_string(subset.get<std::string>());
    }
  }
  return split;
}

// --- synthetic corpus ----------------------------------------------------------

std::vector<VoiceParams> default_voices(int n_artists) {
  std::vector<VoiceParams> voices(static_cast<size_t>(n_artists));
  for (int a = 0; a < n_artists; ++a) {
    VoiceParams& v = voices[static_cast<size_t>(a)];
    // registers spread over ~1.3 octaves; formant sets disjoint by
    // construction (distinct offsets per artist)
    v.f0_hz = 110.0 * std::pow(2.0, 0.165 * a);
    v.formants_hz = {300.0 + 55.0 * a, 950.0 + 130.0 * a, 2300.0 + 240.0 * a};
    v.formant_gains = {4.0 + 0.3 * (a % 3), 3.0 + 0.25 * ((a + 1) % 3),
                       2.0 + 0.2 * ((a + 2) % 3)};
    v.brightness = 0.85 + 0.06 * (a % 4);
  }
  return voices;
}

std::array<double, kNumPerceptual> sample_perceptual_targets(uint64_t track_seed) {
  // Published summary statistics of the seven attributes (mean, variance).
  static constexpr std::array<std::array<double, 2>, kNumPerceptual> kStats = {{
      {5.97, 1.54},  // melodiousness
      {5.57, 1.80},  // articulation
      {4.66, 1.44},  // rhythmic complexity
      {6.30, 1.47},  // rhythmic stability
      {4.89, 1.39},  // dissonance
      {6.77, 1.12},  // tonal stability
      {5.48, 1.35},  // modality
  }};
  Rng rng(derive_seed(track_seed, "perceptual"));
  std::array<double, kNumPerceptual> out{};
  for (int i = 0; i < kNumPerceptual; ++i) {
    const double mean = kStats[static_cast<size_t>(i)][0];
    const double stddev = std::sqrt(kStats[static_cast<size_t>(i)][1]);
    out[static_cast<size_t>(i)] = std::clamp(rng.normal(mean, stddev), 1.0, 10.0);
  }
  return out;
}

double album_tilt_for(const SynthSpec& spec, int artist, int album) {
  if (spec.album_tilt_db <= 0.0) return 0.0;
  Rng rng(derive_seed(spec.seed, "album_eq/" + std::to_string(artist) + "/" +
                                     std::to_string(album)));
  return rng.uniform(-spec.album_tilt_db, spec.album_tilt_db);
}

namespace {

// RBJ high-shelf biquad at fc, slope 1.
struct Shelf {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  Shelf(double gain_db, double fc, double sr) {
    const double amp = std::pow(10.0, gain_db / 40.0);
    const double w0 = 2.0 * kPi * fc / sr;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / 2.0 * std::sqrt(2.0);  // shelf slope S = 1
    const double two_sqrt_a_alpha = 2.0 * std::sqrt(amp) * alpha;
    const double a0 = (amp + 1.0) - (amp - 1.0) * cw + two_sqrt_a_alpha;
    b0 = (amp * ((amp + 1.0) + (amp - 1.0) * cw + two_sqrt_a_alpha)) / a0;
    b1 = (-2.0 * amp * ((amp - 1.0) + (amp + 1.0) * cw)) / a0;
    b2 = (amp * ((amp + 1.0) + (amp - 1.0) * cw - two_sqrt_a_alpha)) / a0;
    a1 = (2.0 * ((amp - 1.0) - (amp + 1.0) * cw)) / a0;
    a2 = ((amp + 1.0) - (amp - 1.0) * cw - two_sqrt_a_alpha) / a0;
  }

  double process(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

const int kMajorScale[7] = {0, 2, 4, 5, 7, 9, 11};
const int kMinorScale[7] = {0, 2, 3, 5, 7, 8, 10};

double formant_envelope(const VoiceParams& v, double f) {
  double env = 1.0;
  for (int j = 0; j < 3; ++j) {
    const double bw = 80.0 + 0.06 * v.formants_hz[static_cast<size_t>(j)];
    const double d = (f - v.formants_hz[static_cast<size_t>(j)]) / bw;
    env += v.formant_gains[static_cast<size_t>(j)] * std::exp(-0.5 * d * d);
  }
  return env;
}

}  // namespace

std::vector<double> synthesize_track(const SynthSpec& spec, int artist,
                                     const std::array<double, kNumPerceptual>& targets,
                                     double tilt_db, uint64_t track_seed) {
  const std::vector<VoiceParams> voices =
      spec.voices.empty() ? default_voices(spec.n_artists) : spec.voices;
  if (artist < 0 || artist >= static_cast<int>(voices.size())) {
    throw InvalidArgumentError("synthesize_track: artist index out of range");
  }
  const VoiceParams& voice = voices[static_cast<size_t>(artist)];
  const int sr = spec.sample_rate;
  const auto n = static_cast<size_t>(std::llround(spec.track_duration_s * sr));
  std::vector<double> mix(n, 0.0);

  // controls in [0, 1] derived from the perceptual targets
  auto u = [&targets](int i) { return (targets[static_cast<size_t>(i)] - 1.0) / 9.0; };
  const double u_mel = u(0), u_art = u(1), u_rc = u(2), u_rs = u(3);
  const double u_diss = u(4), u_ton = u(5), u_mod = u(6);

  Rng rng(derive_seed(track_seed, "melody"));

  // --- voice: additive harmonics with formant coloring -------------------
  const double tempo_bpm = 84.0 + 32.0 * rng.uniform();
  double beat_s = 60.0 / tempo_bpm;
  int degree = 0;
  int root_semitones = static_cast<int>(rng.uniform_int(-2, 2));
  size_t cursor = 0;
  const double max_partial_hz = std::min(7200.0, 0.45 * sr);

  while (cursor < n) {
    // rhythmic complexity: richer duration palette; stability: tempo drift
    static const double kDur[4] = {0.5, 1.0, 1.5, 2.0};
    int dur_choice;
    if (rng.uniform() < 0.35 + 0.55 * u_rc) {
      dur_choice = static_cast<int>(rng.uniform_int(0, 3));
    } else {
      dur_choice = 1;
    }
    beat_s *= 1.0 + (1.0 - u_rs) * 0.05 * (rng.uniform() - 0.5);
    beat_s = std::clamp(beat_s, 0.35, 1.1);
    const double note_s = std::clamp(beat_s * kDur[dur_choice], 0.12, 1.6);
    auto note_n = static_cast<size_t>(std::llround(note_s * sr));
    note_n = std::min(note_n, n - cursor);
    if (note_n < 64) break;

    // tonal stability: occasional key drift
    if (rng.uniform() < (1.0 - u_ton) * 0.12) {
      root_semitones += static_cast<int>(rng.uniform_int(-2, 2));
    }
    // melodiousness: steps vs leaps on the scale
    const int step = rng.uniform() < (0.35 + 0.6 * u_mel)
                         ? static_cast<int>(rng.uniform_int(-1, 1))
                         : static_cast<int>(rng.uniform_int(-4, 4));
    degree = std::clamp(degree + step, -7, 7);
    // modality blends major and minor scales
    const int* scale = rng.uniform() < u_mod ? kMajorScale : kMinorScale;
    const int oct = degree >= 0 ? degree / 7 : -((-degree + 6) / 7);
    const int within = degree - oct * 7;
    const int semis = root_semitones + 12 * oct + scale[within];
    double f0 = voice.f0_hz * std::pow(2.0, semis / 12.0);
    f0 = std::clamp(f0, voice.f0_hz * 0.6, voice.f0_hz * 1.9);
    f0 *= 1.0 + 0.004 * (rng.uniform() - 0.5);  // intonation jitter

    // articulation: gap between notes (staccato vs legato)
    const double gap_frac = 0.04 + 0.4 * u_art;
    const auto sounding_n =
        static_cast<size_t>(static_cast<double>(note_n) * (1.0 - gap_frac));
    const double inharm = 0.0015 * u_diss;

    const int n_partials =
        std::min(48, static_cast<int>(max_partial_hz / f0));
    for (int h = 1; h <= n_partials; ++h) {
      double fh = h * f0 * (1.0 + inharm * h);
      if (h > 1 && u_diss > 0.5 && h % 3 == 0) {
        fh *= 1.0 + 0.012 * (u_diss - 0.5);  // detuned partials read as dissonance
      }
      if (fh >= max_partial_hz) break;
      const double amp = std::pow(static_cast<double>(h), -voice.brightness) *
                         formant_envelope(voice, fh) / 6.0;
      // complex rotation oscillator: 4 mults per sample, no sin() calls
      const double w = 2.0 * kPi * fh / sr;
      const double rot_r = std::cos(w), rot_i = std::sin(w);
      double zr = 1.0, zi = 0.0;
      double* out = mix.data() + cursor;
      for (size_t s = 0; s < sounding_n; ++s) {
        out[s] += amp * zi;
        const double nzr = zr * rot_r - zi * rot_i;
        zi = zr * rot_i + zi * rot_r;
        zr = nzr;
      }
    }
    // attack/release envelope over the sounding span
    const auto attack_n = static_cast<size_t>(0.008 * sr);
    const auto release_n = std::max<size_t>(32, static_cast<size_t>(0.02 * sr));
    double* out = mix.data() + cursor;
    for (size_t s = 0; s < sounding_n; ++s) {
      double env = 1.0;
      if (s < attack_n) env = static_cast<double>(s) / static_cast<double>(attack_n);
      const size_t from_end = sounding_n - s;
      if (from_end < release_n) {
        env *= static_cast<double>(from_end) / static_cast<double>(release_n);
      }
      out[s] *= env;
    }
    cursor += note_n;
  }

  // --- shared accompaniment: gated pink-ish noise ------------------------
  {
    Rng noise_rng(derive_seed(track_seed, "accompaniment"));
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    const double beat = 60.0 / tempo_bpm;
    for (size_t i = 0; i < n; ++i) {
      const double white = noise_rng.uniform(-1.0, 1.0);
      b0 = 0.99765 * b0 + white * 0.0990460;
      b1 = 0.96300 * b1 + white * 0.2965164;
      b2 = 0.57000 * b2 + white * 1.0526913;
      const double pink = (b0 + b1 + b2 + white * 0.1848) * 0.08;
      const double phase = std::fmod(static_cast<double>(i) / sr, beat) / beat;
      const double gate = 0.45 + 0.55 * std::exp(-6.0 * phase);
      mix[i] += spec.accompaniment_level * pink * gate;
    }
  }

  // --- album EQ tilt (producer effect), then peak normalization ----------
  if (tilt_db != 0.0) {
    Shelf shelf(tilt_db, 1000.0, sr);
    for (auto& s : mix) s = shelf.process(s);
  }
  double peak = 1e-9;
  for (double s : mix) peak = std::max(peak, std::abs(s));
  const double norm = 0.7 / peak;
  for (auto& s : mix) s *= norm;
  return mix;
}

DatasetManifest generate_synthetic_corpus(const SynthSpec& spec,
                                          const std::filesystem::path& out_dir,
                                          int jobs) {
  if (spec.n_artists < 2) {
    throw InvalidArgumentError("SynthSpec: need at least 2 artists");
  }
  if (spec.albums_per_artist < 1 || spec.tracks_per_album < 1) {
    throw InvalidArgumentError("SynthSpec: albums and tracks must be >= 1");
  }
  if (!spec.voices.empty() &&
      static_cast<int>(spec.voices.size()) != spec.n_artists) {
    throw InvalidArgumentError("SynthSpec: voices.size() must equal n_artists");
  }

  std::filesystem::create_directories(out_dir / "audio");

  DatasetManifest manifest;
  for (int a = 0; a < spec.n_artists; ++a) {
    for (int b = 0; b < spec.albums_per_artist; ++b) {
      for (int t = 0; t < spec.tracks_per_album; ++t) {
        TrackRecord rec;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "artist%02d", a);
        rec.artist_id = buf;
        std::snprintf(buf, sizeof(buf), "artist%02d_album%d", a, b);
        rec.album_id = buf;
        std::snprintf(buf, sizeof(buf), "a%02d_b%d_t%02d", a, b, t);
        rec.track_id = buf;
        rec.audio_path = "audio/" + rec.track_id + ".wav";
        rec.duration_s = spec.track_duration_s;
        rec.perceptual =
            sample_perceptual_targets(derive_seed(spec.seed, "track/" + rec.track_id));
        manifest.tracks.push_back(std::move(rec));
      }
    }
  }

  // Parallel per track; every track derives its own seed so job count
  // never changes the audio.
  const auto total = manifest.tracks.size();
  std::vector<std::thread> workers;
  const int n_jobs = std::max(1, jobs);
  std::atomic<size_t> next{0};
  std::vector<std::string> failures(total);
  std::atomic<bool> failed{false};
  auto work = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= total) return;
      const TrackRecord& rec = manifest.tracks[i];
      try {
        const int artist = static_cast<int>(i) /
                           (spec.albums_per_artist * spec.tracks_per_album);
        const int album = (static_cast<int>(i) / spec.tracks_per_album) %
                          spec.albums_per_artist;
        const uint64_t track_seed = derive_seed(spec.seed, "track/" + rec.track_id);
        const double tilt = album_tilt_for(spec, artist, album);
        const std::vector<double> audio =
            synthesize_track(spec, artist, *rec.perceptual, tilt, track_seed);
        io::write_wav(out_dir / rec.audio_path, audio, spec.sample_rate);
      } catch (const std::exception& e) {
        failures[i] = e.what();
        failed = true;
      }
    }
  };
  for (int j = 0; j < n_jobs; ++j) workers.emplace_back(work);
  for (auto& w : workers) w.join();
  if (failed) {
    for (size_t i = 0; i < total; ++i) {
      if (!failures[i].empty()) {
        throw IoError("synthesis failed for " + manifest.tracks[i].track_id + ": " +
                      failures[i]);
      }
    }
  }

  save_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

}  // namespace voxid::data
