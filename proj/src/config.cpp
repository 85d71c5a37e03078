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

#include "voxid/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "voxid/errors.hpp"
#include "voxid/rng.hpp"

namespace voxid::config {

Config preset_config(const std::string& name) {
  Config c;
  c.preset = name;
  if (name == "paper") {
    // defaults above are the paper-scale settings
    return c;
  }
  if (name == "desk") {
    c.dsp.n_mels = 40;
    c.dsp.hop = 2048;
    c.xvector.embed_dim = 64;
    c.xvector.channels = {64, 64, 64};
    c.xvector.epochs = 4;
    c.middle.stem_channels = 8;
    c.middle.block1_channels = 64;
    c.middle.dense1 = 32;
    c.middle.dense2 = 16;
    c.middle.epochs = 4;
    c.fusion.blocks = {{8, 2, 2}, {16, 2, 2}, {16, 3, 2}, {16, 3, 2}};
    c.fusion.gru_hidden = 32;
    c.fusion.epochs = 12;
    c.fusion.patience = 12;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

namespace {

nlohmann::json blocks_to_json(const std::vector<model::ConvBlockSpec>& blocks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& b : blocks) {
    out.push_back({{"channels", b.channels}, {"pool_t", b.pool_t}, {"pool_f", b.pool_f}});
  }
  return out;
}

std::vector<model::ConvBlockSpec> blocks_from_json(const nlohmann::json& j) {
  std::vector<model::ConvBlockSpec> out;
  for (const auto& bj : j) {
    model::ConvBlockSpec b;
    b.channels = bj.at("channels").get<int>();
    b.pool_t = bj.at("pool_t").get<int>();
    b.pool_f = bj.at("pool_f").get<int>();
    out.push_back(b);
  }
  return out;
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void check_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + scope + key + "'");
    }
  }
}

}  // namespace

nlohmann::json to_json(const Config& c) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["dsp"] = {{"sample_rate", c.dsp.sample_rate},
              {"n_fft", c.dsp.n_fft},
              {"hop", c.dsp.hop},
              {"window", c.dsp.window},
              {"n_mels", c.dsp.n_mels},
              {"f_min", c.dsp.f_min},
              {"f_max", c.dsp.f_max},
              {"log_floor", c.dsp.log_floor},
              {"resample", c.dsp.resample},
              {"window_s", c.dsp.window_s},
              {"slide_s", c.dsp.slide_s}};
  j["xvector"] = {{"embed_dim", c.xvector.embed_dim},
                  {"channels", c.xvector.channels},
                  {"dilations", c.xvector.dilations},
                  {"kernels", c.xvector.kernels},
                  {"epochs", c.xvector.epochs},
                  {"batch", c.xvector.batch},
                  {"lr", c.xvector.lr},
                  {"source", c.xvector.source},
                  {"file_dir", c.xvector.file_dir}};
  j["middle"] = {{"stem_channels", c.middle.stem_channels},
                 {"stem_pool_t", c.middle.stem_pool_t},
                 {"stem_pool_f", c.middle.stem_pool_f},
                 {"block1_channels", c.middle.block1_channels},
                 {"block1_pool_t", c.middle.block1_pool_t},
                 {"block1_pool_f", c.middle.block1_pool_f},
                 {"block2_pool_t", c.middle.block2_pool_t},
                 {"block2_pool_f", c.middle.block2_pool_f},
                 {"dense1", c.middle.dense1},
                 {"dense2", c.middle.dense2},
                 {"epochs", c.middle.epochs},
                 {"batch", c.middle.batch},
                 {"lr", c.middle.lr},
                 {"source", c.middle.source},
                 {"file_dir", c.middle.file_dir}};
  j["fusion"] = {{"blocks", blocks_to_json(c.fusion.blocks)},
                 {"gru_hidden", c.fusion.gru_hidden},
                 {"gru_layers", c.fusion.gru_layers},
                 {"middle_selection", c.fusion.middle_selection},
                 {"timbre_enabled", c.fusion.timbre_enabled},
                 {"dropout", c.fusion.dropout},
                 {"epochs", c.fusion.epochs},
                 {"batch", c.fusion.batch},
                 {"lr", c.fusion.lr},
                 {"patience", c.fusion.patience}};
  j["paths"] = {{"data_root", c.paths.data_root},
                {"cache_dir", c.paths.cache_dir},
                {"out_dir", c.paths.out_dir}};
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["jobs"] = c.jobs;
  return j;
}

Config merge_json(const Config& base, const nlohmann::json& j) {
  Config c = base;
  check_keys(j, {"preset", "dsp", "xvector", "middle", "fusion", "paths", "seed",
                 "seeds", "jobs"},
             "");
  maybe(j, "preset", c.preset);
  if (j.contains("dsp")) {
    const auto& d = j["dsp"];
    check_keys(d, {"sample_rate", "n_fft", "hop", "window", "n_mels", "f_min", "f_max",
                   "log_floor", "resample", "window_s", "slide_s"},
               "dsp.");
    maybe(d, "sample_rate", c.dsp.sample_rate);
    maybe(d, "n_fft", c.dsp.n_fft);
    maybe(d, "hop", c.dsp.hop);
    maybe(d, "window", c.dsp.window);
    maybe(d, "n_mels", c.dsp.n_mels);
    maybe(d, "f_min", c.dsp.f_min);
    maybe(d, "f_max", c.dsp.f_max);
    maybe(d, "log_floor", c.dsp.log_floor);
    maybe(d, "resample", c.dsp.resample);
    maybe(d, "window_s", c.dsp.window_s);
    maybe(d, "slide_s", c.dsp.slide_s);
  }
  if (j.contains("xvector")) {
    const auto& x = j["xvector"];
    check_keys(x, {"embed_dim", "channels", "dilations", "kernels", "epochs", "batch",
                   "lr", "source", "file_dir"},
               "xvector.");
    maybe(x, "embed_dim", c.xvector.embed_dim);
    maybe(x, "channels", c.xvector.channels);
    maybe(x, "dilations", c.xvector.dilations);
    maybe(x, "kernels", c.xvector.kernels);
    maybe(x, "epochs", c.xvector.epochs);
    maybe(x, "batch", c.xvector.batch);
    maybe(x, "lr", c.xvector.lr);
    maybe(x, "source", c.xvector.source);
    maybe(x, "file_dir", c.xvector.file_dir);
  }
  if (j.contains("middle")) {
    const auto& m = j["middle"];
    check_keys(m, {"stem_channels", "stem_pool_t", "stem_pool_f", "block1_channels",
                   "block1_pool_t", "block1_pool_f", "block2_pool_t", "block2_pool_f",
                   "dense1", "dense2", "epochs", "batch", "lr", "source", "file_dir"},
               "middle.");
    maybe(m, "stem_channels", c.middle.stem_channels);
    maybe(m, "stem_pool_t", c.middle.stem_pool_t);
    maybe(m, "stem_pool_f", c.middle.stem_pool_f);
    maybe(m, "block1_channels", c.middle.block1_channels);
    maybe(m, "block1_pool_t", c.middle.block1_pool_t);
    maybe(m, "block1_pool_f", c.middle.block1_pool_f);
    maybe(m, "block2_pool_t", c.middle.block2_pool_t);
    maybe(m, "block2_pool_f", c.middle.block2_pool_f);
    maybe(m, "dense1", c.middle.dense1);
    maybe(m, "dense2", c.middle.dense2);
    maybe(m, "epochs", c.middle.epochs);
    maybe(m, "batch", c.middle.batch);
    maybe(m, "lr", c.middle.lr);
    maybe(m, "source", c.middle.source);
    maybe(m, "file_dir", c.middle.file_dir);
  }
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    check_keys(f, {"blocks", "gru_hidden", "gru_layers", "middle_selection",
                   "timbre_enabled", "dropout", "epochs", "batch", "lr", "patience"},
               "fusion.");
    if (f.contains("blocks")) c.fusion.blocks = blocks_from_json(f["blocks"]);
    maybe(f, "gru_hidden", c.fusion.gru_hidden);
    maybe(f, "gru_layers", c.fusion.gru_layers);
    maybe(f, "middle_selection", c.fusion.middle_selection);
    maybe(f, "timbre_enabled", c.fusion.timbre_enabled);
    maybe(f, "dropout", c.fusion.dropout);
    maybe(f, "epochs", c.fusion.epochs);
    maybe(f, "batch", c.fusion.batch);
    maybe(f, "lr", c.fusion.lr);
    maybe(f, "patience", c.fusion.patience);
  }
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, {"data_root", "cache_dir", "out_dir"}, "paths.");
    maybe(p, "data_root", c.paths.data_root);
    maybe(p, "cache_dir", c.paths.cache_dir);
    maybe(p, "out_dir", c.paths.out_dir);
  }
  maybe(j, "seed", c.seed);
  maybe(j, "seeds", c.seeds);
  maybe(j, "jobs", c.jobs);
  return c;
}

Config load_config_file(const std::string& path, const Config& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config JSON in " + path + ": " + e.what());
  }
  return merge_json(base, j);
}

std::string config_hash(const Config& c) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical
  const std::string canonical = to_json(c).dump();
  const uint64_t h = fnv1a64(canonical);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> validate(const Config& c) {
  std::vector<std::string> errors;
  auto check = [&errors](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  check(c.preset == "desk" || c.preset == "paper",
        "preset must be 'desk' or 'paper'");
  check(c.dsp.sample_rate == 16000, "dsp.sample_rate must be 16000");
  check(c.dsp.n_fft > 0 && (c.dsp.n_fft & (c.dsp.n_fft - 1)) == 0,
        "dsp.n_fft must be a power of two");
  check(c.dsp.hop > 0 && c.dsp.hop <= c.dsp.n_fft, "dsp.hop must be in (0, n_fft]");
  check(c.dsp.n_mels >= 1, "dsp.n_mels must be >= 1");
  check(c.dsp.f_min >= 0 && c.dsp.f_min < c.dsp.f_max &&
            c.dsp.f_max <= c.dsp.sample_rate / 2.0,
        "dsp: need 0 <= f_min < f_max <= sample_rate/2");
  check(c.dsp.log_floor > 0, "dsp.log_floor must be > 0");
  check(c.dsp.window_s > 0 && c.dsp.slide_s > 0 && c.dsp.slide_s <= c.dsp.window_s,
        "dsp: need 0 < slide_s <= window_s");
  try {
    dsp::window_kind_from_string(c.dsp.window);
  } catch (const std::exception&) {
    errors.push_back("dsp.window must be hamming, hann, or rectangular");
  }
  check(c.xvector.embed_dim >= 1, "xvector.embed_dim must be >= 1");
  check(!c.xvector.channels.empty(), "xvector.channels must not be empty");
  check(c.xvector.channels.size() == c.xvector.dilations.size() &&
            c.xvector.channels.size() == c.xvector.kernels.size(),
        "xvector: channels/dilations/kernels sizes must agree");
  check(c.xvector.source == "trained" || c.xvector.source == "file",
        "xvector.source must be 'trained' or 'file'");
  check(c.xvector.source != "file" || !c.xvector.file_dir.empty(),
        "xvector.file_dir required when source=file");
  check(c.middle.source == "trained" || c.middle.source == "file",
        "middle.source must be 'trained' or 'file'");
  check(c.middle.source != "file" || !c.middle.file_dir.empty(),
        "middle.file_dir required when source=file");
  check(c.fusion.blocks.size() == 4, "fusion.blocks must have exactly 4 entries");
  check(c.fusion.gru_layers == 2, "fusion.gru_layers must be 2");
  check(c.fusion.gru_hidden >= 1, "fusion.gru_hidden must be >= 1");
  for (const auto& s : c.fusion.middle_selection) {
    if (s != "L3" && s != "L4" && s != "L5") {
      errors.push_back("fusion.middle_selection entries must be L3, L4, or L5");
      break;
    }
  }
  check(c.fusion.dropout >= 0.0 && c.fusion.dropout < 1.0,
        "fusion.dropout must be in [0, 1)");
  for (const auto& [name, epochs, batch] :
       {std::tuple{"xvector", c.xvector.epochs, c.xvector.batch},
        std::tuple{"middle", c.middle.epochs, c.middle.batch},
        std::tuple{"fusion", c.fusion.epochs, c.fusion.batch}}) {
    if (epochs < 1) errors.push_back(std::string(name) + ".epochs must be >= 1");
    if (batch < 1) errors.push_back(std::string(name) + ".batch must be >= 1");
  }
  check(c.fusion.patience >= 1, "fusion.patience must be >= 1");
  check(!c.seeds.empty(), "seeds must not be empty");
  check(c.jobs >= 1, "jobs must be >= 1");

  if (errors.empty()) {
    // geometry check needs valid numbers first
    try {
      model::FusionConfig fc = make_fusion_config(c, 2, 0);
      fc.validate();
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  return errors;
}

dsp::DspConfig make_dsp_config(const Config& c) {
  dsp::DspConfig out;
  out.stft.n_fft = c.dsp.n_fft;
  out.stft.hop = c.dsp.hop;
  out.stft.window = dsp::window_kind_from_string(c.dsp.window);
  out.n_mels = c.dsp.n_mels;
  out.f_min = c.dsp.f_min;
  out.f_max = c.dsp.f_max;
  out.log_floor = c.dsp.log_floor;
  return out;
}

embeddings::TdnnConfig make_tdnn_config(const Config& c, int n_classes) {
  embeddings::TdnnConfig out;
  out.in_dim = c.dsp.n_mels;
  out.channels = c.xvector.channels;
  out.dilations = c.xvector.dilations;
  out.kernels = c.xvector.kernels;
  out.embed_dim = c.xvector.embed_dim;
  out.n_classes = n_classes;
  return out;
}

embeddings::TrainHyper make_tdnn_hyper(const Config& c) {
  return {c.xvector.epochs, c.xvector.batch, c.xvector.lr};
}

embeddings::InceptionLiteConfig make_inception_config(const Config& c) {
  embeddings::InceptionLiteConfig out;
  out.in_mels = c.dsp.n_mels;
  out.stem_channels = c.middle.stem_channels;
  out.stem_pool_t = c.middle.stem_pool_t;
  out.stem_pool_f = c.middle.stem_pool_f;
  out.block1_channels = c.middle.block1_channels;
  out.block1_pool_t = c.middle.block1_pool_t;
  out.block1_pool_f = c.middle.block1_pool_f;
  out.block2_pool_t = c.middle.block2_pool_t;
  out.block2_pool_f = c.middle.block2_pool_f;
  out.dense1 = c.middle.dense1;
  out.dense2 = c.middle.dense2;
  return out;
}

embeddings::TrainHyper make_inception_hyper(const Config& c) {
  return {c.middle.epochs, c.middle.batch, c.middle.lr};
}

model::FusionConfig make_fusion_config(const Config& c, int n_classes, int frames) {
  model::FusionConfig out;
  out.blocks = c.fusion.blocks;
  out.gru_hidden = c.fusion.gru_hidden;
  out.gru_layers = c.fusion.gru_layers;
  out.middle_selection.clear();
  for (const auto& s : c.fusion.middle_selection) {
    out.middle_selection.push_back(model::tap_from_string(s));
  }
  out.timbre_enabled = c.fusion.timbre_enabled;
  out.timbre_dim = c.xvector.embed_dim;
  out.n_classes = n_classes;
  out.n_mels = c.dsp.n_mels;
  if (frames > 0) {
    out.frames = frames;
  } else {
    const auto window_samples = static_cast<long long>(c.dsp.window_s * c.dsp.sample_rate);
    out.frames = static_cast<int>((window_samples - c.dsp.n_fft) / c.dsp.hop) + 1;
  }
  out.dropout_p = c.fusion.dropout;
  return out;
}

model::FusionHyper make_fusion_hyper(const Config& c) {
  return {c.fusion.epochs, c.fusion.batch, c.fusion.lr, c.fusion.patience};
}

std::string resolved_data_root(const Config& c) {
  if (!c.paths.data_root.empty()) return c.paths.data_root;
  if (const char* env = std::getenv("VOXID_DATA_ROOT")) return env;
  return ".";
}

std::string resolved_cache_dir(const Config& c) {
  if (!c.paths.cache_dir.empty()) return c.paths.cache_dir;
  if (const char* env = std::getenv("VOXID_CACHE_DIR")) return env;
  return "cache";
}

}  // namespace voxid::config
