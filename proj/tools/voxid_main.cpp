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
// voxid: singer-identification pipeline driver.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime/numeric.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxid/config.hpp"
#include "voxid/data.hpp"
#include "voxid/errors.hpp"
#include "voxid/evaluation.hpp"
#include "voxid/io.hpp"
#include "voxid/model.hpp"
#include "voxid/neuralcore/optim.hpp"
#include "voxid/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using voxid::ConfigError;
using voxid::DataError;
using voxid::InvalidArgumentError;

struct GlobalOpts {
  std::string config_file;
  std::string preset;  // empty = from file or default desk
  std::string data_root;
  std::string cache_dir;
  std::string out_dir;
  int jobs = 0;          // 0 = from config
  uint64_t seed = 0;     // 0 = from config
  std::string seeds;     // comma list, empty = from config
};

std::vector<uint64_t> parse_seed_list(const std::string& s) {
  std::vector<uint64_t> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

// precedence: flags > file > preset defaults
voxid::config::Config resolve_config(const GlobalOpts& g) {
  std::string preset = g.preset;
  nlohmann::json file_json;
  if (!g.config_file.empty()) {
    std::ifstream in(g.config_file);
    if (!in) throw ConfigError("cannot open config file: " + g.config_file);
    try {
      in >> file_json;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad config JSON: " + std::string(e.what()));
    }
    if (preset.empty() && file_json.contains("preset")) {
      preset = file_json["preset"].get<std::string>();
    }
  }
  if (preset.empty()) preset = "desk";
  voxid::config::Config c = voxid::config::preset_config(preset);
  if (!file_json.is_null()) c = voxid::config::merge_json(c, file_json);
  c.preset = preset;
  if (!g.data_root.empty()) c.paths.data_root = g.data_root;
  if (!g.cache_dir.empty()) c.paths.cache_dir = g.cache_dir;
  if (!g.out_dir.empty()) c.paths.out_dir = g.out_dir;
  if (g.jobs > 0) c.jobs = g.jobs;
  if (g.seed > 0) c.seed = g.seed;
  if (!g.seeds.empty()) c.seeds = parse_seed_list(g.seeds);

  const std::vector<std::string> errors = voxid::config::validate(c);
  if (!errors.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }
  std::cout << "config_hash: " << voxid::config::config_hash(c) << "\n";
  return c;
}

voxid::data::Split trivial_split(const voxid::data::DatasetManifest& manifest) {
  voxid::data::Split split;
  for (const auto& t : manifest.tracks) {
    split.albums[t.album_id] = voxid::data::Subset::kTrain;
  }
  return split;
}

voxid::pipeline::FeatureStore open_store(const voxid::config::Config& c,
                                         const std::string& manifest_path,
                                         const std::string& split_path,
                                         bool extract) {
  voxid::data::DatasetManifest manifest = voxid::data::load_manifest(manifest_path);
  voxid::data::Split split = split_path.empty() ? trivial_split(manifest)
                                                : voxid::data::load_split(split_path);
  voxid::pipeline::FeatureStore store(
      std::move(manifest), std::move(split), voxid::config::make_dsp_config(c),
      c.dsp.window_s, c.dsp.slide_s, voxid::config::resolved_data_root(c),
      voxid::config::resolved_cache_dir(c));
  if (extract) {
    store.extract_all(c.jobs, c.dsp.resample);
  } else {
    store.preload(c.jobs);
  }
  return store;
}

voxid::evaluation::AblationConfig make_ablation_config(
    const voxid::config::Config& c) {
  voxid::evaluation::AblationConfig ac;
  ac.tdnn = voxid::config::make_tdnn_config(c, 2);  // n_classes patched later
  ac.tdnn_hyper = voxid::config::make_tdnn_hyper(c);
  ac.inception = voxid::config::make_inception_config(c);
  ac.inception_hyper = voxid::config::make_inception_hyper(c);
  ac.fusion = voxid::config::make_fusion_config(c, 2, 0);
  ac.fusion_hyper = voxid::config::make_fusion_hyper(c);
  ac.out_dir = c.paths.out_dir;
  ac.config_hash = voxid::config::config_hash(c);
  ac.jobs = c.jobs;
  ac.timbre_source = c.xvector.source;
  ac.timbre_file_dir = c.xvector.file_dir;
  ac.middle_source = c.middle.source;
  ac.middle_file_dir = c.middle.file_dir;
  return ac;
}

std::vector<voxid::evaluation::AblationRowSpec> plan_by_name(const std::string& name) {
  if (name == "table4") return voxid::evaluation::table4_plan();
  if (name == "bench") return voxid::evaluation::bench_plan();
  throw ConfigError("unknown plan '" + name + "' (expected table4 or bench)");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"voxid - singer identification with timbre and middle-level features"};
  app.require_subcommand(1);
  app.fallthrough(true);

  GlobalOpts g;
  app.add_option("--config", g.config_file, "JSON config file (flags override it)");
  app.add_option("--preset", g.preset, "Config preset: desk or paper");
  app.add_option("--data-root", g.data_root,
                 "Dataset root (default: VOXID_DATA_ROOT or .)");
  app.add_option("--cache-dir", g.cache_dir,
                 "Feature cache dir (default: VOXID_CACHE_DIR or ./cache)");
  app.add_option("--out-dir", g.out_dir, "Output directory for checkpoints/reports");
  app.add_option("--jobs", g.jobs, "Worker thread bound");
  app.add_option("--seed", g.seed, "Seed for single-seed commands");
  app.add_option("--seeds", g.seeds, "Comma-separated seed list for multi-run commands");

  // --- synth ----------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate the synthetic desk-scale corpus");
  std::string synth_out = "synth_corpus";
  voxid::data::SynthSpec spec;
  synth->add_option("--out", synth_out, "Corpus output directory");
  synth->add_option("--artists", spec.n_artists, "Number of synthetic artists");
  synth->add_option("--albums-per-artist", spec.albums_per_artist, "Albums per artist");
  synth->add_option("--tracks-per-album", spec.tracks_per_album, "Tracks per album");
  synth->add_option("--duration", spec.track_duration_s, "Track duration in seconds");
  synth->add_option("--noise", spec.accompaniment_level,
                    "Shared accompaniment noise level");
  synth->add_option("--tilt", spec.album_tilt_db,
                    "Max album EQ high-shelf gain in dB (producer effect)");
  synth->callback([&]() {
    if (g.seed > 0) spec.seed = g.seed;
    nlohmann::json sj{{"n_artists", spec.n_artists},
                      {"albums_per_artist", spec.albums_per_artist},
                      {"tracks_per_album", spec.tracks_per_album},
                      {"track_duration_s", spec.track_duration_s},
                      {"sample_rate", spec.sample_rate},
                      {"seed", spec.seed},
                      {"accompaniment_level", spec.accompaniment_level},
                      {"album_tilt_db", spec.album_tilt_db}};
    char hash[24];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(voxid::fnv1a64(sj.dump())));
    std::cout << "config_hash: " << hash << "\n";
    const int jobs = g.jobs > 0 ? g.jobs : 2;
    const auto manifest = voxid::data::generate_synthetic_corpus(spec, synth_out, jobs);
    std::cout << "wrote " << manifest.tracks.size() << " tracks under " << synth_out
              << "\nmanifest: " << (fs::path(synth_out) / "manifest.csv").string()
              << "\n";
  });

  // --- extract ---------------------------------------------------------------
  auto* extract = app.add_subcommand("extract", "Extract log-mel features into the cache");
  std::string ex_manifest;
  extract->add_option("--manifest", ex_manifest, "Manifest CSV")->required();
  extract->callback([&]() {
    const auto c = resolve_config(g);
    const auto store = open_store(c, ex_manifest, "", /*extract=*/true);
    std::cout << "cached " << store.n_chunks() << " chunks ("
              << store.frames() << "x" << store.n_mels() << ") under "
              << voxid::config::resolved_cache_dir(c) << "\n";
  });

  // --- split -------------------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "Assign albums (or songs) to subsets");
  std::string sp_manifest, sp_mode = "album", sp_counts = "4,1,1", sp_out = "split.json";
  bool sp_proportional = false;
  split_cmd->add_option("--manifest", sp_manifest, "Manifest CSV")->required();
  split_cmd->add_option("--mode", sp_mode, "album (default) or song");
  split_cmd->add_option("--counts", sp_counts, "train,val,test album counts");
  split_cmd->add_flag("--proportional", sp_proportional,
                      "Scale counts to each artist's album count");
  split_cmd->add_option("--out", sp_out, "Split JSON output path");
  split_cmd->callback([&]() {
    const auto c = resolve_config(g);
    const auto manifest = voxid::data::load_manifest(sp_manifest);
    const auto counts_list = parse_seed_list(sp_counts);
    if (counts_list.size() != 3) throw ConfigError("--counts wants three numbers");
    voxid::data::SplitCounts counts{static_cast<int>(counts_list[0]),
                                    static_cast<int>(counts_list[1]),
                                    static_cast<int>(counts_list[2])};
    voxid::data::Split split;
    if (sp_mode == "album") {
      split = voxid::data::album_split(manifest, c.seed, counts, sp_proportional);
    } else if (sp_mode == "song") {
      split = voxid::data::song_split(manifest, c.seed, counts);
    } else {
      throw ConfigError("--mode must be album or song");
    }
    voxid::data::save_split(sp_out, split);
    int n_train = 0, n_val = 0, n_test = 0;
    for (const auto& t : manifest.tracks) {
      switch (split.subset_of(t)) {
        case voxid::data::Subset::kTrain: ++n_train; break;
        case voxid::data::Subset::kVal: ++n_val; break;
        case voxid::data::Subset::kTest: ++n_test; break;
      }
    }
    std::cout << "split written to " << sp_out << " (tracks: train " << n_train
              << ", val " << n_val << ", test " << n_test << ")\n";
  });

  // --- train ---------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train pipeline stages");
  std::string tr_manifest, tr_split, tr_stage = "all",
              tr_ablation = "CRNN+X-vector+L4";
  train->add_option("--manifest", tr_manifest, "Manifest CSV")->required();
  train->add_option("--split", tr_split, "Split JSON")->required();
  train->add_option("--stage", tr_stage, "all, xvector, middle, or fusion");
  train->add_option("--ablation", tr_ablation,
                    "Ablation row id (e.g. CRNN, CRNN+X-vector+L4)");
  train->callback([&]() {
    const auto c = resolve_config(g);
    auto store = open_store(c, tr_manifest, tr_split, /*extract=*/true);
    const auto row = voxid::evaluation::find_plan_row(tr_ablation);
    if (!row) throw ConfigError("unknown ablation id: " + tr_ablation);
    auto ac = make_ablation_config(c);
    const fs::path seed_dir = ac.out_dir / ("seed" + std::to_string(c.seed));

    if (tr_stage == "all") {
      const auto reports =
          voxid::evaluation::run_ablation({*row}, store, ac, {c.seed});
      std::cout << voxid::evaluation::render_table_markdown(reports);
      return;
    }
    if (tr_stage == "xvector") {
      auto tc = voxid::config::make_tdnn_config(c, store.n_classes());
      voxid::embeddings::XVectorNet net(tc, c.seed);
      const auto log = voxid::embeddings::train_xvector(
          net, store, voxid::config::make_tdnn_hyper(c), c.seed);
      auto params = net.params();
      voxid::neuralcore::save_checkpoint(seed_dir / "xvector.vxc", params);
      std::cout << "xvector: loss " << log.first_loss << " -> " << log.last_loss
                << ", checkpoint " << (seed_dir / "xvector.vxc").string() << "\n";
      return;
    }
    if (tr_stage == "middle") {
      voxid::embeddings::InceptionLiteNet net(
          voxid::config::make_inception_config(c), c.seed);
      const auto log = voxid::embeddings::train_middle_level(
          net, store, voxid::config::make_inception_hyper(c), c.seed);
      auto params = net.params();
      voxid::neuralcore::save_checkpoint(seed_dir / "middle.vxc", params);
      std::cout << "middle: loss " << log.first_loss << " -> " << log.last_loss
                << ", checkpoint " << (seed_dir / "middle.vxc").string() << "\n";
      return;
    }
    if (tr_stage == "fusion") {
      auto [xvec, middle] = voxid::evaluation::load_seed_features(
          store, ac, *row, c.seed, /*allow_training=*/false);
      auto fc = voxid::config::make_fusion_config(c, store.n_classes(), store.frames());
      fc.timbre_enabled = row->timbre;
      fc.middle_selection = row->selection;
      voxid::model::FusionModel fusion(fc, c.seed);
      const auto result = voxid::model::train_fusion(
          fusion, store, xvec, middle, voxid::config::make_fusion_hyper(c), c.seed,
          (seed_dir / "fusion.train.jsonl").string());
      auto params = fusion.params();
      voxid::neuralcore::save_checkpoint(seed_dir / "fusion.vxc", params);
      std::cout << "fusion: best val song F1 " << result.best_val_song_f1
                << " (epoch " << result.best_epoch << "), test song F1 "
                << result.test.song_f1 << "\n";
      return;
    }
    throw ConfigError("unknown stage: " + tr_stage);
  });

  // --- eval -------------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained fusion checkpoint");
  std::string ev_manifest, ev_split, ev_checkpoint, ev_ablation = "CRNN+X-vector+L4",
              ev_subset = "test";
  eval_cmd->add_option("--manifest", ev_manifest, "Manifest CSV")->required();
  eval_cmd->add_option("--split", ev_split, "Split JSON")->required();
  eval_cmd->add_option("--checkpoint-dir", ev_checkpoint,
                       "Directory holding xvector.vxc/middle.vxc/fusion .vxc files")
      ->required();
  eval_cmd->add_option("--ablation", ev_ablation, "Ablation row id");
  eval_cmd->add_option("--subset", ev_subset, "train, val, or test");
  eval_cmd->callback([&]() {
    const auto c = resolve_config(g);
    auto store = open_store(c, ev_manifest, ev_split, /*extract=*/true);
    const auto row = voxid::evaluation::find_plan_row(ev_ablation);
    if (!row) throw ConfigError("unknown ablation id: " + ev_ablation);
    auto ac = make_ablation_config(c);
    auto [xvec, middle, fusion] = voxid::evaluation::load_trained_row(
        store, ac, *row, ev_checkpoint, c.seed);
    const auto res = voxid::model::evaluate(
        *fusion, store, xvec, middle, voxid::data::subset_from_string(ev_subset),
        c.fusion.batch);
    std::cout << "song_f1: " << res.song_f1 << "\nchunk_f1: " << res.chunk_f1 << "\n";
  });

  // --- ablate --------------------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "Run an ablation plan over seeds");
  std::string ab_manifest, ab_split, ab_plan = "table4";
  bool ab_list_only = false;
  ablate->add_option("--manifest", ab_manifest, "Manifest CSV");
  ablate->add_option("--split", ab_split, "Split JSON");
  ablate->add_option("--plan", ab_plan, "table4 (canonical 9 rows) or bench");
  ablate->add_flag("--list-only", ab_list_only,
                   "Emit the plan table with paper reference columns, without training");
  ablate->callback([&]() {
    const auto c = resolve_config(g);
    const auto plan = plan_by_name(ab_plan);
    if (ab_list_only) {
      std::vector<voxid::evaluation::RunReport> reports;
      for (const auto& row : plan) {
        voxid::evaluation::RunReport r;
        r.ablation_id = row.id;
        r.status = "not-run";
        r.config_hash = voxid::config::config_hash(c);
        r.generated_at = voxid::evaluation::report_timestamp();
        reports.push_back(std::move(r));
      }
      std::cout << voxid::evaluation::render_table_markdown(reports);
      fs::create_directories(c.paths.out_dir);
      std::ofstream md(fs::path(c.paths.out_dir) / "ablation_table.md");
      md << voxid::evaluation::render_table_markdown(reports);
      std::ofstream csv(fs::path(c.paths.out_dir) / "ablation_table.csv");
      csv << voxid::evaluation::render_table_csv(reports);
      return;
    }
    if (ab_manifest.empty() || ab_split.empty()) {
      throw ConfigError("ablate needs --manifest and --split (or use --list-only)");
    }
    auto store = open_store(c, ab_manifest, ab_split, /*extract=*/true);
    const auto reports =
        voxid::evaluation::run_ablation(plan, store, make_ablation_config(c), c.seeds);
    std::cout << voxid::evaluation::render_table_markdown(reports);
  });

  // --- export-embeddings ------------------------------------------------------------------
  auto* exp = app.add_subcommand("export-embeddings",
                                 "Export bottleneck vectors for external visualization");
  std::string xp_manifest, xp_split, xp_checkpoint, xp_ablation = "CRNN+X-vector+L4",
              xp_subset = "test", xp_out = "bottlenecks.csv";
  exp->add_option("--manifest", xp_manifest, "Manifest CSV")->required();
  exp->add_option("--split", xp_split, "Split JSON")->required();
  exp->add_option("--checkpoint-dir", xp_checkpoint, "Trained checkpoint directory")
      ->required();
  exp->add_option("--ablation", xp_ablation, "Ablation row id");
  exp->add_option("--subset", xp_subset, "train, val, or test");
  exp->add_option("--out", xp_out, "Output CSV path");
  exp->callback([&]() {
    const auto c = resolve_config(g);
    auto store = open_store(c, xp_manifest, xp_split, /*extract=*/true);
    const auto row = voxid::evaluation::find_plan_row(xp_ablation);
    if (!row) throw ConfigError("unknown ablation id: " + xp_ablation);
    auto ac = make_ablation_config(c);
    auto [xvec, middle, fusion] = voxid::evaluation::load_trained_row(
        store, ac, *row, xp_checkpoint, c.seed);
    voxid::evaluation::export_bottlenecks(
        *fusion, store, xvec, middle, voxid::data::subset_from_string(xp_subset), xp_out);
    std::cout << "bottlenecks written to " << xp_out << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const voxid::Error& e) {
    nlohmann::json err{{"error", e.what()}};
    switch (e.code()) {
      case voxid::ErrorCode::kConfig:
        err["code"] = "config";
        std::cerr << err.dump() << "\n";
        return 2;
      case voxid::ErrorCode::kData:
      case voxid::ErrorCode::kCorruptFile:
      case voxid::ErrorCode::kIo:
        err["code"] = "data";
        std::cerr << err.dump() << "\n";
        return 3;
      default:
        err["code"] = "runtime";
        std::cerr << err.dump() << "\n";
        return 4;
    }
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}, {"code", "runtime"}};
    std::cerr << err.dump() << "\n";
    return 4;
  }
}
