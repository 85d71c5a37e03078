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

#include "voxid/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "voxid/errors.hpp"
#include "voxid/io.hpp"
#include "voxid/neuralcore/optim.hpp"

namespace voxid::evaluation {

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                int n_classes, std::vector<std::string>* warnings) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgumentError("macro_f1: predictions and labels differ in length");
  }
  if (n_classes < 1) throw InvalidArgumentError("macro_f1: n_classes must be >= 1");
  std::vector<int64_t> tp(static_cast<size_t>(n_classes), 0);
  std::vector<int64_t> fp(static_cast<size_t>(n_classes), 0);
  std::vector<int64_t> fn(static_cast<size_t>(n_classes), 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
      throw InvalidArgumentError("macro_f1: class index outside [0, K)");
    }
    if (t == p) {
      ++tp[static_cast<size_t>(t)];
    } else {
      ++fp[static_cast<size_t>(p)];
      ++fn[static_cast<size_t>(t)];
    }
  }
  double sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const auto ci = static_cast<size_t>(c);
    if (tp[ci] + fp[ci] + fn[ci] == 0) {
      const std::string msg = "macro_f1: class " + std::to_string(c) +
                              " absent from predictions and labels; scored 0";
      if (warnings != nullptr) {
        warnings->push_back(msg);
      } else {
        std::cerr << "warning: " << msg << "\n";
      }
      continue;  // contributes 0
    }
    const double prec = tp[ci] + fp[ci] > 0
                            ? static_cast<double>(tp[ci]) / static_cast<double>(tp[ci] + fp[ci])
                            : 0.0;
    const double rec = tp[ci] + fn[ci] > 0
                           ? static_cast<double>(tp[ci]) / static_cast<double>(tp[ci] + fn[ci])
                           : 0.0;
    if (prec + rec > 0.0) sum += 2.0 * prec * rec / (prec + rec);
  }
  return sum / n_classes;
}

ConfusionMatrix ConfusionMatrix::from(const std::vector<int>& predictions,
                                      const std::vector<int>& labels, int n_classes) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgumentError("ConfusionMatrix: length mismatch");
  }
  ConfusionMatrix cm(n_classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    cm.counts[static_cast<size_t>(labels[i]) * n_classes + predictions[i]] += 1;
  }
  return cm;
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t v : counts) t += v;
  return t;
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < k; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < k; ++j) row.push_back(at(i, j));
    rows.push_back(row);
  }
  return rows;
}

// --- plan ------------------------------------------------------------------------

std::vector<AblationRowSpec> table4_plan() {
  using model::MiddleTap;
  return {
      {"CRNN", false, {}},
      {"CRNN+X-vector", true, {}},
      {"CRNN+X-vector+L3", true, {MiddleTap::kL3}},
      {"CRNN+X-vector+L4", true, {MiddleTap::kL4}},
      {"CRNN+X-vector+L5", true, {MiddleTap::kL5}},
      {"CRNN+X-vector+L3+L4", true, {MiddleTap::kL3, MiddleTap::kL4}},
      {"CRNN+X-vector+L3+L5", true, {MiddleTap::kL3, MiddleTap::kL5}},
      {"CRNN+X-vector+L4+L5", true, {MiddleTap::kL4, MiddleTap::kL5}},
      {"CRNN+X-vector+All", true, {MiddleTap::kL3, MiddleTap::kL4, MiddleTap::kL5}},
  };
}

std::vector<AblationRowSpec> bench_plan() {
  using model::MiddleTap;
  return {
      {"CRNN", false, {}},
      {"CRNN+X-vector+L4", true, {MiddleTap::kL4}},
  };
}

std::optional<AblationRowSpec> find_plan_row(const std::string& id) {
  for (const auto& row : table4_plan()) {
    if (row.id == id) return row;
  }
  return std::nullopt;
}

std::optional<std::pair<double, double>> paper_reference(const std::string& id) {
  static const std::map<std::string, std::pair<double, double>> kRefs = {
      {"CRNN", {0.61, 0.60}},
      {"CRNN+X-vector", {0.72, 0.71}},
      {"CRNN+X-vector+L3", {0.81, 0.80}},
      {"CRNN+X-vector+L4", {0.86, 0.81}},
      {"CRNN+X-vector+L5", {0.79, 0.78}},
      {"CRNN+X-vector+L3+L4", {0.71, 0.70}},
      {"CRNN+X-vector+L3+L5", {0.80, 0.80}},
      {"CRNN+X-vector+L4+L5", {0.77, 0.76}},
      {"CRNN+X-vector+All", {0.78, 0.77}},
  };
  auto it = kRefs.find(id);
  if (it == kRefs.end()) return std::nullopt;
  return it->second;
}

const std::vector<BaselineRow>& baseline_references() {
  static const std::vector<BaselineRow> kRows = {
      {"SVM (MFCC features)", 0.49, 0.48},
      {"HMM", 0.52, 0.51},
      {"SVM (BOF features)", 0.58, 0.56},
      {"Neural Network", 0.57, 0.56},
      {"CRNN", 0.61, 0.60},
      {"CRNNM", 0.75, 0.73},
  };
  return kRows;
}

// --- reports -----------------------------------------------------------------------

std::string report_timestamp() {
  if (const char* fixed = std::getenv("VOXID_FIXED_TIMESTAMP")) {
    return fixed;
  }
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&tt, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void RunReport::aggregate() {
  f1_best = 0.0;
  chunk_f1_best = 0.0;
  double song_sum = 0.0, chunk_sum = 0.0;
  for (const auto& s : per_seed) {
    f1_best = std::max(f1_best, s.song_f1);
    chunk_f1_best = std::max(chunk_f1_best, s.chunk_f1);
    song_sum += s.song_f1;
    chunk_sum += s.chunk_f1;
  }
  const double n = per_seed.empty() ? 1.0 : static_cast<double>(per_seed.size());
  f1_avg = song_sum / n;
  chunk_f1_avg = chunk_sum / n;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["ablation_id"] = ablation_id;
  j["config_hash"] = config_hash;
  j["status"] = status;
  j["f1_best"] = f1_best;
  j["f1_avg"] = f1_avg;
  j["chunk_f1_best"] = chunk_f1_best;
  j["chunk_f1_avg"] = chunk_f1_avg;
  j["generated_at"] = generated_at;
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : per_seed) {
    nlohmann::json sj;
    sj["seed"] = s.seed;
    sj["song_f1"] = s.song_f1;
    sj["chunk_f1"] = s.chunk_f1;
    sj["best_epoch"] = s.best_epoch;
    sj["song_confusion"] = s.song_confusion.to_json();
    sj["chunk_confusion"] = s.chunk_confusion.to_json();
    seeds.push_back(sj);
  }
  j["per_seed"] = seeds;
  if (auto ref = paper_reference(ablation_id)) {
    j["paper_reference"] = {{"label", kPaperReferenceLabel},
                            {"f1_best", ref->first},
                            {"f1_avg", ref->second}};
  }
  return j;
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  if (!j.contains("schema") || j["schema"] != kReportSchema) {
    throw CorruptFileError("unknown report schema");
  }
  RunReport r;
  r.ablation_id = j.at("ablation_id").get<std::string>();
  r.config_hash = j.value("config_hash", "");
  r.status = j.value("status", "ok");
  r.f1_best = j.value("f1_best", 0.0);
  r.f1_avg = j.value("f1_avg", 0.0);
  r.chunk_f1_best = j.value("chunk_f1_best", 0.0);
  r.chunk_f1_avg = j.value("chunk_f1_avg", 0.0);
  r.generated_at = j.value("generated_at", "");
  if (j.contains("per_seed")) {
    for (const auto& sj : j["per_seed"]) {
      SeedResult s;
      s.seed = sj.at("seed").get<uint64_t>();
      s.song_f1 = sj.at("song_f1").get<double>();
      s.chunk_f1 = sj.at("chunk_f1").get<double>();
      s.best_epoch = sj.value("best_epoch", -1);
      if (sj.contains("song_confusion")) {
        const auto& rows = sj["song_confusion"];
        s.song_confusion = ConfusionMatrix(static_cast<int>(rows.size()));
        for (size_t a = 0; a < rows.size(); ++a) {
          for (size_t b = 0; b < rows[a].size(); ++b) {
            s.song_confusion.counts[a * rows.size() + b] = rows[a][b].get<int64_t>();
          }
        }
      }
      if (sj.contains("chunk_confusion")) {
        const auto& rows = sj["chunk_confusion"];
        s.chunk_confusion = ConfusionMatrix(static_cast<int>(rows.size()));
        for (size_t a = 0; a < rows.size(); ++a) {
          for (size_t b = 0; b < rows[a].size(); ++b) {
            s.chunk_confusion.counts[a * rows.size() + b] = rows[a][b].get<int64_t>();
          }
        }
      }
      r.per_seed.push_back(std::move(s));
    }
  }
  return r;
}

void save_report(const std::filesystem::path& path, const RunReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << report.to_json().dump(2) << "\n";
}

RunReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("bad report JSON: " + std::string(e.what()));
  }
  return RunReport::from_json(j);
}

namespace {

std::string fmt2(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string render_table_markdown(const std::vector<RunReport>& reports) {
  std::ostringstream os;
  os << "| Model | F1/best | F1/avg | " << kPaperReferenceLabel
     << " F1/best | F1/avg | status |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    const auto ref = paper_reference(r.ablation_id);
    const bool ran = r.status == "ok";
    os << "| " << r.ablation_id << " | " << (ran ? fmt4(r.f1_best) : std::string("-"))
       << " | " << (ran ? fmt4(r.f1_avg) : std::string("-")) << " | "
       << (ref ? fmt2(ref->first) : std::string("-")) << " | "
       << (ref ? fmt2(ref->second) : std::string("-")) << " | " << r.status << " |\n";
  }
  return os.str();
}

std::string render_table_csv(const std::vector<RunReport>& reports) {
  std::ostringstream os;
  os << "ablation_id,f1_best,f1_avg,chunk_f1_best,chunk_f1_avg,"
        "paper_f1_best,paper_f1_avg,status\n";
  for (const auto& r : reports) {
    const auto ref = paper_reference(r.ablation_id);
    const bool ran = r.status == "ok";
    os << r.ablation_id << "," << (ran ? fmt4(r.f1_best) : std::string("")) << ","
       << (ran ? fmt4(r.f1_avg) : std::string("")) << ","
       << (ran ? fmt4(r.chunk_f1_best) : std::string("")) << ","
       << (ran ? fmt4(r.chunk_f1_avg) : std::string("")) << ","
       << (ref ? fmt2(ref->first) : std::string("")) << ","
       << (ref ? fmt2(ref->second) : std::string("")) << "," << r.status << "\n";
  }
  return os.str();
}

// --- harness ------------------------------------------------------------------------

namespace {

std::string sanitize_id(const std::string& id) {
  std::string out;
  for (char c : id) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  }
  return out;
}

struct SeedArtifacts {
  neuralcore::Tensor xvec;  // n_chunks x E, empty when unused
  embeddings::MiddleMatrices middle;
};

}  // namespace

std::vector<RunReport> run_ablation(const std::vector<AblationRowSpec>& plan,
                                    const pipeline::FeatureStore& store,
                                    const AblationConfig& config,
                                    const std::vector<uint64_t>& seeds) {
  if (plan.empty()) throw InvalidArgumentError("run_ablation: empty plan");
  if (seeds.empty()) throw InvalidArgumentError("run_ablation: no seeds");
  std::filesystem::create_directories(config.out_dir);

  bool need_xvec = false, need_middle = false;
  for (const auto& row : plan) {
    need_xvec = need_xvec || row.timbre;
    need_middle = need_middle || !row.selection.empty();
  }

  // Phase A: one extractor pair per seed, shared by every row.
  std::map<uint64_t, SeedArtifacts> artifacts;
  for (uint64_t s : seeds) artifacts[s] = SeedArtifacts{};
  {
    std::vector<std::function<void()>> tasks;
    for (uint64_t seed : seeds) {
      tasks.push_back([&, seed]() {
        SeedArtifacts& art = artifacts.at(seed);
        const auto seed_dir = config.out_dir / ("seed" + std::to_string(seed));
        if (need_xvec) {
          if (config.timbre_source == "file") {
            art.xvec = embeddings::load_chunk_embeddings_dir(
                store, config.timbre_file_dir, config.fusion.timbre_dim);
          } else {
            embeddings::TdnnConfig tc = config.tdnn;
            tc.n_classes = store.n_classes();
            embeddings::XVectorNet net(tc, seed);
            embeddings::train_xvector(net, store, config.tdnn_hyper, seed);
            if (config.save_checkpoints) {
              auto params = net.params();
              neuralcore::save_checkpoint(seed_dir / "xvector.vxc", params);
            }
            art.xvec = embeddings::extract_xvectors_all(net, store, 1);
          }
        }
        if (need_middle) {
          if (config.middle_source == "file") {
            art.middle = embeddings::load_middle_dir(store, config.middle_file_dir);
          } else {
            embeddings::InceptionLiteNet net(config.inception, seed);
            embeddings::train_middle_level(net, store, config.inception_hyper, seed);
            if (config.save_checkpoints) {
              auto params = net.params();
              neuralcore::save_checkpoint(seed_dir / "middle.vxc", params);
            }
            art.middle = embeddings::extract_middle_all(net, store, 1);
          }
        }
      });
    }
    pipeline::run_parallel(tasks, config.jobs);
  }

  // Phase B: per (row, seed) fusion training.
  struct Cell {
    SeedResult result;
    std::string error;
  };
  std::vector<std::vector<Cell>> cells(plan.size(),
                                       std::vector<Cell>(seeds.size()));
  {
    std::vector<std::function<void()>> tasks;
    for (size_t ri = 0; ri < plan.size(); ++ri) {
      for (size_t si = 0; si < seeds.size(); ++si) {
        tasks.push_back([&, ri, si]() {
          const AblationRowSpec& row = plan[ri];
          const uint64_t seed = seeds[si];
          Cell& cell = cells[ri][si];
          try {
            model::FusionConfig fc = config.fusion;
            fc.timbre_enabled = row.timbre;
            fc.middle_selection = row.selection;
            fc.n_classes = store.n_classes();
            fc.frames = store.frames();
            fc.n_mels = store.n_mels();
            model::FusionModel fusion(fc, seed);
            const SeedArtifacts& art = artifacts.at(seed);
            const neuralcore::Tensor middle =
                model::select_middle(art.middle, row.selection);
            const auto log_path =
                config.out_dir / ("seed" + std::to_string(seed)) /
                (sanitize_id(row.id) + ".train.jsonl");
            model::TrainResult tr = model::train_fusion(
                fusion, store, row.timbre ? art.xvec : neuralcore::Tensor(), middle,
                config.fusion_hyper, seed, log_path.string());
            if (config.save_checkpoints) {
              auto params = fusion.params();
              neuralcore::save_checkpoint(
                  config.out_dir / ("seed" + std::to_string(seed)) /
                      (sanitize_id(row.id) + ".vxc"),
                  params);
            }
            cell.result.seed = seed;
            cell.result.song_f1 = tr.test.song_f1;
            cell.result.chunk_f1 = tr.test.chunk_f1;
            cell.result.best_epoch = tr.best_epoch;
            cell.result.song_confusion = ConfusionMatrix::from(
                tr.test.song_pred, tr.test.song_true, store.n_classes());
            cell.result.chunk_confusion = ConfusionMatrix::from(
                tr.test.chunk_pred, tr.test.chunk_true, store.n_classes());
          } catch (const std::exception& e) {
            cell.error = e.what();
          }
        });
      }
    }
    pipeline::run_parallel(tasks, config.jobs);
  }

  // Aggregate in plan order.
  std::vector<RunReport> reports;
  reports.reserve(plan.size());
  for (size_t ri = 0; ri < plan.size(); ++ri) {
    RunReport report;
    report.ablation_id = plan[ri].id;
    report.config_hash = config.config_hash;
    report.generated_at = report_timestamp();
    std::string error;
    for (size_t si = 0; si < seeds.size(); ++si) {
      if (!cells[ri][si].error.empty()) {
        error = cells[ri][si].error;
        break;
      }
      report.per_seed.push_back(cells[ri][si].result);
    }
    if (!error.empty()) {
      report.status = "failed: " + error;
      report.per_seed.clear();
    }
    report.aggregate();
    save_report(config.out_dir / ("report_" + sanitize_id(plan[ri].id) + ".json"),
                report);
    reports.push_back(std::move(report));
  }

  // Single-writer contract for the shared table files.
  {
    io::FileLock lock(config.out_dir / "table.lock");
    std::ofstream md(config.out_dir / "ablation_table.md", std::ios::trunc);
    md << render_table_markdown(reports);
    std::ofstream csv(config.out_dir / "ablation_table.csv", std::ios::trunc);
    csv << render_table_csv(reports);
  }
  return reports;
}

std::pair<neuralcore::Tensor, neuralcore::Tensor> load_seed_features(
    const pipeline::FeatureStore& store, const AblationConfig& config,
    const AblationRowSpec& row, uint64_t seed, bool allow_training) {
  neuralcore::Tensor xvec;
  neuralcore::Tensor middle;
  const auto seed_dir = config.out_dir / ("seed" + std::to_string(seed));
  if (row.timbre) {
    if (config.timbre_source == "file") {
      xvec = embeddings::load_chunk_embeddings_dir(store, config.timbre_file_dir,
                                                   config.fusion.timbre_dim);
    } else {
      embeddings::TdnnConfig tc = config.tdnn;
      tc.n_classes = store.n_classes();
      embeddings::XVectorNet net(tc, seed);
      auto params = net.params();
      const auto ckpt = seed_dir / "xvector.vxc";
      if (std::filesystem::exists(ckpt)) {
        neuralcore::load_checkpoint(ckpt, params);
      } else if (allow_training) {
        embeddings::train_xvector(net, store, config.tdnn_hyper, seed);
      } else {
        throw DataError("missing x-vector checkpoint: " + ckpt.string());
      }
      xvec = embeddings::extract_xvectors_all(net, store, 1);
    }
  }
  if (!row.selection.empty()) {
    embeddings::MiddleMatrices mats;
    if (config.middle_source == "file") {
      mats = embeddings::load_middle_dir(store, config.middle_file_dir);
    } else {
      embeddings::InceptionLiteNet net(config.inception, seed);
      auto params = net.params();
      const auto ckpt = seed_dir / "middle.vxc";
      if (std::filesystem::exists(ckpt)) {
        neuralcore::load_checkpoint(ckpt, params);
      } else if (allow_training) {
        embeddings::train_middle_level(net, store, config.inception_hyper, seed);
      } else {
        throw DataError("missing middle-level checkpoint: " + ckpt.string());
      }
      mats = embeddings::extract_middle_all(net, store, 1);
    }
    middle = model::select_middle(mats, row.selection);
  }
  return {std::move(xvec), std::move(middle)};
}

LoadedRow load_trained_row(const pipeline::FeatureStore& store,
                           const AblationConfig& config, const AblationRowSpec& row,
                           const std::filesystem::path& checkpoint_dir, uint64_t seed) {
  // Accept either the run_ablation output root (which holds seed<N>/
  // subdirectories) or a seed directory itself.
  std::filesystem::path dir = checkpoint_dir;
  const auto seed_sub = checkpoint_dir / ("seed" + std::to_string(seed));
  if (std::filesystem::is_directory(seed_sub)) dir = seed_sub;

  LoadedRow out;
  if (row.timbre) {
    if (config.timbre_source == "file") {
      out.xvec = embeddings::load_chunk_embeddings_dir(
          store, config.timbre_file_dir, config.fusion.timbre_dim);
    } else {
      embeddings::TdnnConfig tc = config.tdnn;
      tc.n_classes = store.n_classes();
      embeddings::XVectorNet net(tc, seed);
      auto params = net.params();
      neuralcore::load_checkpoint(dir / "xvector.vxc", params);
      out.xvec = embeddings::extract_xvectors_all(net, store, 1);
    }
  }
  if (!row.selection.empty()) {
    embeddings::MiddleMatrices mats;
    if (config.middle_source == "file") {
      mats = embeddings::load_middle_dir(store, config.middle_file_dir);
    } else {
      embeddings::InceptionLiteNet net(config.inception, seed);
      auto params = net.params();
      neuralcore::load_checkpoint(dir / "middle.vxc", params);
      mats = embeddings::extract_middle_all(net, store, 1);
    }
    out.middle = model::select_middle(mats, row.selection);
  }

  model::FusionConfig fc = config.fusion;
  fc.timbre_enabled = row.timbre;
  fc.middle_selection = row.selection;
  fc.n_classes = store.n_classes();
  fc.frames = store.frames();
  fc.n_mels = store.n_mels();
  out.fusion = std::make_unique<model::FusionModel>(fc, seed);
  auto params = out.fusion->params();
  const auto named = dir / (sanitize_id(row.id) + ".vxc");
  const auto generic = dir / "fusion.vxc";
  if (std::filesystem::exists(named)) {
    neuralcore::load_checkpoint(named, params);
  } else if (std::filesystem::exists(generic)) {
    neuralcore::load_checkpoint(generic, params);
  } else {
    throw DataError("no fusion checkpoint (" + named.string() + " or " +
                    generic.string() + ")");
  }
  return out;
}

void export_bottlenecks(model::FusionModel& fusion, const pipeline::FeatureStore& store,
                        const neuralcore::Tensor& xvec, const neuralcore::Tensor& middle,
                        data::Subset subset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write bottleneck export: " + path.string());

  const std::vector<int> ids = store.subset_chunks(subset);
  for (int ci : ids) {
    neuralcore::Graph g;
    std::vector<int> one{ci};
    neuralcore::Tensor mel = store.batch_mel(one);
    neuralcore::Tensor xv, md;
    if (xvec.size() > 0) {
      xv = neuralcore::Tensor({1, xvec.dim(1)});
      std::copy_n(xvec.data() + static_cast<size_t>(ci) * xvec.dim(1), xvec.dim(1),
                  xv.data());
    }
    if (middle.size() > 0) {
      md = neuralcore::Tensor({1, middle.dim(1)});
      std::copy_n(middle.data() + static_cast<size_t>(ci) * middle.dim(1),
                  middle.dim(1), md.data());
    }
    model::FusionOutput fo = fusion.forward(g, mel, xv, md, /*training=*/false);
    neuralcore::Value sm = g.softmax_rows(fo.logits);
    const neuralcore::Tensor& probs = g.value(sm);
    int pred = 0;
    for (int j = 1; j < probs.dim(1); ++j) {
      if (probs[j] > probs[pred]) pred = j;
    }
    const neuralcore::Tensor& b = g.value(fo.bottleneck);
    out << store.chunk(ci).track_id << "," << store.chunk(ci).label << "," << pred;
    for (int64_t j = 0; j < b.size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", b[j]);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace voxid::evaluation
