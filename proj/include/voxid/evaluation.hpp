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
// Metrics, multi-seed aggregation, the ablation harness, and
// bottleneck-embedding export.

#ifndef VOXID_EVALUATION_HPP_
#define VOXID_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxid/embeddings.hpp"
#include "voxid/model.hpp"
#include "voxid/pipeline.hpp"

namespace voxid::evaluation {

inline constexpr const char* kReportSchema = "voxid-report/1";
inline constexpr const char* kPaperReferenceLabel = "paper (Artist20, full scale)";

// Unweighted mean over classes of per-class F1. Classes absent from both
// predictions and labels contribute 0 and a warning (appended to
// `warnings` when given, otherwise printed to stderr).
double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                int n_classes, std::vector<std::string>* warnings = nullptr);

struct ConfusionMatrix {
  int k = 0;
  std::vector<int64_t> counts;  // row-major, rows = true class

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int n_classes)
      : k(n_classes), counts(static_cast<size_t>(n_classes) * n_classes, 0) {}
  static ConfusionMatrix from(const std::vector<int>& predictions,
                              const std::vector<int>& labels, int n_classes);

  int64_t at(int true_class, int pred_class) const {
    return counts[static_cast<size_t>(true_class) * k + pred_class];
  }
  int64_t total() const;
  nlohmann::json to_json() const;
};

// --- ablation plan -------------------------------------------------------------

struct AblationRowSpec {
  std::string id;
  bool timbre = true;
  std::vector<model::MiddleTap> selection;
};

// The canonical 9-row plan: the published ablation rows plus the plain
// CRNN baseline.
std::vector<AblationRowSpec> table4_plan();
// Subset used by the synthetic end-to-end benchmark.
std::vector<AblationRowSpec> bench_plan();
std::optional<AblationRowSpec> find_plan_row(const std::string& id);

// Published Artist20 full-scale numbers (f1_best, f1_avg) for a row id;
// reference constants only, never conflated with measured values.
std::optional<std::pair<double, double>> paper_reference(const std::string& id);

struct BaselineRow {
  std::string name;
  double f1_best;
  double f1_avg;
};
// Static reference rows (prior systems) for report rendering.
const std::vector<BaselineRow>& baseline_references();

// --- reports ---------------------------------------------------------------------

struct SeedResult {
  uint64_t seed = 0;
  double song_f1 = 0.0;
  double chunk_f1 = 0.0;
  int best_epoch = -1;
  ConfusionMatrix song_confusion;
  ConfusionMatrix chunk_confusion;
};

struct RunReport {
  std::string ablation_id;
  std::string config_hash;
  std::string status = "ok";  // "ok" | "failed: ..." | "not-run"
  std::vector<SeedResult> per_seed;
  double f1_best = 0.0;       // song-level max over seeds
  double f1_avg = 0.0;        // song-level mean over seeds
  double chunk_f1_best = 0.0;
  double chunk_f1_avg = 0.0;
  std::string generated_at;

  void aggregate();  // fills the best/avg fields from per_seed
  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
};

// Honors VOXID_FIXED_TIMESTAMP for byte-reproducible reports.
std::string report_timestamp();

void save_report(const std::filesystem::path& path, const RunReport& report);
RunReport load_report(const std::filesystem::path& path);

// Markdown / CSV renderings of a plan: measured columns next to the
// clearly labeled paper reference column.
std::string render_table_markdown(const std::vector<RunReport>& reports);
std::string render_table_csv(const std::vector<RunReport>& reports);

// --- harness -----------------------------------------------------------------------

struct AblationConfig {
  embeddings::TdnnConfig tdnn;
  embeddings::TrainHyper tdnn_hyper;
  embeddings::InceptionLiteConfig inception;
  embeddings::TrainHyper inception_hyper;
  model::FusionConfig fusion;  // geometry template; per-row flags overridden
  model::FusionHyper fusion_hyper;
  std::filesystem::path out_dir;
  std::string config_hash;
  int jobs = 1;
  bool save_checkpoints = true;
  // "trained" grows the extractors here; "file" ingests externally
  // produced per-chunk embeddings (e.g. real 512-d x-vectors).
  std::string timbre_source = "trained";
  std::string timbre_file_dir;
  std::string middle_source = "trained";  // file_dir wants l3/ l4/ l5/ subdirs
  std::string middle_file_dir;
};

// x-vector and selected-middle matrices for one row at one seed. With
// allow_training=false the extractors must already exist (checkpoints
// under out_dir/seed<seed>/, or the configured file dirs).
std::pair<neuralcore::Tensor, neuralcore::Tensor> load_seed_features(
    const pipeline::FeatureStore& store, const AblationConfig& config,
    const AblationRowSpec& row, uint64_t seed, bool allow_training);

struct LoadedRow {
  neuralcore::Tensor xvec;
  neuralcore::Tensor middle;
  std::unique_ptr<model::FusionModel> fusion;
};

// Rebuilds the nets for a row and loads their checkpoints from
// checkpoint_dir (xvector.vxc, middle.vxc, <row id>.vxc or fusion.vxc).
LoadedRow load_trained_row(const pipeline::FeatureStore& store,
                           const AblationConfig& config, const AblationRowSpec& row,
                           const std::filesystem::path& checkpoint_dir, uint64_t seed);

// Runs every row at every seed (extractors are trained once per seed and
// shared across rows). A failed run marks its row failed without aborting
// the plan. Reports and the rendered tables land in config.out_dir.
std::vector<RunReport> run_ablation(const std::vector<AblationRowSpec>& plan,
                                    const pipeline::FeatureStore& store,
                                    const AblationConfig& config,
                                    const std::vector<uint64_t>& seeds);

// CSV export of bottleneck vectors, one row per chunk:
// track_id, true label, predicted label, then the bottleneck components.
void export_bottlenecks(model::FusionModel& fusion, const pipeline::FeatureStore& store,
                        const neuralcore::Tensor& xvec, const neuralcore::Tensor& middle,
                        data::Subset subset, const std::filesystem::path& path);

}  // namespace voxid::evaluation

#endif  // VOXID_EVALUATION_HPP_
