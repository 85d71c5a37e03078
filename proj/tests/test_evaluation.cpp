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
#include <cstdlib>
#include <fstream>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "voxid/errors.hpp"
#include "voxid/io.hpp"
#include "voxid/rng.hpp"

using namespace voxid;
using evaluation::ConfusionMatrix;
using evaluation::RunReport;

namespace {

// Independent brute-force macro-F1: explicit per-class precision/recall
// loops straight from the confusion matrix definition.
double brute_force_macro_f1(const std::vector<int>& preds,
                            const std::vector<int>& labels, int k) {
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      const bool is_true = labels[i] == c;
      const bool is_pred = preds[i] == c;
      if (is_true && is_pred) ++tp;
      if (!is_true && is_pred) ++fp;
      if (is_true && !is_pred) ++fn;
    }
    double f1 = 0.0;
    if (tp > 0) {
      const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
      f1 = 2.0 * prec * rec / (prec + rec);
    }
    total += f1;
  }
  return total / k;
}

}  // namespace

TEST_CASE("macro f1 hand-computed cases") {
  SUBCASE("perfect predictions") {
    CHECK(evaluation::macro_f1({0, 1, 2}, {0, 1, 2}, 3) == doctest::Approx(1.0));
  }
  SUBCASE("K=2 labels [0,0,1,1] preds [0,1,1,1] -> 0.7333") {
    const double f1 = evaluation::macro_f1({0, 1, 1, 1}, {0, 0, 1, 1}, 2);
    CHECK(std::abs(f1 - (2.0 / 3.0 + 0.8) / 2.0) <= 1e-9);
    CHECK(f1 == doctest::Approx(0.733333333).epsilon(1e-8));
  }
  SUBCASE("all-one-class predictions on balanced data -> 0.3333") {
    const double f1 = evaluation::macro_f1({1, 1}, {0, 1}, 2);
    CHECK(std::abs(f1 - (2.0 / 3.0) / 2.0) <= 1e-9);
  }
  SUBCASE("absent class contributes zero and warns") {
    std::vector<std::string> warnings;
    const double f1 = evaluation::macro_f1({0, 0}, {0, 0}, 3, &warnings);
    CHECK(f1 == doctest::Approx(1.0 / 3.0));
    CHECK(warnings.size() == 2);  // classes 1 and 2 both absent
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(evaluation::macro_f1({0}, {0, 1}, 2), InvalidArgumentError);
  }
  SUBCASE("permutation invariance") {
    const std::vector<int> preds{0, 1, 2, 1, 0, 2, 2};
    const std::vector<int> labels{0, 1, 1, 1, 2, 2, 0};
    const double a = evaluation::macro_f1(preds, labels, 3);
    // apply the same permutation to both
    const std::vector<int> order{3, 0, 6, 2, 5, 1, 4};
    std::vector<int> p2, l2;
    for (int i : order) {
      p2.push_back(preds[static_cast<size_t>(i)]);
      l2.push_back(labels[static_cast<size_t>(i)]);
    }
    CHECK(evaluation::macro_f1(p2, l2, 3) == doctest::Approx(a).epsilon(1e-15));
  }
}

TEST_CASE("macro f1 equals the brute-force implementation on 1000 random cases") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(0, 8));
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 49));
    std::vector<int> preds(static_cast<size_t>(n)), labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      preds[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, k - 1));
      labels[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, k - 1));
    }
    std::vector<std::string> warnings;
    const double lib = evaluation::macro_f1(preds, labels, k, &warnings);
    const double oracle = brute_force_macro_f1(preds, labels, k);
    CHECK(lib == oracle);  // exact equality
  }
}

TEST_CASE("confusion matrix") {
  const auto cm = ConfusionMatrix::from({0, 1, 1, 0}, {0, 1, 0, 0}, 2);
  CHECK(cm.at(0, 0) == 2);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.total() == 4);
  const auto j = cm.to_json();
  CHECK(j[0][1].get<int64_t>() == 1);
}

TEST_CASE("ablation plan and paper reference constants") {
  const auto plan = evaluation::table4_plan();
  REQUIRE(plan.size() == 9);

  SUBCASE("ids are unique") {
    std::set<std::string> ids;
    for (const auto& row : plan) CHECK(ids.insert(row.id).second);
  }
  SUBCASE("reference column reproduces the published numbers") {
    using P = std::pair<double, double>;
    const std::vector<std::pair<std::string, P>> expected = {
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
    for (const auto& [id, ref] : expected) {
      const auto got = evaluation::paper_reference(id);
      REQUIRE(got.has_value());
      CHECK(got->first == ref.first);
      CHECK(got->second == ref.second);
    }
    CHECK_FALSE(evaluation::paper_reference("CRNN+nothing").has_value());
  }
  SUBCASE("row selections match their names") {
    for (const auto& row : plan) {
      if (row.id == "CRNN") {
        CHECK_FALSE(row.timbre);
        CHECK(row.selection.empty());
      }
      if (row.id == "CRNN+X-vector+All") CHECK(row.selection.size() == 3);
      if (row.id == "CRNN+X-vector+L4") {
        REQUIRE(row.selection.size() == 1);
        CHECK(row.selection[0] == model::MiddleTap::kL4);
      }
    }
  }
  SUBCASE("baseline reference rows include the prior systems") {
    const auto& rows = evaluation::baseline_references();
    REQUIRE(rows.size() == 6);
    CHECK(rows.back().name == "CRNNM");
    CHECK(rows.back().f1_best == 0.75);
    CHECK(rows.back().f1_avg == 0.73);
  }
}

TEST_CASE("run report aggregation and json round trip") {
  RunReport r;
  r.ablation_id = "CRNN+X-vector+L4";
  r.config_hash = "cafe";
  r.generated_at = "2026-01-01T00:00:00Z";
  for (auto [seed, song, chunk] :
       {std::tuple{1, 0.5, 0.4}, std::tuple{2, 0.7, 0.6}, std::tuple{3, 0.6, 0.5}}) {
    evaluation::SeedResult s;
    s.seed = static_cast<uint64_t>(seed);
    s.song_f1 = song;
    s.chunk_f1 = chunk;
    s.song_confusion = ConfusionMatrix(2);
    s.chunk_confusion = ConfusionMatrix(2);
    r.per_seed.push_back(s);
  }
  r.aggregate();
  // injected per-seed scores (0.5, 0.7, 0.6) -> best 0.7, avg 0.6
  CHECK(r.f1_best == doctest::Approx(0.7));
  CHECK(r.f1_avg == doctest::Approx(0.6));
  CHECK(r.f1_best >= r.f1_avg);

  const auto j = r.to_json();
  CHECK(j["schema"] == "voxid-report/1");
  CHECK(j["paper_reference"]["f1_best"] == 0.86);
  CHECK(j["paper_reference"]["label"] == evaluation::kPaperReferenceLabel);

  const RunReport back = RunReport::from_json(j);
  CHECK(back.ablation_id == r.ablation_id);
  CHECK(back.f1_avg == r.f1_avg);
  CHECK(back.per_seed.size() == 3);
  CHECK(back.per_seed[1].song_f1 == 0.7);

  voxid_test::TempDir dir("report");
  evaluation::save_report(dir.path() / "r.json", r);
  const RunReport loaded = evaluation::load_report(dir.path() / "r.json");
  CHECK(loaded.f1_best == r.f1_best);
}

TEST_CASE("report timestamp honors VOXID_FIXED_TIMESTAMP") {
  setenv("VOXID_FIXED_TIMESTAMP", "1970-01-01T00:00:00Z", 1);
  CHECK(evaluation::report_timestamp() == "1970-01-01T00:00:00Z");
  unsetenv("VOXID_FIXED_TIMESTAMP");
  const auto now = evaluation::report_timestamp();
  CHECK(now.size() == 20);
  CHECK(now.back() == 'Z');
}

TEST_CASE("table rendering carries the labeled reference column") {
  RunReport r;
  r.ablation_id = "CRNN+X-vector+L4";
  r.status = "not-run";
  const std::string md = evaluation::render_table_markdown({r});
  CHECK(md.find(evaluation::kPaperReferenceLabel) != std::string::npos);
  CHECK(md.find("0.86") != std::string::npos);
  CHECK(md.find("0.81") != std::string::npos);
  const std::string csv = evaluation::render_table_csv({r});
  CHECK(csv.find("0.86") != std::string::npos);
  CHECK(csv.find("not-run") != std::string::npos);
}

TEST_CASE("run_ablation on the tiny corpus emits reports and tables") {
  auto corpus = voxid_test::make_tiny_corpus("ablate", 2, 1, 71);
  auto& store = *corpus.store;
  voxid_test::TempDir out("ablate_out");

  evaluation::AblationConfig ac;
  ac.tdnn.in_dim = store.n_mels();
  ac.tdnn.channels = {8, 8};
  ac.tdnn.dilations = {1, 2};
  ac.tdnn.kernels = {3, 3};
  ac.tdnn.embed_dim = 6;
  ac.tdnn_hyper = {2, 8, 2e-3};
  ac.inception.in_mels = store.n_mels();
  ac.inception.stem_channels = 4;
  ac.inception.block1_channels = 16;
  ac.inception.dense1 = 8;
  ac.inception.dense2 = 8;
  ac.inception_hyper = {2, 8, 2e-3};
  ac.fusion.blocks = {{4, 2, 2}, {8, 2, 2}, {8, 2, 2}, {8, 2, 2}};
  ac.fusion.gru_hidden = 8;
  ac.fusion.timbre_dim = 6;
  ac.fusion_hyper = {2, 8, 2e-3, 5};
  ac.out_dir = out.path();
  ac.config_hash = "test";
  ac.jobs = 2;

  setenv("VOXID_FIXED_TIMESTAMP", "1970-01-01T00:00:00Z", 1);
  const auto reports = evaluation::run_ablation(
      evaluation::bench_plan(), store, ac, {5, 6});
  unsetenv("VOXID_FIXED_TIMESTAMP");

  REQUIRE(reports.size() == 2);
  for (const auto& r : reports) {
    CHECK(r.status == "ok");
    CHECK(r.per_seed.size() == 2);
    CHECK(r.f1_best >= r.f1_avg);
    CHECK(r.f1_best <= 1.0);
    CHECK(std::filesystem::exists(
        out.path() / ("report_" + std::string(r.ablation_id == "CRNN"
                                                  ? "CRNN"
                                                  : "CRNN_X_vector_L4") +
                      ".json")));
  }
  CHECK(std::filesystem::exists(out.path() / "ablation_table.md"));
  CHECK(std::filesystem::exists(out.path() / "ablation_table.csv"));
  CHECK(std::filesystem::exists(out.path() / "seed5" / "xvector.vxc"));
  CHECK(std::filesystem::exists(out.path() / "seed5" / "middle.vxc"));
  CHECK(std::filesystem::exists(out.path() / "seed6" / "CRNN.vxc"));

  SUBCASE("load_trained_row rebuilds an evaluable model") {
    const auto row = evaluation::find_plan_row("CRNN+X-vector+L4");
    REQUIRE(row.has_value());
    auto loaded = evaluation::load_trained_row(store, ac, *row, out.path(), 5);
    const auto res = model::evaluate(*loaded.fusion, store, loaded.xvec,
                                     loaded.middle, data::Subset::kTest, 8);
    // must reproduce the reported seed-5 test score exactly
    const auto& rep = reports[1];
    REQUIRE(rep.ablation_id == "CRNN+X-vector+L4");
    CHECK(res.song_f1 == rep.per_seed[0].song_f1);
  }
  SUBCASE("export_bottlenecks rows and columns") {
    const auto row = evaluation::find_plan_row("CRNN");
    auto loaded = evaluation::load_trained_row(store, ac, *row, out.path(), 5);
    const auto csv_path = out.path() / "bottlenecks.csv";
    evaluation::export_bottlenecks(*loaded.fusion, store, loaded.xvec, loaded.middle,
                                   data::Subset::kTest, csv_path);
    std::ifstream in(csv_path);
    std::string line;
    int rows = 0;
    int cols = -1;
    while (std::getline(in, line)) {
      ++rows;
      const int commas = static_cast<int>(std::count(line.begin(), line.end(), ','));
      if (cols < 0) cols = commas + 1;
      CHECK(commas + 1 == cols);
    }
    CHECK(rows == static_cast<int>(store.subset_chunks(data::Subset::kTest).size()));
    CHECK(cols == 3 + 8);  // track, true, pred + gru_hidden bottleneck

    // deterministic across export runs
    evaluation::export_bottlenecks(*loaded.fusion, store, loaded.xvec, loaded.middle,
                                   data::Subset::kTest, out.path() / "b2.csv");
    CHECK(io::read_file_bytes(csv_path) == io::read_file_bytes(out.path() / "b2.csv"));
  }
}
