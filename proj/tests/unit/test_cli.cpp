/*
 * Copyright 2026 The hafr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "hafr/io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

// Runs the CLI with stdout and stderr merged.
Result run(const std::string& args) {
  const std::string cmd = std::string(HAFR_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// One small synthetic corpus and prepared dataset shared by every test.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "hafr_test_cli";
    fs::remove_all(root_);
    fs::create_directories(root_);
    hafr::io::write_file(root_ / "config.json", R"({
  "seed": 11,
  "synth": {"num_users": 60, "num_recipes": 50, "num_ingredients": 12,
            "ingredients_per_recipe": 4, "interactions_per_user": 8,
            "feature_dim": 6},
  "model": {"embedding_dim": 6, "attention_dim": 4},
  "train": {"max_epochs": 3, "batch_size": 64, "lambda_mlp": 0.01},
  "eval": {"num_negatives": 20, "repeats": 2}
}
)");
    const auto r = run(flags() + " synth --out " + (root_ / "synth").string() +
                       " --run-dir " + (root_ / "run_synth").string());
    ASSERT_EQ(r.code, 0) << r.output;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string flags() {
    return "--config " + (root_ / "config.json").string();
  }
  static std::string data() { return (root_ / "synth" / "data").string(); }
  static fs::path raw() { return root_ / "synth" / "raw"; }
  static fs::path path(const std::string& name) { return root_ / name; }

  static std::string train(const std::string& out, const std::string& extra = "") {
    return flags() + " train --data " + data() + " --out " + path(out).string() +
           " --run-dir " + path("run_" + out).string() + " " + extra;
  }

  static inline fs::path root_;
};

}  // namespace

TEST_F(Cli, PrepareManifestDeterministic) {
  const auto args = [&](const std::string& out) {
    return flags() + " prepare --interactions " + (raw() / "interactions.tsv").string() +
           " --ingredients " + (raw() / "ingredients.tsv").string() +
           " --features " + (raw() / "features.bin").string() +
           " --feature-dim 6 --out " + path(out).string() + " --run-dir " +
           path("run_" + out).string();
  };
  ASSERT_EQ(run(args("p1")).code, 0);
  ASSERT_EQ(run(args("p2")).code, 0);
  const auto m1 = nlohmann::json::parse(hafr::io::read_file(path("p1") / "manifest.json"));
  const auto m2 = nlohmann::json::parse(hafr::io::read_file(path("p2") / "manifest.json"));
  EXPECT_EQ(m1["checksum"], m2["checksum"]);
  // Users whose every interaction falls in the test span are dropped.
  EXPECT_GT(m1["num_users"].get<int>(), 0);
  EXPECT_LE(m1["num_users"].get<int>(), 60);
  EXPECT_EQ(m1["num_recipes"].get<int>() > 0, true);
  EXPECT_TRUE(fs::exists(path("run_p1") / "run.log"));
  EXPECT_TRUE(fs::exists(path("run_p1") / "config.json"));
}

TEST_F(Cli, PrepareMissingFileNamesPath) {
  const auto missing = path("nope.bin").string();
  const auto r = run(flags() + " prepare --interactions " +
                     (raw() / "interactions.tsv").string() + " --ingredients " +
                     (raw() / "ingredients.tsv").string() + " --features " +
                     missing + " --out " + path("p3").string() +
                     " --run-dir " + path("run_p3").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find(missing), std::string::npos) << r.output;
}

TEST_F(Cli, TrainLogsOneLinePerEpoch) {
  const auto r = run(train("m3.ckpt"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto log = hafr::io::read_file(path("run_m3.ckpt") / "train_log.jsonl");
  EXPECT_EQ(count_lines(log), 3u);
  const auto first = nlohmann::json::parse(log.substr(0, log.find('\n')));
  EXPECT_EQ(first["epoch"], 1);
  EXPECT_TRUE(first["valid_auc"].is_number());
}

TEST_F(Cli, TrainVariantTagsCheckpoint) {
  ASSERT_EQ(run(train("mf.ckpt", "--variant mf-bpr --epochs 1")).code, 0);
  const auto m = nlohmann::json::parse(hafr::io::read_file(path("mf.ckpt")));
  EXPECT_EQ(m["kind"], "mf-bpr");
}

TEST_F(Cli, SameSeedSameBlob) {
  ASSERT_EQ(run(train("a.ckpt", "--epochs 2")).code, 0);
  ASSERT_EQ(run(train("b.ckpt", "--epochs 2")).code, 0);
  const auto a = nlohmann::json::parse(hafr::io::read_file(path("a.ckpt")));
  const auto b = nlohmann::json::parse(hafr::io::read_file(path("b.ckpt")));
  EXPECT_EQ(a["blob_sha256"], b["blob_sha256"]);
  EXPECT_EQ(hafr::io::read_file(path("a.ckpt.bin")),
            hafr::io::read_file(path("b.ckpt.bin")));
  ASSERT_EQ(run("--seed 12 " + train("c.ckpt", "--epochs 2")).code, 0);
  const auto c = nlohmann::json::parse(hafr::io::read_file(path("c.ckpt")));
  EXPECT_NE(a["blob_sha256"], c["blob_sha256"]);
}

TEST_F(Cli, EvalRepeatsGroupsAndCompare) {
  ASSERT_EQ(run(train("e1.ckpt", "--epochs 1")).code, 0);
  ASSERT_EQ(run(train("e2.ckpt", "--epochs 1 --variant fm")).code, 0);
  const auto r = run(flags() + " eval --model " + path("e1.ckpt").string() +
                     " --data " + data() + " --groups 4 --compare " +
                     path("e2.ckpt").string() + " --run-dir " +
                     path("run_eval").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto tsv = hafr::io::read_file(path("run_eval") / "report.tsv");
  std::size_t auc_rows = 0, group4 = 0, fm_rows = 0;
  for (const auto line : hafr::io::lines(tsv)) {
    const auto cols = hafr::io::split(line, '\t');
    if (cols.size() < 6) continue;
    if (cols[0] == "hafr" && cols[2] == "auc") ++auc_rows;
    if (cols[2] == "auc/g4") ++group4;
    if (cols[0] == "fm" && cols[2] == "ndcg" && cols[3] == "10") ++fm_rows;
  }
  EXPECT_EQ(auc_rows, 2u);
  EXPECT_EQ(group4, 2u);
  EXPECT_EQ(fm_rows, 2u);
  const auto cmp = hafr::io::read_file(path("run_eval") / "comparison.tsv");
  EXPECT_EQ(count_lines(cmp), 4u);  // header + AUC, NDCG@10, Recall@10
  EXPECT_NE(cmp.find("AUC"), std::string::npos);
  const auto report = nlohmann::json::parse(hafr::io::read_file(path("run_eval") / "report.json"));
  EXPECT_EQ(report["popularity_groups"].size(), 4u);
}

TEST_F(Cli, InvalidSweepAxis) {
  const auto r = run(flags() + " sweep --data " + data() +
                     " --axis gamma --values 1,2 --run-dir " +
                     path("run_sweep").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("delta, lambda_mlp"), std::string::npos) << r.output;
}

TEST_F(Cli, SweepDelta) {
  hafr::io::write_file(path("sweep.json"), R"({
  "seed": 11,
  "model": {"embedding_dim": 4},
  "train": {"max_epochs": 1, "lambda_mlp": 0.01},
  "eval": {"num_negatives": 10, "repeats": 1}
})");
  const auto r = run("--config " + path("sweep.json").string() + " sweep --data " +
                     data() + " --axis delta --values 2,4 --run-dir " +
                     path("run_sweep2").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(count_lines(hafr::io::read_file(path("run_sweep2") / "sweep.tsv")), 3u);
}

TEST_F(Cli, GradcheckPassAndCorrupt) {
  auto r = run("gradcheck --variant hafr");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("PASS"), std::string::npos);
  r = run("gradcheck --variant hafr --corrupt-gradient");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("FAIL"), std::string::npos);
}

TEST_F(Cli, AblateFiveRows) {
  hafr::io::write_file(path("ablate.json"), R"({
  "seed": 11,
  "model": {"embedding_dim": 4, "attention_dim": 3},
  "train": {"max_epochs": 1, "lambda_mlp": 0.01},
  "eval": {"num_negatives": 10, "repeats": 1}
})");
  const auto args = "--config " + path("ablate.json").string() +
                    " ablate --data " + data() + " --run-dir ";
  const auto r = run(args + path("run_ablate").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto table = hafr::io::read_file(path("run_ablate") / "ablation.tsv");
  EXPECT_EQ(count_lines(table), 6u);
  for (const auto* v : {"avg-avg", "avg-att", "hafr", "hafr-non-v", "hafr-non-i"}) {
    EXPECT_NE(table.find(std::string("\n") + v + "\t"), std::string::npos) << v;
  }
  ASSERT_EQ(run(args + path("run_ablate2").string()).code, 0);
  EXPECT_EQ(table, hafr::io::read_file(path("run_ablate2") / "ablation.tsv"));
}

TEST_F(Cli, UnknownConfigKeyFails) {
  hafr::io::write_file(path("bad.json"), R"({"train": {"epochs": 3}})");
  const auto r = run("--config " + path("bad.json").string() + " train --data " +
                     data() + " --out " + path("x.ckpt").string() +
                     " --run-dir " + path("run_bad").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("train.epochs"), std::string::npos) << r.output;
}
