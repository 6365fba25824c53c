// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "boxgan/cli.hpp"
#include "boxgan/gabx.hpp"
#include "boxgan/metrics.hpp"
#include "boxgan/scenes.hpp"

namespace boxgan::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kFixtures = BOXGAN_FIXTURE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) out.insert(fs::relative(e.path(), dir).string());
  return out;
}

// A 16x16 experiment small enough to train in well under a second.
const char* kTinyConfig = R"({
  "batch_size": 4, "n_critic": 2, "iterations": 6, "checkpoint_every": 3,
  "noise_decay_iters": 6, "detector_iterations": 8, "detector_batch_size": 8, "seed": 5,
  "generator": {"image_side": 16, "noise_channels": 2, "condition_channels": 2, "depth": 2, "base_width": 4},
  "critic": {"layers": 2, "base_width": 4},
  "detector": {"cells": 2, "layers": 3, "base_width": 4},
  "scenes": {"image_side": 16}
})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("boxgan_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.json") << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string p(const std::string& rel) const { return (root_ / rel).string(); }

  int run_quiet(std::vector<std::string> args) {
    ::testing::internal::CaptureStdout();
    ::testing::internal::CaptureStderr();
    const int code = run(args);
    stdout_ = ::testing::internal::GetCapturedStdout();
    stderr_ = ::testing::internal::GetCapturedStderr();
    return code;
  }

  int synth(int count = 24) {
    return run_quiet({"synth", "--config", p("tiny.json"), "--count", std::to_string(count), "--out", p("data")});
  }

  fs::path root_;
  std::string stdout_, stderr_;
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run_quiet({}), kUsage);
  EXPECT_EQ(run_quiet({"synth"}), kUsage);  // --out is required
  EXPECT_EQ(run_quiet({"synth", "--out", p("x"), "--frobnicate", "1"}), kUsage);
  EXPECT_EQ(run_quiet({"synth", "--out", p("x"), "--count", "many"}), kUsage);
  EXPECT_EQ(run_quiet({"synth", "--out", p("x"), "--count", "0"}), kUsage);
  EXPECT_EQ(run_quiet({"train1", "--out", p("x")}), kUsage);  // no --data
  EXPECT_EQ(run_quiet({"generate", "--out", p("x"), "--ckpt", p("c.gabx")}), kUsage);
  EXPECT_EQ(run_quiet({"synth", "--help"}), kOk);
  EXPECT_EQ(run_quiet({"--version"}), kOk);
  EXPECT_NE(stdout_.find(kVersion), std::string::npos);
}

TEST_F(Cli, ConfigAndDataErrors) {
  std::ofstream(root_ / "bad.json") << R"({"iteratons": 3})";
  EXPECT_EQ(run_quiet({"synth", "--config", p("bad.json"), "--out", p("x")}), kDataError);
  EXPECT_NE(stderr_.find("iteratons"), std::string::npos) << stderr_;
  EXPECT_EQ(run_quiet({"synth", "--config", p("absent.json"), "--out", p("x")}), kDataError);
  EXPECT_EQ(run_quiet({"train1", "--config", p("tiny.json"), "--data", p("nowhere"), "--out", p("x")}), kDataError);
  EXPECT_EQ(run_quiet({"diagnose", "--metrics", p("nowhere.csv"), "--out", p("x")}), kDataError);
  EXPECT_EQ(run_quiet({"diagnose", "--metrics", (kFixtures / "balanced.csv").string(), "--window", "5000",
                       "--out", p("x")}),
            kDataError);
}

TEST_F(Cli, SynthWritesTheScenesFormat) {
  ASSERT_EQ(synth(), kOk) << stderr_;
  const auto data = scenes::load_dataset(p("data"));
  ASSERT_EQ(data.size(), 24u);
  scenes::SceneConfig sc;
  sc.image_side = 16;
  const auto expected = scenes::generate_dataset(sc, 24, 5);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(data[i].labels, expected[i].labels);
  const auto m = read_json(root_ / "data" / "manifest.json");
  EXPECT_EQ(m["tool"], "boxgan");
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["config"]["scenes"]["image_side"], 16);
  EXPECT_EQ(m["args"]["count"], "24");
}

TEST_F(Cli, SeedFlagOverridesConfig) {
  ASSERT_EQ(run_quiet({"synth", "--config", p("tiny.json"), "--seed", "77", "--count", "3", "--out", p("s")}), kOk);
  EXPECT_EQ(read_json(root_ / "s" / "manifest.json")["seed"], 77);
  EXPECT_EQ(read_json(root_ / "s" / "manifest.json")["config"]["seed"], 77);
}

TEST_F(Cli, FullPipeline) {
  ASSERT_EQ(synth(), kOk) << stderr_;
  const auto cfg = p("tiny.json");

  ASSERT_EQ(run_quiet({"pretrain-det", "--config", cfg, "--data", p("data"), "--out", p("det")}), kOk) << stderr_;
  for (const char* f : {"detector.gabx", "detector_loss.csv", "report.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "det" / f)) << f;
  }

  ASSERT_EQ(run_quiet({"train1", "--config", cfg, "--data", p("data"), "--out", p("run1")}), kOk) << stderr_;
  for (const char* f : {"metrics.csv", "ckpt_000003.gabx", "ckpt_000006.gabx", "final.gabx", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "run1" / f)) << f;
  }
  EXPECT_EQ(read_metrics(root_ / "run1" / "metrics.csv").size(), 6u);

  ASSERT_EQ(run_quiet({"train2", "--config", cfg, "--data", p("data"), "--step1", p("run1/final.gabx"),
                       "--detector", p("det/detector.gabx"), "--out", p("run2")}),
            kOk)
      << stderr_;
  EXPECT_EQ(read_metrics(root_ / "run2" / "metrics.csv").size(), 6u);

  std::ofstream(root_ / "boxes.txt") << "0 0.125000 0.125000 0.500000 0.500000\n"
                                        "1 0.500000 0.500000 0.875000 0.937500\n"
                                        "2 0.000000 0.250000 0.375000 1.000000\n"
                                        "\n"
                                        "1 0.062500 0.562500 0.312500 0.812500\n"
                                        "0 0.333333 0.100000 0.666667 0.400000\n";
  ASSERT_EQ(run_quiet({"generate", "--config", cfg, "--ckpt", p("run2/final.gabx"), "--boxes", p("boxes.txt"),
                       "--count", "5", "--out", p("aug")}),
            kOk)
      << stderr_;
  const auto aug = scenes::load_dataset(p("aug"));
  ASSERT_EQ(aug.size(), 5u);
  EXPECT_EQ(scenes::format_label(aug[2].labels.at(0)), "2 0.000000 0.250000 0.375000 1.000000");
  EXPECT_EQ(scenes::format_label(aug[4].labels.at(0)), "0 0.333333 0.100000 0.666667 0.400000");
  EXPECT_EQ(run_quiet({"generate", "--ckpt", p("run2/final.gabx"), "--boxes", p("boxes.txt"), "--count", "4",
                       "--out", p("aug4")}),
            kUsage);

  ASSERT_EQ(run_quiet({"generate", "--config", cfg, "--ckpt", p("run2/final.gabx"), "--preset", "hard", "--count",
                       "7", "--out", p("hard")}),
            kOk)
      << stderr_;
  EXPECT_EQ(scenes::load_dataset(p("hard")).size(), 7u);

  ASSERT_EQ(run_quiet({"eval", "--config", cfg, "--ckpt", p("run2/final.gabx"), "--detector",
                       p("det/detector.gabx"), "--count", "12", "--out", p("eval")}),
            kOk)
      << stderr_;
  const auto report = read_json(root_ / "eval" / "report.json");
  EXPECT_EQ(report["count"], 12);
  EXPECT_GE(report["mean_iou"].get<double>(), 0.0);
  EXPECT_LE(report["mean_iou"].get<double>(), 1.0);
  EXPECT_TRUE(report.contains("untrained_mean_iou"));
  std::ifstream csv(root_ / "eval" / "conditioning.csv");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 13);

  ASSERT_EQ(run_quiet({"plot", "--metrics", p("run1/metrics.csv"), "--out", p("plot")}), kOk) << stderr_;
  EXPECT_EQ(slurp(root_ / "plot" / "scores.svg").find("<svg"), 0u);
}

TEST_F(Cli, ManifestReplayIsByteIdentical) {
  ASSERT_EQ(synth(), kOk);
  ASSERT_EQ(run_quiet({"train1", "--config", p("tiny.json"), "--data", p("data"), "--out", p("a")}), kOk);
  // The config file may change afterwards; the manifest carries its own snapshot.
  std::ofstream(root_ / "tiny.json", std::ios::trunc) << R"({"iterations": 1})";
  ASSERT_EQ(run_quiet({"--from-manifest", p("a/manifest.json"), "--out", p("b")}), kOk) << stderr_;
  EXPECT_EQ(slurp(root_ / "a" / "metrics.csv"), slurp(root_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(root_ / "a" / "final.gabx"), slurp(root_ / "b" / "final.gabx"));
  auto ma = read_json(root_ / "a" / "manifest.json"), mb = read_json(root_ / "b" / "manifest.json");
  EXPECT_EQ(ma["config"], mb["config"]);
  EXPECT_EQ(run_quiet({"synth", "--from-manifest", p("a/manifest.json"), "--out", p("c")}), kUsage);
  EXPECT_EQ(run_quiet({"--from-manifest", p("absent.json")}), kDataError);
}

TEST_F(Cli, WritesOnlyUnderOut) {
  ASSERT_EQ(synth(), kOk);
  const auto before = listing(root_);
  ASSERT_EQ(run_quiet({"train1", "--config", p("tiny.json"), "--data", p("data"), "--out", p("run/inner")}), kOk);
  for (const auto& entry : listing(root_)) {
    if (!before.count(entry)) {
      EXPECT_TRUE(entry == "run" || entry.rfind("run/inner", 0) == 0) << entry;
    }
  }
}

TEST_F(Cli, DivergenceExitsWithThree) {
  ASSERT_EQ(synth(), kOk);
  std::ofstream(root_ / "hot.json") << R"({
    "batch_size": 4, "n_critic": 2, "iterations": 50, "lr": 1e30, "checkpoint_every": 1,
    "generator": {"image_side": 16, "noise_channels": 2, "condition_channels": 2, "depth": 2, "base_width": 4},
    "critic": {"layers": 2, "base_width": 4},
    "detector": {"cells": 2, "layers": 3, "base_width": 4},
    "scenes": {"image_side": 16}})";
  EXPECT_EQ(run_quiet({"train1", "--config", p("hot.json"), "--data", p("data"), "--out", p("hot")}), kDiverged);
  EXPECT_NE(stderr_.find("diverged"), std::string::npos) << stderr_;
  EXPECT_FALSE(fs::exists(root_ / "hot" / "final.gabx"));
  EXPECT_TRUE(fs::exists(root_ / "hot" / "manifest.json"));
}

TEST_F(Cli, DiagnoseAndPlotFixtures) {
  for (const char* name : {"critic_dominant", "weak_critic", "balanced"}) {
    const auto csv = (kFixtures / (std::string(name) + ".csv")).string();
    ASSERT_EQ(run_quiet({"diagnose", "--metrics", csv, "--out", p(name)}), kOk) << stderr_;
    EXPECT_EQ(stdout_, std::string(name) + "\n");
    EXPECT_EQ(read_json(root_ / name / "diagnosis.json")["regime"], name);
  }
  const auto csv = (kFixtures / "balanced.csv").string();
  ASSERT_EQ(run_quiet({"plot", "--metrics", csv, "--out", p("p1")}), kOk);
  ASSERT_EQ(run_quiet({"plot", "--metrics", csv, "--out", p("p2")}), kOk);
  EXPECT_EQ(slurp(root_ / "p1" / "scores.svg"), slurp(root_ / "p2" / "scores.svg"));

  std::ofstream(root_ / "header.csv") << kMetricsHeader << "\n";
  EXPECT_EQ(run_quiet({"plot", "--metrics", p("header.csv"), "--out", p("p3")}), kDataError);
  EXPECT_NE(stderr_.find("no rows"), std::string::npos) << stderr_;
}

}  // namespace
}  // namespace boxgan::cli
