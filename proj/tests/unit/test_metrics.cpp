// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "boxgan/errors.hpp"
#include "boxgan/metrics.hpp"

namespace boxgan {
namespace {

const std::filesystem::path kFixtures = BOXGAN_FIXTURE_DIR;

MetricsLog ramp(int rows, double gap_per_iter) {
  MetricsLog log;
  for (int i = 1; i <= rows; ++i) {
    const double gap = 1.0 + gap_per_iter * i;
    log.append({i, gap / 2, -gap / 2, gap, 0.1, gap / 2, 0, 0});
  }
  return log;
}

TEST(MetricsCsv, FormatsSixDecimals) {
  EXPECT_EQ(format_metrics_row({12, 1.0, -0.5, 1.5, 0.25, 0.5, 0.0, 1.0 / 3}),
            "12,1.000000,-0.500000,1.500000,0.250000,0.500000,0.000000,0.333333");
  MetricsLog log;
  log.append({1, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_EQ(to_csv(log), std::string(kMetricsHeader) + "\n1,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000\n");
}

TEST(MetricsCsv, RoundTripsAtPrintedPrecision) {
  const auto log = ramp(30, 0.01);
  const auto back = parse_metrics(to_csv(log));
  ASSERT_EQ(back.size(), log.size());
  EXPECT_EQ(to_csv(back), to_csv(log));
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(back.rows()[i].iter, log.rows()[i].iter);
    EXPECT_NEAR(back.rows()[i].w_estimate, log.rows()[i].w_estimate, 5e-7);
  }
}

TEST(MetricsCsv, RejectsMalformedInput) {
  const std::string h = std::string(kMetricsHeader) + "\n";
  EXPECT_THROW(parse_metrics(""), DataError);
  EXPECT_THROW(parse_metrics("iter,score\n1,2\n"), DataError);
  EXPECT_THROW(parse_metrics(h + "1,0,0,0,0,0,0\n"), DataError);
  EXPECT_THROW(parse_metrics(h + "1,0,0,0,0,0,0,x\n"), DataError);
  EXPECT_THROW(parse_metrics(h + "1,0,0,0,0,0,0,nan\n"), DataError);
  EXPECT_THROW(parse_metrics(h + "1.5,0,0,0,0,0,0,0\n"), DataError);
  EXPECT_THROW(parse_metrics(h + "2,0,0,0,0,0,0,0\n2,0,0,0,0,0,0,0\n"), DataError);
  try {
    parse_metrics(h + "1,0,0,0,0,0,0,0\n2,0,0\n", "run.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("run.csv:3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(parse_metrics(h).size(), 0u);
}

TEST(MetricsLog, IterationsMustIncrease) {
  MetricsLog log;
  log.append({5, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_THROW(log.append({5, 0, 0, 0, 0, 0, 0, 0}), PreconditionError);
  EXPECT_THROW(log.append({4, 0, 0, 0, 0, 0, 0, 0}), PreconditionError);
}

TEST(MetricsWriter, StreamsTheSameBytesAsToCsv) {
  const auto path = std::filesystem::temp_directory_path() / "boxgan_test_metrics.csv";
  const auto log = ramp(12, 0.5);
  {
    MetricsWriter w(path);
    for (const auto& r : log.rows()) w.write(r);
  }
  std::ifstream in(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text, to_csv(log));
  EXPECT_EQ(to_csv(read_metrics(path)), text);
  std::filesystem::remove(path);
  EXPECT_THROW(read_metrics(path), DataError);
}

TEST(Diagnose, GoldenFixtures) {
  EXPECT_EQ(diagnose_balance(read_metrics(kFixtures / "critic_dominant.csv")), Regime::critic_dominant);
  EXPECT_EQ(diagnose_balance(read_metrics(kFixtures / "weak_critic.csv")), Regime::weak_critic);
  EXPECT_EQ(diagnose_balance(read_metrics(kFixtures / "balanced.csv")), Regime::balanced);
}

TEST(Diagnose, SyntheticRamps) {
  // A gap growing by 0.01 per iteration with a rising generator loss.
  EXPECT_EQ(diagnose_balance(ramp(300, 0.01)), Regime::critic_dominant);
  // Flat gap: balanced.
  EXPECT_EQ(diagnose_balance(ramp(300, 0.0)), Regime::balanced);
  // Shrinking gap: balanced.
  EXPECT_EQ(diagnose_balance(ramp(300, -0.002)), Regime::balanced);
  MetricsLog tiny;
  for (int i = 1; i <= 50; ++i) tiny.append({i, 0.01, -0.01, 0.02, 0, 0.01, 0, 0});
  EXPECT_EQ(diagnose_balance(tiny, {.window = 50}), Regime::weak_critic);
}

TEST(Diagnose, WindowBounds) {
  const auto log = ramp(100, 0.01);
  EXPECT_THROW(diagnose_balance(log, {.window = 9}), PreconditionError);
  EXPECT_THROW(diagnose_balance(log, {.window = 101}), PreconditionError);
  EXPECT_NO_THROW(diagnose_balance(log, {.window = 10}));
  EXPECT_THROW(diagnose_balance(MetricsLog{}), PreconditionError);
}

TEST(Regime, Names) {
  EXPECT_EQ(to_string(Regime::critic_dominant), "critic_dominant");
  EXPECT_EQ(to_string(Regime::weak_critic), "weak_critic");
  EXPECT_EQ(to_string(Regime::balanced), "balanced");
}

}  // namespace
}  // namespace boxgan
