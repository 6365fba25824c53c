// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Per-iteration training metrics, their CSV form, and the balance diagnosis.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace boxgan {

struct MetricsRow {
  long iter = 0;
  double real_score = 0;  // mean critic score on the real batch
  double fake_score = 0;
  double w_estimate = 0;  // real_score - fake_score
  double grad_penalty = 0;
  double gen_loss = 0;
  double pos_loss = 0;   // Step 2 only
  double gate_frac = 0;  // Step 2 only
};

inline constexpr const char* kMetricsHeader =
    "iter,real_score,fake_score,w_estimate,grad_penalty,gen_loss,pos_loss,gate_frac";

/// Append-only; iteration indices must strictly increase.
class MetricsLog {
 public:
  void append(const MetricsRow& row);
  const std::vector<MetricsRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

 private:
  std::vector<MetricsRow> rows_;
};

/// One CSV line, 6-decimal fixed point, no newline.
std::string format_metrics_row(const MetricsRow& row);
std::string to_csv(const MetricsLog& log);
void write_metrics(const std::filesystem::path& path, const MetricsLog& log);
/// Throws DataError on a wrong header, malformed rows or non-increasing iter.
MetricsLog parse_metrics(const std::string& text, const std::string& where = "metrics");
MetricsLog read_metrics(const std::filesystem::path& path);

/// Streams rows to a CSV file as they are produced.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Balance diagnosis

enum class Regime { critic_dominant, weak_critic, balanced };
std::string to_string(Regime r);

struct DiagnoseOptions {
  int window = 200;  // trailing rows examined
  /// critic_dominant: least-squares slope of (real - fake) per iteration above this.
  double gap_slope = 1e-3;
  /// critic_dominant also needs the generator loss slope to be >= -gen_tolerance.
  double gen_tolerance = 1e-4;
  /// weak_critic: mean |real|, mean |fake| and mean |real - fake| all within this band.
  double band = 0.05;
};

/// Throws PreconditionError when the window is shorter than 10 rows or
/// longer than the log.
Regime diagnose_balance(const MetricsLog& log, const DiagnoseOptions& options = {});

}  // namespace boxgan
