// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "boxgan/errors.hpp"

namespace boxgan {

void MetricsLog::append(const MetricsRow& row) {
  if (!rows_.empty() && row.iter <= rows_.back().iter) {
    throw PreconditionError("metrics: iteration " + std::to_string(row.iter) + " does not follow " +
                            std::to_string(rows_.back().iter));
  }
  rows_.push_back(row);
}

std::string format_metrics_row(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.iter, r.real_score, r.fake_score,
                r.w_estimate, r.grad_penalty, r.gen_loss, r.pos_loss, r.gate_frac);
  return buf;
}

std::string to_csv(const MetricsLog& log) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : log.rows()) out += format_metrics_row(r) + "\n";
  return out;
}

void write_metrics(const std::filesystem::path& path, const MetricsLog& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << to_csv(log);
  if (!out) throw DataError("cannot write metrics " + path.string());
}

MetricsLog parse_metrics(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw DataError(where + ": unexpected header '" + line + "'");
  MetricsLog log;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string at = where + ":" + std::to_string(lineno);
    std::vector<double> v;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) {
      char* end = nullptr;
      const double x = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(x)) {
        throw DataError(at + ": bad value '" + cell + "'");
      }
      v.push_back(x);
    }
    if (v.size() != 8) throw DataError(at + ": expected 8 columns, got " + std::to_string(v.size()));
    if (v[0] != std::floor(v[0])) throw DataError(at + ": iteration is not an integer");
    const MetricsRow row{static_cast<long>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    if (!log.empty() && row.iter <= log.rows().back().iter) throw DataError(at + ": iteration not increasing");
    log.append(row);
  }
  return log;
}

MetricsLog read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read metrics " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_metrics(text.str(), path.string());
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
  out_ << kMetricsHeader << "\n";
  if (!out_) throw DataError("cannot write metrics " + path.string());
}

void MetricsWriter::write(const MetricsRow& row) {
  out_ << format_metrics_row(row) << "\n";
  out_.flush();
}

// ---------------------------------------------------------------------------

std::string to_string(Regime r) {
  switch (r) {
    case Regime::critic_dominant:
      return "critic_dominant";
    case Regime::weak_critic:
      return "weak_critic";
    case Regime::balanced:
      return "balanced";
  }
  return "balanced";
}

namespace {

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace

Regime diagnose_balance(const MetricsLog& log, const DiagnoseOptions& o) {
  if (o.window < 10) throw PreconditionError("diagnose: window too short (need >= 10 rows)");
  if (static_cast<std::size_t>(o.window) > log.size()) {
    throw PreconditionError("diagnose: window of " + std::to_string(o.window) + " rows exceeds the log's " +
                            std::to_string(log.size()));
  }
  const auto first = log.rows().end() - o.window;
  std::vector<double> iter, gap, gen;
  double abs_real = 0, abs_fake = 0, abs_gap = 0, mean_gap = 0;
  for (auto it = first; it != log.rows().end(); ++it) {
    iter.push_back(static_cast<double>(it->iter));
    gap.push_back(it->real_score - it->fake_score);
    gen.push_back(it->gen_loss);
    abs_real += std::abs(it->real_score);
    abs_fake += std::abs(it->fake_score);
    abs_gap += std::abs(gap.back());
    mean_gap += gap.back();
  }
  const double n = o.window;
  if (abs_real / n <= o.band && abs_fake / n <= o.band && abs_gap / n <= o.band) return Regime::weak_critic;
  if (mean_gap > 0 && slope(iter, gap) > o.gap_slope && slope(iter, gen) >= -o.gen_tolerance) {
    return Regime::critic_dominant;
  }
  return Regime::balanced;
}

}  // namespace boxgan
