// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/plot.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

#include "boxgan/errors.hpp"

namespace boxgan {
namespace {

constexpr double kWidth = 800, kHeight = 480;
constexpr double kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
constexpr int kTicks = 5;

struct Series {
  const char* name;
  const char* color;
  double MetricsRow::*field;
};

constexpr std::array<Series, 3> kSeries{{
    {"real_score", "#1f77b4", &MetricsRow::real_score},
    {"fake_score", "#d62728", &MetricsRow::fake_score},
    {"w_estimate", "#2ca02c", &MetricsRow::w_estimate},
}};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string plot_svg(const MetricsLog& log) {
  if (log.empty()) throw DataError("plot: metrics log has no rows");
  const auto& rows = log.rows();
  double x0 = static_cast<double>(rows.front().iter), x1 = static_cast<double>(rows.back().iter);
  double y0 = rows.front().real_score, y1 = y0;
  for (const auto& r : rows) {
    for (const auto& s : kSeries) {
      y0 = std::min(y0, r.*s.field);
      y1 = std::max(y1, r.*s.field);
    }
  }
  if (x1 == x0) x0 -= 1, x1 += 1;
  if (y1 == y0) y0 -= 1, y1 += 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"480\" viewBox=\"0 0 800 480\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"480\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.2f", kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
         "Critic scores during training</text>\n";

  // Axes, ticks and grid.
  const std::string axis_y = fmt("%.2f", kTop + ph), axis_x = fmt("%.2f", kLeft);
  svg += "<line x1=\"" + axis_x + "\" y1=\"" + axis_y + "\" x2=\"" + fmt("%.2f", kLeft + pw) + "\" y2=\"" + axis_y +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + axis_x + "\" y1=\"" + fmt("%.2f", kTop) + "\" x2=\"" + axis_x + "\" y2=\"" + axis_y +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= kTicks; ++i) {
    const double xv = x0 + (x1 - x0) * i / kTicks, yv = y0 + (y1 - y0) * i / kTicks;
    const std::string tx = fmt("%.2f", px(xv)), ty = fmt("%.2f", py(yv));
    svg += "<line x1=\"" + tx + "\" y1=\"" + axis_y + "\" x2=\"" + tx + "\" y2=\"" + fmt("%.2f", kTop + ph + 5) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + tx + "\" y=\"" + fmt("%.2f", kTop + ph + 20) + "\" text-anchor=\"middle\">" +
           fmt("%.0f", xv) + "</text>\n";
    svg += "<line x1=\"" + fmt("%.2f", kLeft - 5) + "\" y1=\"" + ty + "\" x2=\"" + fmt("%.2f", kLeft + pw) +
           "\" y2=\"" + ty + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", kLeft - 8) + "\" y=\"" + fmt("%.2f", py(yv) + 4) +
           "\" text-anchor=\"end\">" + fmt("%.3g", yv) + "</text>\n";
  }
  svg += "<text x=\"" + fmt("%.2f", kLeft + pw / 2) + "\" y=\"" + fmt("%.2f", kHeight - 15) +
         "\" text-anchor=\"middle\">iteration</text>\n";
  svg += "<text x=\"20\" y=\"" + fmt("%.2f", kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
         fmt("%.2f", kTop + ph / 2) + ")\">critic score</text>\n";

  // Series.
  for (const auto& s : kSeries) {
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(s.color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i) svg += ' ';
      svg += fmt("%.2f", px(static_cast<double>(rows[i].iter))) + "," + fmt("%.2f", py(rows[i].*s.field));
    }
    svg += "\"/>\n";
  }

  // Legend.
  const double lx = kLeft + pw + 15;
  for (std::size_t i = 0; i < kSeries.size(); ++i) {
    const std::string ly = fmt("%.2f", kTop + 10 + 22.0 * static_cast<double>(i));
    svg += "<line x1=\"" + fmt("%.2f", lx) + "\" y1=\"" + ly + "\" x2=\"" + fmt("%.2f", lx + 25) + "\" y2=\"" + ly +
           "\" stroke=\"" + kSeries[i].color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", lx + 32) + "\" y=\"" + fmt("%.2f", kTop + 14 + 22.0 * static_cast<double>(i)) +
           "\">" + kSeries[i].name + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_plot(const std::filesystem::path& path, const MetricsLog& log) {
  const std::string svg = plot_svg(log);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << svg;
  if (!out) throw DataError("cannot write plot " + path.string());
}

}  // namespace boxgan
