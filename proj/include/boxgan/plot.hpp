// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// SVG line chart of critic scores over training.

#pragma once

#include <filesystem>
#include <string>

#include "boxgan/metrics.hpp"

namespace boxgan {

/// One chart with real_score, fake_score and w_estimate against iter, axis
/// labels and a legend. Output depends only on the log's values. Throws
/// DataError when the log has no rows.
std::string plot_svg(const MetricsLog& log);

void write_plot(const std::filesystem::path& path, const MetricsLog& log);

}  // namespace boxgan
