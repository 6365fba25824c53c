// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "boxgan/autodiff.hpp"

namespace boxgan::ad {

struct GradCheckEntry {
  std::size_t argument = 0;
  Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  /// One-sided slopes disagree: the point sits on a kink and is not compared.
  bool kink = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  Index kinks = 0;
  bool passed = true;
};

using MultiScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;
using ScalarFn = std::function<Var<double>(const Var<double>&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `step`. The relative error of an entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
GradCheckReport grad_check(const MultiScalarFn& fn, const std::vector<Tensor<double>>& point,
                           double tolerance, double step = 1e-5);
GradCheckReport grad_check(const ScalarFn& fn, const Tensor<double>& point, double tolerance,
                           double step = 1e-5);

}  // namespace boxgan::ad
