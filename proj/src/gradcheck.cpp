// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace boxgan::ad {
namespace {

// Leaves require gradients so that functions which differentiate internally
// (gradient penalties) see the same graph as in the analytic pass.
double evaluate(const MultiScalarFn& fn, const std::vector<Tensor<double>>& point) {
  std::vector<Var<double>> args;
  args.reserve(point.size());
  for (const auto& t : point) args.emplace_back(t, true);
  return fn(args).item();
}

}  // namespace

GradCheckReport grad_check(const MultiScalarFn& fn, const std::vector<Tensor<double>>& point,
                           double tolerance, double step) {
  std::vector<Var<double>> args;
  for (const auto& t : point) args.emplace_back(t, true);
  const Var<double> out = fn(args);
  const auto analytic = grad(out, args);

  GradCheckReport report;
  std::vector<Tensor<double>> probe = point;
  const double center = out.item();
  for (std::size_t a = 0; a < point.size(); ++a) {
    for (Index i = 0; i < point[a].size(); ++i) {
      const double x0 = point[a][i];
      probe[a][i] = x0 + step;
      const double up = evaluate(fn, probe);
      probe[a][i] = x0 - step;
      const double down = evaluate(fn, probe);
      probe[a][i] = x0;

      GradCheckEntry e;
      e.argument = a;
      e.index = i;
      e.analytic = analytic[a].value()[i];
      e.numeric = (up - down) / (2.0 * step);
      const double forward = (up - center) / step;
      const double backward = (center - down) / step;
      const double slope_scale = std::max({1.0, std::abs(forward), std::abs(backward)});
      e.kink = std::abs(forward - backward) > 1e-3 * slope_scale;
      const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-3});
      e.rel_error = std::abs(e.analytic - e.numeric) / denom;
      if (e.kink) {
        ++report.kinks;
      } else {
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
        if (!(e.rel_error <= tolerance)) report.passed = false;
      }
      report.entries.push_back(e);
    }
  }
  return report;
}

GradCheckReport grad_check(const ScalarFn& fn, const Tensor<double>& point, double tolerance,
                           double step) {
  return grad_check([&fn](const std::vector<Var<double>>& args) { return fn(args[0]); },
                    std::vector<Tensor<double>>{point}, tolerance, step);
}

}  // namespace boxgan::ad
