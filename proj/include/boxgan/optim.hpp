// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "boxgan/autodiff.hpp"
#include "boxgan/errors.hpp"

namespace boxgan::ad {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  Tensor<T> first_moment;
  Tensor<T> second_moment;
  long step = 0;
};

/// One bias-corrected Adam update of `param` in place. Leaves everything
/// untouched and throws DivergenceError when the gradient is not finite.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, const AdamOptions& opt) {
  if (grad.shape() != param.shape()) {
    throw ShapeError("adam: gradient " + shape_string(grad.shape()) + " vs parameter " +
                     shape_string(param.shape()));
  }
  if (state.step == 0) {
    state.first_moment = Tensor<T>(param.shape());
    state.second_moment = Tensor<T>(param.shape());
  } else if (state.first_moment.shape() != param.shape() ||
             state.second_moment.shape() != param.shape()) {
    throw ShapeError("adam: optimizer state does not match parameter " + shape_string(param.shape()));
  }
  for (T g : grad.data()) {
    if (!std::isfinite(g)) throw DivergenceError("adam: non-finite gradient");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (Index i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    T& m = state.first_moment[i];
    T& v = state.second_moment[i];
    m = b1 * m + (T{1} - b1) * g;
    v = b2 * v + (T{1} - b2) * g * g;
    const double m_hat = static_cast<double>(m) / c1;
    const double v_hat = static_cast<double>(v) / c2;
    param[i] -= static_cast<T>(opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps));
  }
}

/// Adam over a fixed list of leaf parameters, reading their accumulated grads.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, AdamOptions options)
      : params_(std::move(params)), states_(params_.size()), options_(options) {}

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Parameters without an accumulated gradient are treated as having a zero one.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Var<T>& p = params_[i];
      const Tensor<T> g = p.has_grad() ? p.grad().value() : Tensor<T>(p.shape());
      adam_step(p.mutable_value(), g, states_[i], options_);
    }
  }

  const std::vector<AdamState<T>>& states() const { return states_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<AdamState<T>> states_;
  AdamOptions options_;
};

}  // namespace boxgan::ad
