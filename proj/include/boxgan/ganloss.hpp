// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Wasserstein critic/generator losses and the gradient penalty.
//
// Sign convention: the critic minimizes mean(fake) - mean(real); the logged
// Wasserstein estimate is its negation, mean(real) - mean(fake).

#pragma once

#include <functional>
#include <random>
#include <vector>

#include "boxgan/autodiff.hpp"
#include "boxgan/netzoo.hpp"

namespace boxgan::gan {

using ad::Tensor;
using ad::Var;

/// Per-sample critic scores, each of shape [N] with N >= 1.
template <typename T>
struct GanBatchScores {
  Var<T> real;
  Var<T> fake;
};

template <typename T>
Var<T> critic_loss(const GanBatchScores<T>& scores);
template <typename T>
Var<T> generator_loss(const Var<T>& fake_scores);
template <typename T>
double wasserstein_estimate(const GanBatchScores<T>& scores);

/// Maps a batch [N,...] to per-sample scores [N].
template <typename T>
using ScoreFn = std::function<Var<T>(const Var<T>&)>;

/// eps_i * real_i + (1 - eps_i) * fake_i for each sample i.
template <typename T>
Tensor<T> interpolate(const Tensor<T>& real, const Tensor<T>& fake, const std::vector<double>& eps);

/// lambda * mean_i (||grad_x f(x_i)||_2 - 1)^2 at the given points. The result
/// carries a second-order graph into the critic's parameters.
template <typename T>
Var<T> gradient_penalty_at(const ScoreFn<T>& critic, const Tensor<T>& points, double lambda);

/// Draws one eps ~ U(0,1) per sample, interpolates, and applies the penalty.
template <typename T>
Var<T> gradient_penalty(const ScoreFn<T>& critic, const Tensor<T>& real, const Tensor<T>& fake,
                        double lambda, std::mt19937_64& rng);

template <typename T>
ScoreFn<T> score_fn(const nets::Critic<T>& critic) {
  return [&critic](const Var<T>& x) { return critic.forward(x).scores; };
}

/// Weight clipping to [-c, c]: the fallback Lipschitz constraint.
template <typename T>
void clip_weights(nets::Network<T>& net, double c);

}  // namespace boxgan::gan
