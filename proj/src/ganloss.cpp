// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/ganloss.hpp"

#include <algorithm>

#include "boxgan/errors.hpp"

namespace boxgan::gan {
namespace {

template <typename T>
void require_scores(const Var<T>& s, const char* which) {
  if (!s.defined() || s.shape().size() != 1 || s.size() == 0) {
    throw PreconditionError(std::string(which) + " scores must be a nonempty [N] batch");
  }
}

}  // namespace

template <typename T>
Var<T> critic_loss(const GanBatchScores<T>& scores) {
  require_scores(scores.real, "real");
  require_scores(scores.fake, "fake");
  return ad::sub(ad::mean(scores.fake), ad::mean(scores.real));
}

template <typename T>
Var<T> generator_loss(const Var<T>& fake_scores) {
  require_scores(fake_scores, "fake");
  return ad::neg(ad::mean(fake_scores));
}

template <typename T>
double wasserstein_estimate(const GanBatchScores<T>& scores) {
  return -static_cast<double>(critic_loss(scores).item());
}

template <typename T>
Tensor<T> interpolate(const Tensor<T>& real, const Tensor<T>& fake, const std::vector<double>& eps) {
  if (real.shape() != fake.shape() || real.rank() < 1) {
    throw ShapeError("interpolate: real " + ad::shape_string(real.shape()) + " vs fake " +
                     ad::shape_string(fake.shape()));
  }
  const ad::Index n = real.dim(0);
  if (n == 0) throw PreconditionError("interpolate: empty batch");
  if (static_cast<ad::Index>(eps.size()) != n) throw ShapeError("interpolate: one eps per sample required");
  const ad::Index per = real.size() / n;
  Tensor<T> out(real.shape());
  for (ad::Index i = 0; i < n; ++i) {
    const T e = static_cast<T>(eps[static_cast<std::size_t>(i)]);
    for (ad::Index j = i * per; j < (i + 1) * per; ++j) out[j] = e * real[j] + (T(1) - e) * fake[j];
  }
  return out;
}

template <typename T>
Var<T> gradient_penalty_at(const ScoreFn<T>& critic, const Tensor<T>& points, double lambda) {
  if (lambda < 0) throw PreconditionError("gradient penalty weight must be >= 0");
  ad::GradModeGuard recording(true);
  const Var<T> x(points, true);
  const Var<T> scores = critic(x);
  const Var<T> gx = ad::grad(ad::sum(scores), {x}, true)[0];
  // The tiny offset keeps sqrt differentiable if a gradient vanishes exactly.
  const Var<T> norms = ad::sqrt(ad::add_scalar(ad::sum_rows(ad::square(gx)), T(1e-12)));
  return ad::scale(ad::mean(ad::square(ad::add_scalar(norms, T(-1)))), static_cast<T>(lambda));
}

template <typename T>
Var<T> gradient_penalty(const ScoreFn<T>& critic, const Tensor<T>& real, const Tensor<T>& fake, double lambda,
                        std::mt19937_64& rng) {
  if (real.rank() < 1 || real.dim(0) == 0) throw PreconditionError("gradient penalty: empty batch");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> eps(static_cast<std::size_t>(real.dim(0)));
  for (auto& e : eps) e = u(rng);
  return gradient_penalty_at(critic, interpolate(real, fake, eps), lambda);
}

template <typename T>
void clip_weights(nets::Network<T>& net, double c) {
  if (!(c > 0)) throw PreconditionError("clip bound must be > 0");
  for (const auto& p : net.parameters()) {
    Var<T> v = p.var;
    for (auto& x : v.mutable_value().data()) x = std::clamp(x, static_cast<T>(-c), static_cast<T>(c));
  }
}

#define BOXGAN_INSTANTIATE(T)                                                                        \
  template Var<T> critic_loss(const GanBatchScores<T>&);                                             \
  template Var<T> generator_loss(const Var<T>&);                                                     \
  template double wasserstein_estimate(const GanBatchScores<T>&);                                    \
  template Tensor<T> interpolate(const Tensor<T>&, const Tensor<T>&, const std::vector<double>&);    \
  template Var<T> gradient_penalty_at(const ScoreFn<T>&, const Tensor<T>&, double);                  \
  template Var<T> gradient_penalty(const ScoreFn<T>&, const Tensor<T>&, const Tensor<T>&, double,    \
                                   std::mt19937_64&);                                                \
  template void clip_weights(nets::Network<T>&, double);

BOXGAN_INSTANTIATE(float)
BOXGAN_INSTANTIATE(double)

}  // namespace boxgan::gan
