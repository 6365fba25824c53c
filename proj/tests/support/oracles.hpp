// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations shared by the unit tests and the
// acceptance suite: a raster IoU, a nested-loop convolution, the primitive
// table for gradient checks, a linear critic with a closed-form penalty, and
// hand-built detection-loss cases.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "boxgan/autodiff.hpp"
#include "boxgan/boxgeom.hpp"
#include "boxgan/detloss.hpp"
#include "boxgan/ganloss.hpp"

namespace boxgan::oracle {

using ad::Conv2dParams;
using ad::Index;
using ad::Shape;
using ad::Tensor;
using ad::Var;
using geom::BBox;

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// ---------------------------------------------------------------------------
// Boxes

// Independent IoU: count pixel centers of a fine grid that fall in each box.
inline double raster_iou(const BBox& a, const BBox& b, int res) {
  long inter = 0, uni = 0;
  for (int r = 0; r < res; ++r) {
    const double y = (r + 0.5) / res;
    for (int c = 0; c < res; ++c) {
      const double x = (c + 0.5) / res;
      const bool in_a = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
      const bool in_b = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline BBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    BBox b{x1, y1, x2, y2};
    if (x2 - x1 > 1e-3 && y2 - y1 > 1e-3) return b;
  }
}

// Box with every edge on the 1/res lattice, so the raster oracle is exact.
inline BBox random_lattice_box(std::mt19937_64& rng, int res) {
  std::uniform_int_distribution<int> u(0, res);
  for (;;) {
    int x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    if (x1 == x2 || y1 == y2) continue;
    return {double(x1) / res, double(y1) / res, double(x2) / res, double(y2) / res};
  }
}

// ---------------------------------------------------------------------------
// Convolution by direct loops

inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, Index stride, Index pad) {
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index cout = w.dim(0), k = w.dim(2);
  const Index oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> y(Shape{n, cout, oh, ow});
  for (Index b = 0; b < n; ++b)
    for (Index co = 0; co < cout; ++co)
      for (Index r = 0; r < oh; ++r)
        for (Index c = 0; c < ow; ++c) {
          double acc = 0;
          for (Index ci = 0; ci < cin; ++ci)
            for (Index kr = 0; kr < k; ++kr)
              for (Index kc = 0; kc < k; ++kc) {
                const Index ir = r * stride - pad + kr, ic = c * stride - pad + kc;
                if (ir < 0 || ir >= h || ic < 0 || ic >= wd) continue;
                acc += x[((b * cin + ci) * h + ir) * wd + ic] * w[((co * cin + ci) * k + kr) * k + kc];
              }
          y[((b * cout + co) * oh + r) * ow + c] = acc;
        }
  return y;
}

// ---------------------------------------------------------------------------
// Autodiff primitives

// Fixed pseudo-random weights that reduce any output to a scalar, so every
// output element contributes a distinct coefficient.
inline Var<double> weighted_sum(const Var<double>& y) {
  std::mt19937_64 rng(1234);
  return ad::sum(ad::mul(y, ad::constant(random_tensor(y.shape(), rng, -1.0, 1.0))));
}

struct Primitive {
  std::string name;
  std::vector<Shape> shapes;
  double lo = -2.0;
  double hi = 2.0;
  std::function<Var<double>(const std::vector<Var<double>>&)> fn;
};

inline std::vector<Primitive> primitives() {
  using namespace boxgan::ad;
  const Shape m{2, 3};
  const Conv2dParams s2p1{2, 1};
  return {
      {"add", {m, m}, -2, 2, [](const std::vector<Var<double>>& a) { return add(a[0], a[1]); }},
      {"add_scalar_broadcast", {m, {1}}, -2, 2, [](const std::vector<Var<double>>& a) { return add(a[0], a[1]); }},
      {"sub", {m, m}, -2, 2, [](const std::vector<Var<double>>& a) { return sub(a[0], a[1]); }},
      {"mul", {m, m}, -2, 2, [](const std::vector<Var<double>>& a) { return mul(a[0], a[1]); }},
      {"mul_scalar_broadcast", {{1}, m}, -2, 2, [](const std::vector<Var<double>>& a) { return mul(a[0], a[1]); }},
      {"div", {m, m}, 0.5, 2, [](const std::vector<Var<double>>& a) { return div(a[0], a[1]); }},
      {"neg", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return neg(a[0]); }},
      {"scale", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return scale(a[0], 1.7); }},
      {"square", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return square(a[0]); }},
      {"sqrt", {m}, 0.3, 3, [](const std::vector<Var<double>>& a) { return sqrt(a[0]); }},
      {"exp", {m}, -2, 1, [](const std::vector<Var<double>>& a) { return exp(a[0]); }},
      {"log", {m}, 0.3, 3, [](const std::vector<Var<double>>& a) { return log(a[0]); }},
      {"atan", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return atan(a[0]); }},
      {"sigmoid", {m}, -3, 3, [](const std::vector<Var<double>>& a) { return sigmoid(a[0]); }},
      {"tanh", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return tanh(a[0]); }},
      {"softmax", {{2, 4}}, -2, 2, [](const std::vector<Var<double>>& a) { return softmax(a[0]); }},
      {"relu", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return relu(a[0]); }},
      {"leaky_relu", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return leaky_relu(a[0], 0.2); }},
      {"minimum", {m, m}, -2, 2, [](const std::vector<Var<double>>& a) { return minimum(a[0], a[1]); }},
      {"maximum", {m, m}, -2, 2, [](const std::vector<Var<double>>& a) { return maximum(a[0], a[1]); }},
      {"sum", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return mul(sum(a[0]), sum(a[0])); }},
      {"mean", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return mul(mean(a[0]), sum(a[0])); }},
      {"expand", {{1}}, -2, 2, [](const std::vector<Var<double>>& a) { return expand(a[0], Shape{2, 2}); }},
      {"sum_rows", {{2, 3, 2}}, -2, 2, [](const std::vector<Var<double>>& a) { return sum_rows(a[0]); }},
      {"expand_rows", {{2}}, -2, 2, [](const std::vector<Var<double>>& a) { return expand_rows(a[0], Shape{2, 3}); }},
      {"channel_sum", {{2, 3, 2, 2}}, -2, 2, [](const std::vector<Var<double>>& a) { return channel_sum(a[0]); }},
      {"channel_expand", {{3}}, -2, 2,
       [](const std::vector<Var<double>>& a) { return channel_expand(a[0], Shape{2, 3, 2, 2}); }},
      {"add_channel_bias", {{2, 3, 2, 2}, {3}}, -2, 2,
       [](const std::vector<Var<double>>& a) { return add_channel_bias(a[0], a[1]); }},
      {"reshape", {m}, -2, 2, [](const std::vector<Var<double>>& a) { return reshape(a[0], Shape{3, 2}); }},
      {"slice", {{2, 5, 3}}, -2, 2, [](const std::vector<Var<double>>& a) { return slice(a[0], 1, 1, 4); }},
      {"embed", {{2, 2, 3}}, -2, 2, [](const std::vector<Var<double>>& a) { return embed(a[0], 1, 1, 4); }},
      {"concat", {{2, 1, 3}, {2, 3, 3}}, -2, 2, [](const std::vector<Var<double>>& a) { return concat(a, 1); }},
      {"matmul", {{2, 3}, {3, 4}}, -2, 2, [](const std::vector<Var<double>>& a) { return matmul(a[0], a[1]); }},
      {"matmul_transposed", {{3, 2}, {4, 3}}, -2, 2,
       [](const std::vector<Var<double>>& a) { return matmul(a[0], a[1], true, true); }},
      {"affine", {{2, 3}, {4, 3}, {4}}, -2, 2, [](const std::vector<Var<double>>& a) { return affine(a[0], a[1], a[2]); }},
      {"conv2d", {{2, 2, 5, 5}, {3, 2, 3, 3}}, -1, 1,
       [](const std::vector<Var<double>>& a) { return conv2d(a[0], a[1], Conv2dParams{1, 0}); }},
      {"conv2d_strided_padded", {{1, 2, 6, 6}, {3, 2, 4, 4}}, -1, 1,
       [s2p1](const std::vector<Var<double>>& a) { return conv2d(a[0], a[1], s2p1); }},
      {"conv_transpose2d", {{1, 3, 3, 3}, {3, 2, 4, 4}}, -1, 1,
       [s2p1](const std::vector<Var<double>>& a) { return conv_transpose2d(a[0], a[1], s2p1); }},
      {"upsample2x", {{1, 2, 2, 3}}, -2, 2, [](const std::vector<Var<double>>& a) { return upsample2x(a[0]); }},
      {"block_sum2x", {{1, 2, 4, 2}}, -2, 2, [](const std::vector<Var<double>>& a) { return block_sum2x(a[0]); }},
      {"to_channels_last", {{2, 3, 2, 2}}, -2, 2, [](const std::vector<Var<double>>& a) { return to_channels_last(a[0]); }},
      {"to_channels_first", {{2, 2, 2, 3}}, -2, 2, [](const std::vector<Var<double>>& a) { return to_channels_first(a[0]); }},
  };
}

inline bool first_order_only(const std::string& name) {
  return name == "sigmoid" || name == "tanh" || name == "softmax";
}

// ---------------------------------------------------------------------------
// Critics with known penalties

// f(x) = <w, x> per sample, for flattened samples of size w.size().
inline gan::ScoreFn<double> linear_critic(const Var<double>& w) {
  return [w](const Var<double>& x) {
    const ad::Index n = x.shape()[0];
    return ad::reshape(ad::matmul(ad::reshape(x, Shape{n, w.size()}), ad::reshape(w, Shape{w.size(), 1})),
                       Shape{n});
  };
}

// ---------------------------------------------------------------------------
// Detection-loss cases evaluated by hand

struct DetLossCase {
  det::GridLayout layout;
  Tensor<double> pred;
  Tensor<double> target;
  double box = 0, confidence = 0, classification = 0, total = 0;
};

// Object {0.3,0.3,0.7,0.7} class 1 in cell (1,1) of a 2x2 grid.
//   box: prediction centered on the target with the same aspect and half
//        its area, so IoU = 0.5, no center or aspect term: 0.5.
//   confidence: (1 - 0.6)^2 + 0.5 * 3 * 0.2^2 = 0.16 + 0.06 = 0.22.
//   class: (0 - 0.2)^2 + (1 - 0.5)^2 + (0 - 0.3)^2 = 0.04 + 0.25 + 0.09 = 0.38.
//   total with unit weights: 1.10.
inline DetLossCase hand_detloss_case() {
  DetLossCase c;
  c.layout = det::GridLayout{2, 1, 3};
  c.target = det::encode_target<double>({{{0.3, 0.3, 0.7, 0.7}, 1}}, c.layout);
  c.pred = Tensor<double>(c.target.shape());
  const Index d = c.layout.depth();
  for (int cell = 0; cell < 3; ++cell) c.pred[cell * d + 4] = 0.2;
  double* obj = c.pred.ptr() + 3 * d;
  obj[0] = 0.0;
  obj[1] = 0.0;
  obj[2] = std::sqrt(0.32);
  obj[3] = std::sqrt(0.32);
  obj[4] = 0.6;
  obj[5] = 0.2;
  obj[6] = 0.5;
  obj[7] = 0.3;
  c.box = 0.5;
  c.confidence = 0.22;
  c.classification = 0.38;
  c.total = 1.10;
  return c;
}

}  // namespace boxgan::oracle
