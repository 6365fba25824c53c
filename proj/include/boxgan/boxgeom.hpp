// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Axis-aligned boxes in normalized image coordinates, the IoU/CIoU family of
// box losses, and conversion between boxes and binary masks.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "boxgan/autodiff.hpp"
#include "boxgan/errors.hpp"

namespace boxgan::geom {

/// Normalized coordinates in [0,1]; x grows rightward, y grows downward.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  friend bool operator==(const BBox&, const BBox&) = default;
};

class DegenerateBoxError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class EmptyMaskError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

bool is_valid(const BBox& box);
/// Throws PreconditionError unless x1 < x2, y1 < y2 and every coordinate is in [0,1].
void validate(const BBox& box);

double iou(const BBox& a, const BBox& b);
/// v = 4/pi^2 * (atan(w_gt/h_gt) - atan(w/h))^2, in [0,1].
double aspect_consistency(const BBox& pred, const BBox& gt);

struct CiouTerms {
  double iou = 0.0;
  double center_distance_sq = 0.0;  // rho^2 between box centers
  double enclosing_diagonal_sq = 0.0;  // c^2 of the smallest enclosing box
  double v = 0.0;
  double alpha = 0.0;
  double loss = 0.0;
};

CiouTerms ciou_terms(const BBox& pred, const BBox& gt);
/// 1 - IoU + rho^2/c^2 + alpha*v with alpha = v / ((1 - IoU) + v).
double ciou_loss(const BBox& pred, const BBox& gt);

/// Binary raster; nonzero pixels form one filled axis-aligned rectangle.
class Mask {
 public:
  Mask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint8_t at(int row, int col) const { return values_[index(row, col)]; }
  void set(int row, int col, std::uint8_t v);
  long count() const;
  const std::vector<std::uint8_t>& values() const { return values_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> values_;
};

/// Pixel (r, c) is set iff its center ((c+0.5)/width, (r+0.5)/height) lies in
/// [x1, x2) x [y1, y2). Throws DegenerateBoxError when no center falls inside.
Mask rasterize_mask(const BBox& box, int width, int height);
/// Bounding box of the nonzero pixels. Throws EmptyMaskError on an all-zero mask.
BBox mask_to_box(const Mask& mask);

// ---------------------------------------------------------------------------
// Differentiable CIoU over batches of boxes. Each coordinate is a [N] tensor.

template <typename T>
struct BoxBatch {
  ad::Var<T> x1, y1, x2, y2;
};

namespace detail {

// min/max follow the subgradient convention of ad::minimum/maximum: the first
// argument wins ties.
inline double pick_min(double a, double b) { return a <= b ? a : b; }
inline double pick_max(double a, double b) { return a >= b ? a : b; }
inline double clamp_nonneg(double a) { return pick_max(a, 0.0); }
inline double one_minus(double a) { return 1.0 - a; }
inline double times(double a, double c) { return a * c; }
inline double arctan(double a) { return std::atan(a); }
inline double nonzero(double a) { return a == 0.0 ? 1.0 : a; }

template <typename T>
ad::Var<T> pick_min(const ad::Var<T>& a, const ad::Var<T>& b) { return ad::minimum(a, b); }
template <typename T>
ad::Var<T> pick_max(const ad::Var<T>& a, const ad::Var<T>& b) { return ad::maximum(a, b); }
template <typename T>
ad::Var<T> clamp_nonneg(const ad::Var<T>& a) {
  return ad::maximum(a, ad::constant(ad::Tensor<T>::scalar(T{0})));
}
template <typename T>
ad::Var<T> one_minus(const ad::Var<T>& a) { return ad::add_scalar(ad::neg(a), T{1}); }
template <typename T>
ad::Var<T> times(const ad::Var<T>& a, double c) { return ad::scale(a, static_cast<T>(c)); }
template <typename T>
ad::Var<T> arctan(const ad::Var<T>& a) { return ad::atan(a); }
// Replaces exact zeros by one so that 0/0 in alpha becomes 0 when v == 0.
template <typename T>
ad::Var<T> nonzero(const ad::Var<T>& a) {
  ad::Tensor<T> fix(a.shape());
  for (ad::Index i = 0; i < a.size(); ++i) fix[i] = a.value()[i] == T{0} ? T{1} : T{0};
  return ad::add(a, ad::constant(std::move(fix)));
}

template <typename Num>
struct CiouParts {
  Num iou, rho_sq, diag_sq, v, alpha, loss;
};

/// One formula shared by the scalar reference and the differentiable path.
template <typename Num>
CiouParts<Num> ciou_formula(const Num& px1, const Num& py1, const Num& px2, const Num& py2,
                            const Num& gx1, const Num& gy1, const Num& gx2, const Num& gy2) {
  const Num pw = px2 - px1, ph = py2 - py1;
  const Num gw = gx2 - gx1, gh = gy2 - gy1;
  const Num iw = clamp_nonneg(pick_min(px2, gx2) - pick_max(px1, gx1));
  const Num ih = clamp_nonneg(pick_min(py2, gy2) - pick_max(py1, gy1));
  const Num inter = iw * ih;
  const Num uni = pw * ph + gw * gh - inter;
  const Num overlap = inter / uni;

  const Num dx = times((px1 - gx1) + (px2 - gx2), 0.5);
  const Num dy = times((py1 - gy1) + (py2 - gy2), 0.5);
  const Num rho_sq = dx * dx + dy * dy;
  const Num cw = pick_max(px2, gx2) - pick_min(px1, gx1);
  const Num ch = pick_max(py2, gy2) - pick_min(py1, gy1);
  const Num diag_sq = cw * cw + ch * ch;

  const Num angle = arctan(gw / gh) - arctan(pw / ph);
  const Num v = times(angle * angle, 4.0 / (std::numbers::pi * std::numbers::pi));
  const Num alpha = v / nonzero(one_minus(overlap) + v);
  const Num loss = one_minus(overlap) + rho_sq / diag_sq + alpha * v;
  return {overlap, rho_sq, diag_sq, v, alpha, loss};
}

}  // namespace detail

/// Per-element CIoU loss between predicted and target batches; result is [N].
template <typename T>
ad::Var<T> ciou_loss(const BoxBatch<T>& pred, const BoxBatch<T>& gt) {
  return detail::ciou_formula(pred.x1, pred.y1, pred.x2, pred.y2, gt.x1, gt.y1, gt.x2, gt.y2).loss;
}

}  // namespace boxgan::geom
