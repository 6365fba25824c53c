// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/boxgeom.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace boxgan::geom {
namespace {

std::string describe(const BBox& b) {
  std::ostringstream ss;
  ss << "(" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ")";
  return ss.str();
}

}  // namespace

bool is_valid(const BBox& b) {
  const auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  return in_unit(b.x1) && in_unit(b.y1) && in_unit(b.x2) && in_unit(b.y2) && b.x1 < b.x2 &&
         b.y1 < b.y2;
}

void validate(const BBox& box) {
  if (!is_valid(box)) throw PreconditionError("invalid box " + describe(box));
}

double iou(const BBox& a, const BBox& b) {
  validate(a);
  validate(b);
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double aspect_consistency(const BBox& pred, const BBox& gt) {
  validate(pred);
  validate(gt);
  const double d = std::atan(gt.width() / gt.height()) - std::atan(pred.width() / pred.height());
  return 4.0 / (std::numbers::pi * std::numbers::pi) * d * d;
}

CiouTerms ciou_terms(const BBox& pred, const BBox& gt) {
  validate(pred);
  validate(gt);
  const auto p = detail::ciou_formula(pred.x1, pred.y1, pred.x2, pred.y2, gt.x1, gt.y1, gt.x2, gt.y2);
  return {p.iou, p.rho_sq, p.diag_sq, p.v, p.alpha, p.loss};
}

double ciou_loss(const BBox& pred, const BBox& gt) { return ciou_terms(pred, gt).loss; }

Mask::Mask(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw PreconditionError("mask extents must be >= 1, got " + std::to_string(width) + "x" +
                            std::to_string(height));
  }
  values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

void Mask::set(int row, int col, std::uint8_t v) {
  if (v > 1) throw PreconditionError("mask values are 0 or 1");
  values_[index(row, col)] = v;
}

long Mask::count() const { return static_cast<long>(std::count(values_.begin(), values_.end(), 1)); }

Mask rasterize_mask(const BBox& box, int width, int height) {
  validate(box);
  Mask mask(width, height);
  int first_col = width, last_col = -1, first_row = height, last_row = -1;
  for (int c = 0; c < width; ++c) {
    const double cx = (c + 0.5) / width;
    if (cx >= box.x1 && cx < box.x2) {
      first_col = std::min(first_col, c);
      last_col = c;
    }
  }
  for (int r = 0; r < height; ++r) {
    const double cy = (r + 0.5) / height;
    if (cy >= box.y1 && cy < box.y2) {
      first_row = std::min(first_row, r);
      last_row = r;
    }
  }
  if (last_col < 0 || last_row < 0) {
    throw DegenerateBoxError("box " + describe(box) + " covers no pixel center on a " +
                             std::to_string(width) + "x" + std::to_string(height) + " grid");
  }
  for (int r = first_row; r <= last_row; ++r) {
    for (int c = first_col; c <= last_col; ++c) mask.set(r, c, 1);
  }
  return mask;
}

BBox mask_to_box(const Mask& mask) {
  int min_r = mask.height(), max_r = -1, min_c = mask.width(), max_c = -1;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      min_r = std::min(min_r, r);
      max_r = std::max(max_r, r);
      min_c = std::min(min_c, c);
      max_c = std::max(max_c, c);
    }
  }
  if (max_r < 0) throw EmptyMaskError("mask has no nonzero pixel");
  const double w = mask.width(), h = mask.height();
  return {min_c / w, min_r / h, (max_c + 1) / w, (max_r + 1) / h};
}

}  // namespace boxgan::geom
