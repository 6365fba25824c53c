// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/detloss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace boxgan::det {
namespace {

using ad::Index;
using ad::Shape;
using ad::Tensor;
using ad::Var;

// Normalizes a single [S,S,D] grid to a batch of one.
template <typename T>
Var<T> as_batch(const Var<T>& pred, const GridLayout& layout) {
  const Shape single{layout.cells, layout.cells, layout.depth()};
  if (pred.shape() == single) return ad::reshape(pred, Shape{1, layout.cells, layout.cells, layout.depth()});
  const Shape& s = pred.shape();
  if (s.size() != 4 || s[1] != layout.cells || s[2] != layout.cells || s[3] != layout.depth()) {
    throw ShapeError("detection grid " + ad::shape_string(s) + " does not match layout S=" +
                     std::to_string(layout.cells) + " depth=" + std::to_string(layout.depth()));
  }
  return pred;
}

template <typename T>
Tensor<T> target_as_batch(const Tensor<T>& target, const Shape& batch_shape) {
  if (target.size() != ad::element_count(batch_shape)) {
    throw ShapeError("target grid " + ad::shape_string(target.shape()) + " does not match prediction " +
                     ad::shape_string(batch_shape));
  }
  return target.reshaped(batch_shape);
}

template <typename T>
Var<T> weighted_squared_error(const Var<T>& pred, const Tensor<T>& target, Tensor<T> weights) {
  const Var<T> diff = ad::sub(pred, ad::constant(target));
  return ad::sum_rows(ad::mul(ad::constant(std::move(weights)), ad::square(diff)));
}

struct ObjectSlot {
  Index sample = 0;
  Index cell = 0;  // row * S + col
  int slot = 0;
};

template <typename T>
std::vector<ObjectSlot> object_slots(const Tensor<T>& target, const GridLayout& layout) {
  const Index n = target.dim(0);
  const Index cells = static_cast<Index>(layout.cells) * layout.cells;
  const Index d = layout.depth();
  std::vector<ObjectSlot> out;
  for (Index b = 0; b < n; ++b) {
    for (Index c = 0; c < cells; ++c) {
      for (int j = 0; j < layout.slots; ++j) {
        if (target[(b * cells + c) * d + j * 5 + 4] > T{0.5}) out.push_back({b, c, j});
      }
    }
  }
  return out;
}

}  // namespace

void GridLayout::validate() const {
  if (cells < 1 || slots < 1 || classes < 1) {
    throw PreconditionError("grid layout needs S, B, C >= 1");
  }
}

void LossWeights::validate() const {
  if (!(alpha >= 0 && beta >= 0 && theta >= 0 && lambda_noobj >= 0)) {
    throw PreconditionError("detection loss weights must be nonnegative");
  }
}

CellIndex responsible_cell(const geom::BBox& box, int cells) {
  const auto index = [cells](double center) {
    return std::clamp(static_cast<int>(std::floor(center * cells)), 0, cells - 1);
  };
  return {index(box.center_y()), index(box.center_x())};
}

template <typename T>
Tensor<T> encode_target(const std::vector<Label>& labels, const GridLayout& layout) {
  layout.validate();
  Tensor<T> grid(Shape{layout.cells, layout.cells, layout.depth()});
  std::vector<bool> taken(static_cast<std::size_t>(layout.cells * layout.cells), false);
  for (const Label& label : labels) {
    geom::validate(label.box);
    if (label.class_id < 0 || label.class_id >= layout.classes) {
      throw PreconditionError("class id " + std::to_string(label.class_id) + " out of range for C=" +
                              std::to_string(layout.classes));
    }
    const CellIndex cell = responsible_cell(label.box, layout.cells);
    const auto flat = static_cast<std::size_t>(cell.row * layout.cells + cell.col);
    if (taken[flat]) {
      throw PreconditionError("two labels map to cell (" + std::to_string(cell.row) + ", " +
                              std::to_string(cell.col) + ")");
    }
    taken[flat] = true;
    T* v = grid.ptr() + static_cast<Index>(flat) * layout.depth();
    v[0] = static_cast<T>(label.box.center_x() * layout.cells - cell.col);
    v[1] = static_cast<T>(label.box.center_y() * layout.cells - cell.row);
    v[2] = static_cast<T>(label.box.width());
    v[3] = static_cast<T>(label.box.height());
    v[4] = T{1};
    v[layout.class_offset() + label.class_id] = T{1};
  }
  return grid;
}

template <typename T>
Tensor<T> encode_targets(const std::vector<std::vector<Label>>& labels, const GridLayout& layout) {
  const Index per = static_cast<Index>(layout.cells) * layout.cells * layout.depth();
  Tensor<T> out(Shape{static_cast<Index>(labels.size()), layout.cells, layout.cells, layout.depth()});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Tensor<T> one = encode_target<T>(labels[i], layout);
    std::copy_n(one.ptr(), per, out.ptr() + static_cast<Index>(i) * per);
  }
  return out;
}

template <typename T>
Var<T> confidence_loss(const Var<T>& pred_in, const Tensor<T>& target_in, const GridLayout& layout,
                       double lambda_noobj) {
  const Var<T> pred = as_batch(pred_in, layout);
  const Tensor<T> target = target_as_batch(target_in, pred.shape());
  Tensor<T> weights(pred.shape());
  const Index d = layout.depth();
  const Index rows = pred.size() / d;
  for (Index r = 0; r < rows; ++r) {
    for (int j = 0; j < layout.slots; ++j) {
      const Index at = r * d + j * 5 + 4;
      weights[at] = target[at] > T{0.5} ? T{1} : static_cast<T>(lambda_noobj);
    }
  }
  return weighted_squared_error(pred, target, std::move(weights));
}

template <typename T>
Var<T> classification_loss(const Var<T>& pred_in, const Tensor<T>& target_in, const GridLayout& layout) {
  const Var<T> pred = as_batch(pred_in, layout);
  const Tensor<T> target = target_as_batch(target_in, pred.shape());
  Tensor<T> weights(pred.shape());
  const Index d = layout.depth();
  const Index rows = pred.size() / d;
  for (Index r = 0; r < rows; ++r) {
    bool object = false;
    for (int j = 0; j < layout.slots; ++j) object = object || target[r * d + j * 5 + 4] > T{0.5};
    if (!object) continue;
    for (int c = 0; c < layout.classes; ++c) weights[r * d + layout.class_offset() + c] = T{1};
  }
  return weighted_squared_error(pred, target, std::move(weights));
}

template <typename T>
Var<T> box_loss(const Var<T>& pred_in, const Tensor<T>& target_in, const GridLayout& layout) {
  const Var<T> pred = as_batch(pred_in, layout);
  const Tensor<T> target = target_as_batch(target_in, pred.shape());
  const Index n = pred.shape()[0];
  const auto slots = object_slots(target, layout);
  std::vector<int> per_sample(static_cast<std::size_t>(n), 0);
  for (const auto& s : slots) ++per_sample[static_cast<std::size_t>(s.sample)];
  for (Index b = 0; b < n; ++b) {
    if (per_sample[static_cast<std::size_t>(b)] != 1) {
      throw NoObjectError("sample " + std::to_string(b) + " has " +
                          std::to_string(per_sample[static_cast<std::size_t>(b)]) +
                          " object slots; the box term needs exactly one");
    }
  }

  const Index cells = static_cast<Index>(layout.cells) * layout.cells;
  const Index d = layout.depth();
  const T s = static_cast<T>(layout.cells);
  // One-hot selectors pull (tx, ty, tw, th) of each responsible slot out of the grid.
  std::vector<Tensor<T>> pick(4, Tensor<T>(pred.shape()));
  Tensor<T> col_offset(Shape{n}), row_offset(Shape{n});
  Tensor<T> gx1(Shape{n}), gy1(Shape{n}), gx2(Shape{n}), gy2(Shape{n});
  for (const auto& o : slots) {
    const Index base = (o.sample * cells + o.cell) * d + o.slot * 5;
    for (int k = 0; k < 4; ++k) pick[static_cast<std::size_t>(k)][base + k] = T{1};
    const T col = static_cast<T>(o.cell % layout.cells);
    const T row = static_cast<T>(o.cell / layout.cells);
    col_offset[o.sample] = col;
    row_offset[o.sample] = row;
    const T cx = (col + target[base]) / s, cy = (row + target[base + 1]) / s;
    const T w = target[base + 2], h = target[base + 3];
    gx1[o.sample] = cx - w / 2;
    gy1[o.sample] = cy - h / 2;
    gx2[o.sample] = cx + w / 2;
    gy2[o.sample] = cy + h / 2;
  }
  const auto component = [&](int k) {
    return ad::sum_rows(ad::mul(pred, ad::constant(pick[static_cast<std::size_t>(k)])));
  };
  const T inv_s = T{1} / s;
  const Var<T> cx = ad::scale(ad::add(component(0), ad::constant(col_offset)), inv_s);
  const Var<T> cy = ad::scale(ad::add(component(1), ad::constant(row_offset)), inv_s);
  const Var<T> half_w = ad::scale(component(2), T{0.5});
  const Var<T> half_h = ad::scale(component(3), T{0.5});
  geom::BoxBatch<T> p{ad::sub(cx, half_w), ad::sub(cy, half_h), ad::add(cx, half_w), ad::add(cy, half_h)};
  geom::BoxBatch<T> g{ad::constant(gx1), ad::constant(gy1), ad::constant(gx2), ad::constant(gy2)};
  return geom::ciou_loss(p, g);
}

template <typename T>
DetectionLoss<T> total_detection_loss(const Var<T>& pred, const Tensor<T>& target,
                                      const GridLayout& layout, const LossWeights& weights) {
  weights.validate();
  DetectionLoss<T> out;
  out.box = box_loss(pred, target, layout);
  out.confidence = confidence_loss(pred, target, layout, weights.lambda_noobj);
  out.classification = classification_loss(pred, target, layout);
  out.total = ad::add(ad::add(ad::scale(out.box, static_cast<T>(weights.alpha)),
                              ad::scale(out.confidence, static_cast<T>(weights.beta))),
                      ad::scale(out.classification, static_cast<T>(weights.theta)));
  return out;
}

template <typename T>
std::optional<Detection> decode_single(const Tensor<T>& grid, const GridLayout& layout, double threshold) {
  const Index d = layout.depth();
  const Index cells = static_cast<Index>(layout.cells) * layout.cells;
  if (grid.size() != cells * d) {
    throw ShapeError("decode_single: grid " + ad::shape_string(grid.shape()) + " does not match layout");
  }
  Index best_cell = 0;
  int best_slot = 0;
  T best = grid[4];
  for (Index c = 0; c < cells; ++c) {
    for (int j = 0; j < layout.slots; ++j) {
      const T conf = grid[c * d + j * 5 + 4];
      if (conf > best) {
        best = conf;
        best_cell = c;
        best_slot = j;
      }
    }
  }
  if (static_cast<double>(best) < threshold) return std::nullopt;

  const T* v = grid.ptr() + best_cell * d;
  const T* slot = v + best_slot * 5;
  const double s = layout.cells;
  const double cx = (static_cast<double>(best_cell % layout.cells) + slot[0]) / s;
  const double cy = (static_cast<double>(best_cell / layout.cells) + slot[1]) / s;
  const double w = slot[2], h = slot[3];
  geom::BBox box{std::clamp(cx - w / 2, 0.0, 1.0), std::clamp(cy - h / 2, 0.0, 1.0),
                 std::clamp(cx + w / 2, 0.0, 1.0), std::clamp(cy + h / 2, 0.0, 1.0)};
  if (!geom::is_valid(box)) return std::nullopt;

  const T* scores = v + layout.class_offset();
  const int cls = static_cast<int>(std::max_element(scores, scores + layout.classes) - scores);
  return Detection{box, cls, static_cast<double>(best)};
}

#define BOXGAN_INSTANTIATE(T)                                                                     \
  template Tensor<T> encode_target<T>(const std::vector<Label>&, const GridLayout&);              \
  template Tensor<T> encode_targets<T>(const std::vector<std::vector<Label>>&, const GridLayout&); \
  template Var<T> confidence_loss(const Var<T>&, const Tensor<T>&, const GridLayout&, double);    \
  template Var<T> classification_loss(const Var<T>&, const Tensor<T>&, const GridLayout&);        \
  template Var<T> box_loss(const Var<T>&, const Tensor<T>&, const GridLayout&);                   \
  template DetectionLoss<T> total_detection_loss(const Var<T>&, const Tensor<T>&,                 \
                                                 const GridLayout&, const LossWeights&);          \
  template std::optional<Detection> decode_single(const Tensor<T>&, const GridLayout&, double);

BOXGAN_INSTANTIATE(float)
BOXGAN_INSTANTIATE(double)
#undef BOXGAN_INSTANTIATE

}  // namespace boxgan::det
