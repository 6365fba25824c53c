// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Grid detection targets and the confidence / classification / combined
// detection losses.
//
// A detection grid is stored channels-last as [N, S, S, B*5 + C]: for each
// cell, B slots of (tx, ty, tw, th, confidence) followed by C class scores.
// (tx, ty) are offsets of the box center inside the cell, (tw, th) are the
// box extents relative to the image. Predictions are expected post-activation
// (sigmoid on the slot values, softmax on the class scores).

#pragma once

#include <optional>
#include <vector>

#include "boxgan/autodiff.hpp"
#include "boxgan/boxgeom.hpp"

namespace boxgan::det {

struct GridLayout {
  int cells = 4;   // S
  int slots = 1;   // B
  int classes = 3; // C

  int depth() const { return slots * 5 + classes; }
  int class_offset() const { return slots * 5; }
  void validate() const;
  friend bool operator==(const GridLayout&, const GridLayout&) = default;
};

struct Label {
  geom::BBox box;
  int class_id = 0;
  friend bool operator==(const Label&, const Label&) = default;
};

/// Weights of the combined loss; `alpha` here is the box-term weight, distinct
/// from the CIoU trade-off coefficient.
struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double theta = 1.0;
  double lambda_noobj = 0.5;
  void validate() const;
};

class NoObjectError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

struct CellIndex {
  int row = 0;
  int col = 0;
};

/// Cell containing the box center: floor(center * S), clamped to S - 1.
CellIndex responsible_cell(const geom::BBox& box, int cells);

/// Encodes at most one label into a [S, S, D] target grid. The object goes to
/// slot 0 of its responsible cell.
template <typename T>
ad::Tensor<T> encode_target(const std::vector<Label>& labels, const GridLayout& layout);

/// Stacks per-sample targets into [N, S, S, D].
template <typename T>
ad::Tensor<T> encode_targets(const std::vector<std::vector<Label>>& labels, const GridLayout& layout);

/// Per-sample confidence loss, shape [N]. `pred` is [N, S, S, D] (or [S, S, D]).
template <typename T>
ad::Var<T> confidence_loss(const ad::Var<T>& pred, const ad::Tensor<T>& target,
                           const GridLayout& layout, double lambda_noobj);

/// Per-sample classification loss over object cells, shape [N].
template <typename T>
ad::Var<T> classification_loss(const ad::Var<T>& pred, const ad::Tensor<T>& target,
                               const GridLayout& layout);

/// Per-sample CIoU between the predicted box in each responsible slot and the
/// target box. Throws NoObjectError unless every sample has one object.
template <typename T>
ad::Var<T> box_loss(const ad::Var<T>& pred, const ad::Tensor<T>& target, const GridLayout& layout);

template <typename T>
struct DetectionLoss {
  ad::Var<T> box;             // L_CIoU, [N]
  ad::Var<T> confidence;      // L_conf, [N]
  ad::Var<T> classification;  // L_clf, [N]
  ad::Var<T> total;           // alpha*box + beta*conf + theta*clf, [N]
};

template <typename T>
DetectionLoss<T> total_detection_loss(const ad::Var<T>& pred, const ad::Tensor<T>& target,
                                      const GridLayout& layout, const LossWeights& weights);

struct Detection {
  geom::BBox box;
  int class_id = 0;
  double confidence = 0.0;
};

/// Highest-confidence slot of a single [S, S, D] grid, or nullopt when its
/// confidence is below `threshold` (or the clamped box has no area).
template <typename T>
std::optional<Detection> decode_single(const ad::Tensor<T>& grid, const GridLayout& layout,
                                       double threshold);

}  // namespace boxgan::det
