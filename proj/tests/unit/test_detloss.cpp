// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "boxgan/detloss.hpp"
#include "boxgan/gradcheck.hpp"
#include "oracles.hpp"

namespace boxgan::det {
namespace {

using ad::Index;
using ad::Shape;
using ad::Tensor;
using ad::Var;

Var<double> leaf(const Tensor<double>& t) { return Var<double>(t, false); }

double item(const Var<double>& v) { return v.value()[0]; }

TEST(EncodeTarget, ResponsibleCellFollowsFloorRule) {
  const GridLayout layout{2, 1, 3};
  // Center (0.7, 0.2): column floor(1.4) = 1, row floor(0.4) = 0.
  const CellIndex c = responsible_cell({0.6, 0.1, 0.8, 0.3}, 2);
  EXPECT_EQ(c.row, 0);
  EXPECT_EQ(c.col, 1);
  const auto grid = encode_target<double>({{{0.6, 0.1, 0.8, 0.3}, 2}}, layout);
  const Index d = layout.depth();
  EXPECT_EQ(grid[1 * d + 4], 1.0);
  EXPECT_NEAR(grid[1 * d + 0], 0.4, 1e-12);
  EXPECT_NEAR(grid[1 * d + 1], 0.4, 1e-12);
  EXPECT_NEAR(grid[1 * d + 2], 0.2, 1e-12);
  EXPECT_EQ(grid[1 * d + 5 + 2], 1.0);
  double total = 0;
  for (double v : grid.data()) total += v;
  EXPECT_NEAR(total, 0.4 + 0.4 + 0.2 + 0.2 + 1 + 1, 1e-12);
}

TEST(EncodeTarget, CenterOnCellBoundaryGoesUp) {
  const CellIndex c = responsible_cell({0.25, 0.25, 0.75, 0.75}, 2);
  EXPECT_EQ(c.row, 1);
  EXPECT_EQ(c.col, 1);
}

TEST(EncodeTarget, EmptyLabelsGiveZeroGrid) {
  const auto grid = encode_target<double>({}, GridLayout{});
  for (double v : grid.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(grid.shape(), (Shape{4, 4, 8}));
}

TEST(EncodeTarget, Errors) {
  EXPECT_THROW(encode_target<double>({{{0.1, 0.1, 0.2, 0.2}, 3}}, GridLayout{}), PreconditionError);
  EXPECT_THROW(encode_target<double>({{{0.1, 0.1, 0.2, 0.2}, 0}, {{0.05, 0.05, 0.15, 0.15}, 1}}, GridLayout{}),
               PreconditionError);
}

TEST(ConfidenceLoss, PerfectPredictionIsZero) {
  const GridLayout layout{4, 1, 3};
  const auto target = encode_target<double>({{{0.1, 0.1, 0.4, 0.5}, 1}}, layout);
  EXPECT_EQ(item(confidence_loss(leaf(target), target, layout, 0.5)), 0.0);
}

TEST(ConfidenceLoss, HandArithmetic) {
  const GridLayout layout{2, 1, 3};
  const auto target = encode_target<double>({{{0.1, 0.1, 0.4, 0.4}, 0}}, layout);  // cell (0,0)
  Tensor<double> pred = target;
  const Index d = layout.depth();
  pred[0 * d + 4] = 0.6;
  for (int c = 1; c < 4; ++c) pred[c * d + 4] = 0.2;
  EXPECT_NEAR(item(confidence_loss(leaf(pred), target, layout, 0.5)), 0.22, 1e-12);
  // With lambda_noobj = 0 and a perfect object cell, no-object predictions do not matter.
  pred[4] = 1.0;
  EXPECT_EQ(item(confidence_loss(leaf(pred), target, layout, 0.0)), 0.0);
}

TEST(ConfidenceLoss, AffineInLambda) {
  const GridLayout layout{4, 1, 3};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  const auto target = encode_target<double>({{{0.3, 0.3, 0.6, 0.5}, 2}}, layout);
  Tensor<double> pred(target.shape());
  for (auto& v : pred.data()) v = u(rng);
  const double l0 = item(confidence_loss(leaf(pred), target, layout, 0.0));
  const double l1 = item(confidence_loss(leaf(pred), target, layout, 1.0));
  double noobj = 0;
  for (Index c = 0; c < 16; ++c) {
    if (target[c * 8 + 4] == 0.0) noobj += pred[c * 8 + 4] * pred[c * 8 + 4];
  }
  EXPECT_NEAR(l1 - l0, noobj, 1e-12);
  EXPECT_NEAR(item(confidence_loss(leaf(pred), target, layout, 0.3)), l0 + 0.3 * noobj, 1e-12);
}

TEST(ClassificationLoss, HandArithmetic) {
  const GridLayout layout{2, 1, 3};
  const auto target = encode_target<double>({{{0.6, 0.6, 0.9, 0.9}, 1}}, layout);  // cell (1,1)
  Tensor<double> pred = target;
  const Index base = 3 * layout.depth() + layout.class_offset();
  pred[base + 0] = 0.2;
  pred[base + 1] = 0.5;
  pred[base + 2] = 0.3;
  EXPECT_NEAR(item(classification_loss(leaf(pred), target, layout)), 0.38, 1e-12);
  EXPECT_EQ(item(classification_loss(leaf(target), target, layout)), 0.0);
  const auto empty = encode_target<double>({}, layout);
  EXPECT_EQ(item(classification_loss(leaf(pred), empty, layout)), 0.0);
}

TEST(TotalLoss, WeightedSumOfComponents) {
  const GridLayout layout{2, 1, 3};
  const auto target = encode_target<double>({{{0.1, 0.1, 0.4, 0.4}, 0}}, layout);
  Tensor<double> pred = target;
  pred[0] = 0.2;
  pred[2] = 0.35;
  pred[4] = 0.7;
  pred[6] = 0.3;
  LossWeights w{2.0, 0.5, 3.0, 0.5};
  const auto parts = total_detection_loss(leaf(pred), target, layout, w);
  EXPECT_NEAR(item(parts.total),
              2.0 * item(parts.box) + 0.5 * item(parts.confidence) + 3.0 * item(parts.classification),
              1e-12);
}

TEST(TotalLoss, HandBuiltComponentsAddUp) {
  const auto c = oracle::hand_detloss_case();
  const auto parts = total_detection_loss(leaf(c.pred), c.target, c.layout, LossWeights{});
  EXPECT_NEAR(item(parts.box), c.box, 1e-12);
  EXPECT_NEAR(item(parts.confidence), c.confidence, 1e-12);
  EXPECT_NEAR(item(parts.classification), c.classification, 1e-12);
  EXPECT_NEAR(item(parts.total), c.total, 1e-12);
}

TEST(TotalLoss, PerfectPredictionIsZero) {
  const GridLayout layout{4, 1, 3};
  const auto target = encode_target<double>({{{0.2, 0.3, 0.6, 0.8}, 2}}, layout);
  const auto parts = total_detection_loss(leaf(target), target, layout, LossWeights{});
  EXPECT_NEAR(item(parts.total), 0.0, 1e-12);
}

TEST(TotalLoss, AlphaZeroIgnoresGeometry) {
  const GridLayout layout{4, 1, 3};
  const auto target = encode_target<double>({{{0.2, 0.3, 0.6, 0.8}, 2}}, layout);
  Tensor<double> a = target, b = target;
  a[0] = 0.1;
  b[2] = 0.9;
  b[3] = 0.05;
  LossWeights w;
  w.alpha = 0.0;
  EXPECT_NEAR(item(total_detection_loss(leaf(a), target, layout, w).total),
              item(total_detection_loss(leaf(b), target, layout, w).total), 1e-15);
}

TEST(TotalLoss, NoObjectIsAnError) {
  const GridLayout layout{4, 1, 3};
  const auto target = encode_target<double>({}, layout);
  EXPECT_THROW(total_detection_loss(leaf(target), target, layout, LossWeights{}), NoObjectError);
}

TEST(TotalLoss, ShapeMismatch) {
  const GridLayout layout{4, 1, 3};
  const auto target = encode_target<double>({{{0.2, 0.3, 0.6, 0.8}, 2}}, layout);
  const Var<double> wrong(Tensor<double>(Shape{2, 2, 8}), false);
  EXPECT_THROW(confidence_loss(wrong, target, layout, 0.5), ShapeError);
}

TEST(TotalLoss, InvariantUnderCellRelabeling) {
  // Moving the object and every prediction to mirrored cells leaves the sums unchanged.
  const GridLayout layout{4, 1, 3};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const auto target = encode_target<double>({{{0.1, 0.1, 0.3, 0.2}, 1}}, layout);
  Tensor<double> pred(target.shape());
  for (auto& v : pred.data()) v = u(rng);
  Tensor<double> t2(target.shape()), p2(target.shape());
  const Index d = layout.depth();
  for (Index c = 0; c < 16; ++c) {
    for (Index k = 0; k < d; ++k) {
      t2[(15 - c) * d + k] = target[c * d + k];
      p2[(15 - c) * d + k] = pred[c * d + k];
    }
  }
  EXPECT_NEAR(item(confidence_loss(leaf(pred), target, layout, 0.5)),
              item(confidence_loss(leaf(p2), t2, layout, 0.5)), 1e-12);
  EXPECT_NEAR(item(classification_loss(leaf(pred), target, layout)),
              item(classification_loss(leaf(p2), t2, layout)), 1e-12);
}

TEST(Decode, RoundTripsEncodedBox) {
  const GridLayout layout{4, 1, 3};
  const geom::BBox box{0.25, 0.25, 0.75, 0.75};
  const auto det = decode_single(encode_target<double>({{box, 1}}, layout), layout, 0.0);
  ASSERT_TRUE(det.has_value());
  EXPECT_NEAR(det->box.x1, 0.25, 1e-12);
  EXPECT_NEAR(det->box.y2, 0.75, 1e-12);
  EXPECT_EQ(det->class_id, 1);
}

TEST(Decode, BelowThresholdIsNoDetection) {
  const GridLayout layout{4, 1, 3};
  EXPECT_FALSE(decode_single(Tensor<double>(Shape{4, 4, 8}), layout, 0.5).has_value());
}

TEST(Decode, PicksHighestConfidenceSlot) {
  const GridLayout layout{2, 2, 3};
  Tensor<double> grid(Shape{2, 2, layout.depth()});
  const Index d = layout.depth();
  // cell 1 slot 1 at 0.9, cell 2 slot 0 at 0.8
  double* a = grid.ptr() + 1 * d + 5;
  a[0] = 0.5; a[1] = 0.5; a[2] = 0.2; a[3] = 0.2; a[4] = 0.9;
  double* b = grid.ptr() + 2 * d;
  b[0] = 0.5; b[1] = 0.5; b[2] = 0.4; b[3] = 0.4; b[4] = 0.8;
  const auto det = decode_single(grid, layout, 0.5);
  ASSERT_TRUE(det.has_value());
  EXPECT_NEAR(det->confidence, 0.9, 1e-12);
  EXPECT_NEAR(det->box.x1, 0.75 - 0.1, 1e-12);
  EXPECT_NEAR(det->box.y1, 0.25 - 0.1, 1e-12);
}

TEST(Decode, EncodeDecodeIdentityProperty) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 500; ++i) {
    const GridLayout layout{1 + static_cast<int>(rng() % 7), 1 + static_cast<int>(rng() % 3),
                            1 + static_cast<int>(rng() % 5)};
    double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    if (x2 - x1 < 1e-3 || y2 - y1 < 1e-3) continue;
    const Label label{{x1, y1, x2, y2}, static_cast<int>(rng() % static_cast<unsigned>(layout.classes))};
    const auto det = decode_single(encode_target<double>({label}, layout), layout, 0.0);
    ASSERT_TRUE(det.has_value());
    EXPECT_NEAR(det->box.x1, x1, 1e-6);
    EXPECT_NEAR(det->box.y1, y1, 1e-6);
    EXPECT_NEAR(det->box.x2, x2, 1e-6);
    EXPECT_NEAR(det->box.y2, y2, 1e-6);
    EXPECT_EQ(det->class_id, label.class_id);
  }
}

TEST(DetLossGradients, MatchFiniteDifferences) {
  const GridLayout layout{3, 2, 3};
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 5; ++trial) {
    const auto target = encode_target<double>({{{0.15, 0.4, 0.55, 0.85}, trial % 3}}, layout);
    Tensor<double> pred(target.shape());
    for (auto& v : pred.data()) v = u(rng);
    const auto check = [&](auto loss) {
      const auto r = ad::grad_check([&](const Var<double>& p) { return ad::sum(loss(p)); }, pred, 1e-4);
      EXPECT_TRUE(r.passed) << r.max_rel_error;
    };
    check([&](const Var<double>& p) { return confidence_loss(p, target, layout, 0.5); });
    check([&](const Var<double>& p) { return classification_loss(p, target, layout); });
    check([&](const Var<double>& p) { return box_loss(p, target, layout); });
    check([&](const Var<double>& p) { return total_detection_loss(p, target, layout, LossWeights{}).total; });
  }
}

}  // namespace
}  // namespace boxgan::det
