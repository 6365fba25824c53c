// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <regex>

#include "boxgan/detloss.hpp"
#include "boxgan/netzoo.hpp"

namespace boxgan::nets {
namespace {

using ad::Shape;
using ad::Tensor;

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(n(rng));
  return t;
}

Tensor<float> box_condition(const geom::BBox& box, int cls, int side, int planes) {
  return condition_batch<float>({geom::rasterize_mask(box, side, side)}, {cls}, planes);
}

TEST(Generator, DefaultShapeAndRange) {
  const Generator<float> g(GeneratorSpec{}, 1);
  const Var<float> noise(normal_tensor<float>({2, 4, 64, 64}, 2));
  const auto cond = condition_batch<float>(
      {geom::rasterize_mask({0.1, 0.1, 0.5, 0.6}, 64, 64), geom::rasterize_mask({0.4, 0.2, 0.9, 0.7}, 64, 64)},
      {0, 2}, 3);
  const auto out = g.forward(noise, Var<float>(cond));
  EXPECT_EQ(out.shape(), (Shape{2, 3, 64, 64}));
  for (float v : out.value().data()) {
    ASSERT_GE(v, -1.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Generator, DeterministicForSeedAndInputs) {
  const GeneratorSpec spec{32, 2, 2, 3, 3, 8};
  const Var<float> noise(normal_tensor<float>({2, 2, 32, 32}, 7));
  const Generator<float> a(spec, 11), b(spec, 11), c(spec, 12);
  EXPECT_EQ(a.forward(noise).value(), b.forward(noise).value());
  EXPECT_NE(a.forward(noise).value(), c.forward(noise).value());
}

TEST(Generator, ConditionReachesTheOutput) {
  const GeneratorSpec spec{32, 2, 2, 3, 3, 8};
  const Generator<double> g(spec, 3);
  const Var<double> noise(normal_tensor<double>({1, 2, 32, 32}, 4));
  const Var<double> cond(box_condition({0.25, 0.25, 0.75, 0.75}, 1, 32, 3).cast<double>(), true);
  const auto gc = ad::grad(ad::sum(g.forward(noise, cond)), {cond})[0].value();
  double norm = 0;
  for (double v : gc.data()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(Generator, StepOneModeIgnoresConditionEncoder) {
  const GeneratorSpec spec{32, 2, 2, 3, 3, 8};
  Generator<double> g(spec, 3);
  const Var<double> noise(normal_tensor<double>({1, 2, 32, 32}, 4));
  const auto& params = g.parameters();
  const auto grads = ad::grad(ad::sum(g.forward(noise)), g.variables());
  // Layers 0 and 1 are the condition encoder.
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name.rfind("generator/0/", 0) == 0 || params[i].name.rfind("generator/1/", 0) == 0) {
      for (double v : grads[i].value().data()) ASSERT_EQ(v, 0.0) << params[i].name;
    }
  }
}

TEST(Generator, RejectsMismatchedInputs) {
  const GeneratorSpec spec{32, 2, 2, 3, 3, 8};
  const Generator<float> g(spec, 1);
  EXPECT_THROW(g.forward(Var<float>(Tensor<float>(Shape{1, 2, 16, 16}))), ShapeError);
  EXPECT_THROW(g.forward(Var<float>(Tensor<float>(Shape{1, 3, 32, 32}))), ShapeError);
  const Var<float> noise(Tensor<float>(Shape{2, 2, 32, 32}));
  EXPECT_THROW(g.forward(noise, Var<float>(Tensor<float>(Shape{1, 3, 32, 32}))), ShapeError);
  EXPECT_THROW(Generator<float>(GeneratorSpec{60, 4, 4, 3, 4, 8}, 1), PreconditionError);
}

TEST(Critic, PatchMapShapes) {
  const Critic<float> c(CriticSpec{3, 4, 0.2}, 1);
  // An 8x8 patch grid over a 256x256x3 image gives a 32x32x1 score map.
  const auto big = c.forward(Var<float>(Tensor<float>(Shape{1, 3, 256, 256}, 0.1f)));
  EXPECT_EQ(big.score_map.shape(), (Shape{1, 1, 32, 32}));
  const auto small = c.forward(Var<float>(normal_tensor<float>({2, 3, 64, 64}, 1)));
  EXPECT_EQ(small.score_map.shape(), (Shape{2, 1, 8, 8}));
  EXPECT_EQ(small.scores.shape(), (Shape{2}));
  EXPECT_THROW(c.forward(Var<float>(Tensor<float>(Shape{1, 3, 60, 60}))), ShapeError);
}

TEST(Critic, ScoreIsPatchMean) {
  const Critic<double> c(CriticSpec{}, 5);
  const auto out = c.forward(Var<double>(normal_tensor<double>({2, 3, 64, 64}, 9)));
  for (int i = 0; i < 2; ++i) {
    double acc = 0;
    for (int j = 0; j < 64; ++j) acc += out.score_map.value()[i * 64 + j];
    EXPECT_NEAR(out.scores.value()[i], acc / 64.0, 1e-12);
  }
}

TEST(Critic, ScoresAreUnbounded) {
  Critic<double> c(CriticSpec{1, 2, 1.0}, 1);
  for (auto& p : c.parameters()) {
    Var<double> v = p.var;
    v.mutable_value().fill(p.name.ends_with("weight") ? 1.0 : 0.0);
  }
  const auto s = c.forward(Var<double>(Tensor<double>(Shape{1, 3, 2, 2}, 100.0))).scores.item();
  EXPECT_GT(s, 1.0);  // no saturating output layer
}

TEST(Critic, ConstantWeightsDependOnlyOnMean) {
  // One stride-2 layer on a 2x2 image: the 4x4 window covers every pixel once
  // and the 3x3 head sees only its center tap. With weight 0.1, head weight
  // 0.5, zero biases and 2 channels, an all-ones input gives
  //   layer: 0.1 * 12 = 1.2 per channel, head: 0.5 * (1.2 + 1.2) = 1.2.
  Critic<double> c(CriticSpec{1, 2, 0.2}, 1);
  for (auto& p : c.parameters()) {
    Var<double> v = p.var;
    const bool head = p.name.rfind("critic/1/", 0) == 0;
    v.mutable_value().fill(p.name.ends_with("bias") ? 0.0 : (head ? 0.5 : 0.1));
  }
  const auto ones = c.forward(Var<double>(Tensor<double>(Shape{1, 3, 2, 2}, 1.0))).scores.item();
  EXPECT_NEAR(ones, 1.2, 1e-12);
  Tensor<double> mixed(Shape{1, 3, 2, 2}, {3, -1, 0, 2, 1, 1, 0.5, 0.5, 2, -2, 4, 1});
  EXPECT_NEAR(c.forward(Var<double>(mixed)).scores.item(), ones, 1e-12);
}

TEST(Detector, GridShapeAndActivations) {
  const Detector<float> d(DetectorSpec{}, 1);
  const auto grid = d.forward(Var<float>(normal_tensor<float>({2, 3, 64, 64}, 3))).value();
  ASSERT_EQ(grid.shape(), (Shape{2, 4, 4, 8}));
  for (Index cell = 0; cell < 2 * 16; ++cell) {
    const float* v = grid.ptr() + cell * 8;
    for (int k = 0; k < 5; ++k) {
      EXPECT_GT(v[k], 0.0f);
      EXPECT_LT(v[k], 1.0f);
    }
    EXPECT_NEAR(v[5] + v[6] + v[7], 1.0f, 1e-6f);
  }
  EXPECT_THROW(d.forward(Var<float>(Tensor<float>(Shape{1, 3, 32, 32}))), ShapeError);
}

TEST(Detector, LossGradientReachesPixels) {
  const Detector<double> d(DetectorSpec{}, 2);
  const Var<double> img(normal_tensor<double>({1, 3, 64, 64}, 4), true);
  const auto target = det::encode_targets<double>({{det::Label{{0.2, 0.3, 0.6, 0.8}, 1}}}, d.spec().layout());
  const auto loss = det::total_detection_loss(d.forward(img), target, d.spec().layout(), det::LossWeights{});
  const auto g = ad::grad(ad::sum(loss.total), {img})[0].value();
  double norm = 0;
  for (double v : g.data()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(Detector, FrozenParametersSurviveBackward) {
  Detector<float> d(DetectorSpec{}, 2);
  d.set_trainable(false);
  ad::TensorBundle before;
  d.export_to(before);
  const Var<float> img(normal_tensor<float>({2, 3, 64, 64}, 4), true);
  ad::backward(ad::sum(ad::square(d.forward(img))));
  EXPECT_TRUE(img.has_grad());
  ad::TensorBundle after;
  d.export_to(after);
  EXPECT_EQ(ad::encode_gabx(before), ad::encode_gabx(after));
  for (const auto& p : d.parameters()) EXPECT_FALSE(p.var.has_grad()) << p.name;
}

TEST(Parameters, CountsAreFunctionsOfSpec) {
  // generator: cond 3->4, 4->4 (3x3); down 8->32->64->128->256 (4x4);
  // up 256->128, 256->64, 128->32, 64->32 (3x3); out 40->3 (3x3).
  EXPECT_EQ(Generator<float>(GeneratorSpec{}, 1).parameter_count(), 1191967);
  // critic: 3->32->64->128 (4x4), head 128->1 (3x3).
  EXPECT_EQ(Critic<float>(CriticSpec{}, 1).parameter_count(), 166753);
  // detector: 3->16->32->64->64 (4x4), mixer 64->64 (3x3), head 64->8 (1x1).
  EXPECT_EQ(Detector<float>(DetectorSpec{}, 1).parameter_count(), 144888);
  EXPECT_EQ(Generator<float>(GeneratorSpec{}, 1).parameter_count(),
            Generator<float>(GeneratorSpec{}, 99).parameter_count());
}

TEST(Parameters, NamesFollowNetworkLayerRole) {
  const std::regex pattern("(generator|critic|detector)/[0-9]+/(weight|bias)");
  const Critic<float> c(CriticSpec{}, 1);
  const Detector<float> d(DetectorSpec{}, 1);
  for (const auto& p : c.parameters()) EXPECT_TRUE(std::regex_match(p.name, pattern)) << p.name;
  for (const auto& p : d.parameters()) EXPECT_TRUE(std::regex_match(p.name, pattern)) << p.name;
  EXPECT_EQ(c.parameters().front().name, "critic/0/weight");
  EXPECT_EQ(c.parameters().back().name, "critic/3/bias");
}

TEST(Parameters, BundleRoundTrip) {
  const GeneratorSpec spec{32, 2, 2, 1, 3, 8};
  const Generator<float> a(spec, 1);
  ad::TensorBundle bundle;
  export_spec(bundle, spec);
  a.export_to(bundle);
  const auto decoded = ad::decode_gabx(ad::encode_gabx(bundle));
  const GeneratorSpec back = import_generator_spec(decoded);
  EXPECT_EQ(back, spec);
  Generator<float> b(back, 2);
  b.import_from(decoded);
  const Var<float> noise(normal_tensor<float>({1, 2, 32, 32}, 3));
  EXPECT_EQ(a.forward(noise).value(), b.forward(noise).value());

  Critic<float> wrong(CriticSpec{}, 1);
  EXPECT_THROW(wrong.import_from(decoded), DataError);
  EXPECT_THROW(import_critic_spec(decoded), DataError);

  ad::TensorBundle cb;
  export_spec(cb, CriticSpec{2, 5, 0.2});
  EXPECT_EQ(import_critic_spec(cb), (CriticSpec{2, 5, 0.2}));
}

TEST(ConditionBatch, PlanesAndPlainMask) {
  const auto m = geom::rasterize_mask({0.0, 0.0, 0.5, 0.5}, 4, 4);
  const auto three = condition_batch<float>({m}, {2}, 3);
  EXPECT_EQ(three.shape(), (Shape{1, 3, 4, 4}));
  EXPECT_EQ(three[2 * 16 + 0], 1.0f);
  EXPECT_EQ(three[0], 0.0f);
  float total = 0;
  for (float v : three.data()) total += v;
  EXPECT_EQ(total, 4.0f);
  const auto one = condition_batch<float>({m}, {2}, 1);
  EXPECT_EQ(one[0], 1.0f);
  EXPECT_THROW(condition_batch<float>({m}, {3}, 3), PreconditionError);
}

}  // namespace
}  // namespace boxgan::nets
