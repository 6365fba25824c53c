// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// The three networks: U-Net generator with a mask condition encoder, patch
// critic, and a small grid detector.
//
// Parameters are named "<network>/<layer-index>/<role>" with role "weight" or
// "bias", e.g. "critic/2/weight". Layer indices count convolutions in forward
// order starting at 0. A network's spec travels with its weights as the tensor
// "spec/<network>".

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "boxgan/autodiff.hpp"
#include "boxgan/boxgeom.hpp"
#include "boxgan/detloss.hpp"
#include "boxgan/gabx.hpp"

namespace boxgan::nets {

using ad::Index;
using ad::Var;

struct GeneratorSpec {
  int image_side = 64;
  int noise_channels = 4;      // Z
  int condition_channels = 4;  // M, width of the condition encoder output
  /// Planes of the condition input. 1 is a plain binary box mask; C > 1 puts
  /// the box mask in the plane of the requested class.
  int condition_planes = 3;
  int depth = 4;
  int base_width = 32;

  void validate() const;
  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct CriticSpec {
  int layers = 3;  // stride-2 convolutions
  int base_width = 32;
  double leaky_slope = 0.2;

  void validate() const;
  friend bool operator==(const CriticSpec&, const CriticSpec&) = default;
};

struct DetectorSpec {
  int cells = 4;    // S
  int slots = 1;    // B
  int classes = 3;  // C
  int layers = 4;   // stride-2 convolutions
  int base_width = 16;

  det::GridLayout layout() const { return {cells, slots, classes}; }
  void validate() const;
  friend bool operator==(const DetectorSpec&, const DetectorSpec&) = default;
};

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
struct ConvLayer {
  Var<T> weight;
  Var<T> bias;
  ad::Conv2dParams params;

  Var<T> operator()(const Var<T>& x) const { return ad::add_channel_bias(ad::conv2d(x, weight, params), bias); }
};

/// Shared parameter bookkeeping for the three networks.
template <typename T>
class Network {
 public:
  const std::string& name() const { return name_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }
  std::vector<Var<T>> variables() const;
  Index parameter_count() const;

  /// Frozen networks record no gradient for their parameters.
  void set_trainable(bool on);
  bool trainable() const { return trainable_; }

  /// Appends this network's parameters (as float) to `bundle`.
  void export_to(ad::TensorBundle& bundle) const;
  /// Overwrites parameter values from `bundle`; throws DataError on missing
  /// tensors or shape mismatch.
  void import_from(const ad::TensorBundle& bundle);

 protected:
  Network(std::string name, std::uint64_t seed) : name_(std::move(name)), seed_(seed) {}
  ConvLayer<T> add_conv(int in, int out, int kernel, ad::Conv2dParams p);

 private:
  std::string name_;
  std::uint64_t seed_;
  std::vector<NamedParam<T>> params_;
  int layers_ = 0;
  bool trainable_ = true;
};

template <typename T>
class Generator : public Network<T> {
 public:
  Generator(const GeneratorSpec& spec, std::uint64_t seed);

  const GeneratorSpec& spec() const { return spec_; }

  /// noise [N,Z,H,W] and condition [N,P,H,W] -> images [N,3,H,W] in [-1,1].
  /// An undefined condition zeroes the encoder's output channels (Step 1).
  Var<T> forward(const Var<T>& noise, const Var<T>& condition = {}) const;

 private:
  GeneratorSpec spec_;
  ConvLayer<T> cond1_, cond2_;
  std::vector<ConvLayer<T>> down_;
  std::vector<ConvLayer<T>> up_;  // up_[k] produces the decoder input of level k
  ConvLayer<T> out_;
};

template <typename T>
struct CriticOutput {
  Var<T> score_map;  // [N,1,h,w]
  Var<T> scores;     // [N], patch-map means
};

template <typename T>
class Critic : public Network<T> {
 public:
  Critic(const CriticSpec& spec, std::uint64_t seed);

  const CriticSpec& spec() const { return spec_; }
  CriticOutput<T> forward(const Var<T>& images) const;

 private:
  CriticSpec spec_;
  std::vector<ConvLayer<T>> convs_;
  ConvLayer<T> head_;
};

template <typename T>
class Detector : public Network<T> {
 public:
  Detector(const DetectorSpec& spec, std::uint64_t seed);

  const DetectorSpec& spec() const { return spec_; }
  /// images [N,3,H,W] -> grid [N,S,S,B*5+C], slot values sigmoided, classes softmaxed.
  Var<T> forward(const Var<T>& images) const;

 private:
  DetectorSpec spec_;
  std::vector<ConvLayer<T>> convs_;
  ConvLayer<T> mixer_;
  ConvLayer<T> head_;
};

// ---------------------------------------------------------------------------
// Inputs

/// Condition planes for a batch of requests: [N, planes, side, side]. With a
/// single plane the mask is written there; otherwise into the class's plane.
template <typename T>
ad::Tensor<T> condition_batch(const std::vector<geom::Mask>& masks, const std::vector<int>& classes,
                              int planes);

// ---------------------------------------------------------------------------
// Spec (de)serialization inside GABX bundles

void export_spec(ad::TensorBundle& bundle, const GeneratorSpec& spec);
void export_spec(ad::TensorBundle& bundle, const CriticSpec& spec);
void export_spec(ad::TensorBundle& bundle, const DetectorSpec& spec);
GeneratorSpec import_generator_spec(const ad::TensorBundle& bundle);
CriticSpec import_critic_spec(const ad::TensorBundle& bundle);
DetectorSpec import_detector_spec(const ad::TensorBundle& bundle);

}  // namespace boxgan::nets
