// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/netzoo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "boxgan/errors.hpp"

namespace boxgan::nets {
namespace {

using ad::Shape;
using ad::Tensor;

void require(bool ok, const std::string& what) {
  if (!ok) throw PreconditionError(what);
}

int width_at(int base, int level, int cap_factor) { return base * std::min(1 << level, cap_factor); }

const Tensor<float>& spec_tensor(const ad::TensorBundle& bundle, const std::string& key, Index fields) {
  const Tensor<float>* t = ad::find_tensor(bundle, "spec/" + key);
  if (!t || t->size() != fields) throw DataError("checkpoint lacks a valid spec/" + key + " tensor");
  return *t;
}

int as_int(float v) { return static_cast<int>(std::lround(v)); }

}  // namespace

void GeneratorSpec::validate() const {
  require(depth >= 1, "generator depth must be >= 1");
  require(image_side >= 1 && image_side % (1 << depth) == 0,
          "generator image side " + std::to_string(image_side) + " must be divisible by 2^depth");
  require(noise_channels >= 1 && condition_channels >= 1 && condition_planes >= 1,
          "generator noise/condition channels must be >= 1");
  require(base_width >= 1, "generator base width must be >= 1");
}

void CriticSpec::validate() const {
  require(layers >= 1, "critic needs at least one stride-2 layer");
  require(base_width >= 1, "critic base width must be >= 1");
  require(leaky_slope >= 0.0, "critic leaky slope must be >= 0");
}

void DetectorSpec::validate() const {
  layout().validate();
  require(layers >= 1, "detector needs at least one stride-2 layer");
  require(base_width >= 1, "detector base width must be >= 1");
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
std::vector<Var<T>> Network<T>::variables() const {
  std::vector<Var<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

template <typename T>
Index Network<T>::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

template <typename T>
void Network<T>::set_trainable(bool on) {
  trainable_ = on;
  for (auto& p : params_) {
    p.var.set_requires_grad(on);
    p.var.zero_grad();
  }
}

template <typename T>
void Network<T>::export_to(ad::TensorBundle& bundle) const {
  for (const auto& p : params_) bundle.push_back({p.name, p.var.value().template cast<float>()});
}

template <typename T>
void Network<T>::import_from(const ad::TensorBundle& bundle) {
  for (auto& p : params_) {
    const Tensor<float>* t = ad::find_tensor(bundle, p.name);
    if (!t) throw DataError("checkpoint lacks tensor " + p.name);
    if (t->shape() != p.var.shape()) {
      throw DataError("checkpoint tensor " + p.name + " has shape " + ad::shape_string(t->shape()) +
                      ", network expects " + ad::shape_string(p.var.shape()));
    }
    p.var.mutable_value() = t->template cast<T>();
  }
}

template <typename T>
ConvLayer<T> Network<T>::add_conv(int in, int out, int kernel, ad::Conv2dParams p) {
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases. Each
  // layer draws from its own stream so specs can grow without reshuffling.
  std::mt19937_64 rng(seed_ * 1000003u + static_cast<std::uint64_t>(layers_));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in) * kernel * kernel);
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor<T> w(Shape{out, in, kernel, kernel});
  for (auto& v : w.data()) v = static_cast<T>(u(rng));
  Tensor<T> b(Shape{out});
  for (auto& v : b.data()) v = static_cast<T>(u(rng));

  const std::string prefix = name_ + "/" + std::to_string(layers_++) + "/";
  ConvLayer<T> layer{Var<T>(std::move(w), true), Var<T>(std::move(b), true), p};
  params_.push_back({prefix + "weight", layer.weight});
  params_.push_back({prefix + "bias", layer.bias});
  return layer;
}

// ---------------------------------------------------------------------------
// Generator

template <typename T>
Generator<T>::Generator(const GeneratorSpec& spec, std::uint64_t seed)
    : Network<T>("generator", seed), spec_(spec) {
  spec_.validate();
  const ad::Conv2dParams same3{1, 1}, down4{2, 1};
  const int m = spec_.condition_channels;
  cond1_ = this->add_conv(spec_.condition_planes, m, 3, same3);
  cond2_ = this->add_conv(m, m, 3, same3);

  // channels[k] = channels of encoder output e_k; e_0 is the network input.
  std::vector<int> channels{spec_.noise_channels + m};
  for (int k = 1; k <= spec_.depth; ++k) {
    const int w = width_at(spec_.base_width, k - 1, 8);
    down_.push_back(this->add_conv(channels.back(), w, 4, down4));
    channels.push_back(w);
  }
  up_.resize(static_cast<std::size_t>(spec_.depth) + 1);
  int current = channels[static_cast<std::size_t>(spec_.depth)];
  for (int k = spec_.depth; k >= 1; --k) {
    const int w = k - 1 >= 1 ? channels[static_cast<std::size_t>(k - 1)] : spec_.base_width;
    up_[static_cast<std::size_t>(k)] = this->add_conv(current, w, 3, same3);
    current = w + channels[static_cast<std::size_t>(k - 1)];
  }
  out_ = this->add_conv(current, 3, 3, same3);
}

template <typename T>
Var<T> Generator<T>::forward(const Var<T>& noise, const Var<T>& condition) const {
  const Index side = spec_.image_side;
  if (noise.shape().size() != 4 || noise.shape()[1] != spec_.noise_channels || noise.shape()[2] != side ||
      noise.shape()[3] != side) {
    throw ShapeError("generator noise must be [N," + std::to_string(spec_.noise_channels) + "," +
                     std::to_string(side) + "," + std::to_string(side) + "], got " +
                     ad::shape_string(noise.shape()));
  }
  const Index n = noise.shape()[0];
  Var<T> features;
  if (condition.defined()) {
    const Shape want{n, spec_.condition_planes, side, side};
    if (condition.shape() != want) {
      throw ShapeError("generator condition must be " + ad::shape_string(want) + ", got " +
                       ad::shape_string(condition.shape()));
    }
    features = ad::leaky_relu(cond2_(ad::leaky_relu(cond1_(condition), T(0.2))), T(0.2));
  } else {
    features = ad::constant(Tensor<T>(Shape{n, spec_.condition_channels, side, side}));
  }

  std::vector<Var<T>> skips{ad::concat(std::vector<Var<T>>{noise, features}, 1)};
  for (const auto& conv : down_) skips.push_back(ad::leaky_relu(conv(skips.back()), T(0.2)));

  Var<T> d = skips.back();
  for (int k = spec_.depth; k >= 1; --k) {
    const Var<T> u = ad::relu(up_[static_cast<std::size_t>(k)](ad::upsample2x(d)));
    const Var<T>& skip = skips[static_cast<std::size_t>(k - 1)];
    if (u.shape()[2] != skip.shape()[2] || u.shape()[3] != skip.shape()[3]) {
      throw ShapeError("U-Net level " + std::to_string(k - 1) + " skip mismatch: decoder " +
                       ad::shape_string(u.shape()) + " vs encoder " + ad::shape_string(skip.shape()));
    }
    d = ad::concat(std::vector<Var<T>>{u, skip}, 1);
  }
  return ad::tanh(out_(d));
}

// ---------------------------------------------------------------------------
// Critic

template <typename T>
Critic<T>::Critic(const CriticSpec& spec, std::uint64_t seed) : Network<T>("critic", seed), spec_(spec) {
  spec_.validate();
  int in = 3;
  for (int i = 0; i < spec_.layers; ++i) {
    const int w = width_at(spec_.base_width, i, 8);
    convs_.push_back(this->add_conv(in, w, 4, ad::Conv2dParams{2, 1}));
    in = w;
  }
  head_ = this->add_conv(in, 1, 3, ad::Conv2dParams{1, 1});
}

template <typename T>
CriticOutput<T> Critic<T>::forward(const Var<T>& images) const {
  const Shape& s = images.shape();
  const Index factor = Index{1} << spec_.layers;
  if (s.size() != 4 || s[1] != 3 || s[2] < factor || s[2] % factor != 0 || s[3] % factor != 0 || s[3] < factor) {
    throw ShapeError("critic input must be [N,3,H,W] with H, W divisible by " + std::to_string(factor) +
                     ", got " + ad::shape_string(s));
  }
  Var<T> h = images;
  for (const auto& conv : convs_) h = ad::leaky_relu(conv(h), static_cast<T>(spec_.leaky_slope));
  Var<T> map = head_(h);
  const T patches = static_cast<T>(map.shape()[2] * map.shape()[3]);
  Var<T> scores = ad::scale(ad::sum_rows(map), T(1) / patches);
  return {std::move(map), std::move(scores)};
}

// ---------------------------------------------------------------------------
// Detector

template <typename T>
Detector<T>::Detector(const DetectorSpec& spec, std::uint64_t seed)
    : Network<T>("detector", seed), spec_(spec) {
  spec_.validate();
  int in = 3;
  for (int i = 0; i < spec_.layers; ++i) {
    const int w = width_at(spec_.base_width, i, 4);
    convs_.push_back(this->add_conv(in, w, 4, ad::Conv2dParams{2, 1}));
    in = w;
  }
  mixer_ = this->add_conv(in, in, 3, ad::Conv2dParams{1, 1});
  head_ = this->add_conv(in, spec_.layout().depth(), 1, ad::Conv2dParams{});
}

template <typename T>
Var<T> Detector<T>::forward(const Var<T>& images) const {
  const Shape& s = images.shape();
  const Index side = Index{spec_.cells} << spec_.layers;
  if (s.size() != 4 || s[1] != 3 || s[2] != side || s[3] != side) {
    throw ShapeError("detector input must be [N,3," + std::to_string(side) + "," + std::to_string(side) +
                     "], got " + ad::shape_string(s));
  }
  Var<T> h = images;
  for (const auto& conv : convs_) h = ad::leaky_relu(conv(h), T(0.1));
  h = ad::leaky_relu(mixer_(h), T(0.1));
  const Var<T> raw = ad::to_channels_last(head_(h));
  const det::GridLayout layout = spec_.layout();
  const Index boxes = layout.class_offset();
  const Var<T> slots = ad::sigmoid(ad::slice(raw, 3, 0, boxes));
  const Var<T> classes = ad::softmax(ad::slice(raw, 3, boxes, layout.depth()));
  return ad::concat(std::vector<Var<T>>{slots, classes}, 3);
}

// ---------------------------------------------------------------------------
// Inputs and specs

template <typename T>
Tensor<T> condition_batch(const std::vector<geom::Mask>& masks, const std::vector<int>& classes, int planes) {
  if (masks.size() != classes.size()) throw ShapeError("condition_batch: masks and classes differ in count");
  if (masks.empty()) throw PreconditionError("condition_batch: empty batch");
  const int w = masks.front().width(), h = masks.front().height();
  Tensor<T> out(Shape{static_cast<Index>(masks.size()), planes, h, w});
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& m = masks[i];
    if (m.width() != w || m.height() != h) throw ShapeError("condition_batch: masks differ in size");
    const int plane = planes == 1 ? 0 : classes[i];
    if (plane < 0 || plane >= planes) {
      throw PreconditionError("condition_batch: class " + std::to_string(classes[i]) + " outside " +
                              std::to_string(planes) + " planes");
    }
    T* dst = out.ptr() + (static_cast<Index>(i) * planes + plane) * h * w;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) dst[r * w + c] = static_cast<T>(m.at(r, c));
    }
  }
  return out;
}

void export_spec(ad::TensorBundle& bundle, const GeneratorSpec& s) {
  bundle.push_back({"spec/generator", Tensor<float>(Shape{6}, {float(s.image_side), float(s.noise_channels),
                                                              float(s.condition_channels),
                                                              float(s.condition_planes), float(s.depth),
                                                              float(s.base_width)})});
}

void export_spec(ad::TensorBundle& bundle, const CriticSpec& s) {
  bundle.push_back({"spec/critic", Tensor<float>(Shape{3}, {float(s.layers), float(s.base_width),
                                                            float(s.leaky_slope)})});
}

void export_spec(ad::TensorBundle& bundle, const DetectorSpec& s) {
  bundle.push_back({"spec/detector", Tensor<float>(Shape{5}, {float(s.cells), float(s.slots), float(s.classes),
                                                              float(s.layers), float(s.base_width)})});
}

GeneratorSpec import_generator_spec(const ad::TensorBundle& bundle) {
  const auto& t = spec_tensor(bundle, "generator", 6);
  GeneratorSpec s{as_int(t[0]), as_int(t[1]), as_int(t[2]), as_int(t[3]), as_int(t[4]), as_int(t[5])};
  s.validate();
  return s;
}

CriticSpec import_critic_spec(const ad::TensorBundle& bundle) {
  const auto& t = spec_tensor(bundle, "critic", 3);
  // The slope is stored as float; snap back to the 6-decimal value it came from.
  CriticSpec s{as_int(t[0]), as_int(t[1]), std::round(static_cast<double>(t[2]) * 1e6) / 1e6};
  s.validate();
  return s;
}

DetectorSpec import_detector_spec(const ad::TensorBundle& bundle) {
  const auto& t = spec_tensor(bundle, "detector", 5);
  DetectorSpec s{as_int(t[0]), as_int(t[1]), as_int(t[2]), as_int(t[3]), as_int(t[4])};
  s.validate();
  return s;
}

#define BOXGAN_INSTANTIATE(T)                                                                          \
  template class Network<T>;                                                                           \
  template class Generator<T>;                                                                         \
  template class Critic<T>;                                                                            \
  template class Detector<T>;                                                                          \
  template Tensor<T> condition_batch<T>(const std::vector<geom::Mask>&, const std::vector<int>&, int);

BOXGAN_INSTANTIATE(float)
BOXGAN_INSTANTIATE(double)

}  // namespace boxgan::nets
