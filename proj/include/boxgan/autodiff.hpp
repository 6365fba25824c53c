// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over dense tensors.
//
// A Var is a shared handle to a graph node. Operations record their inputs and
// a backward closure while gradient recording is enabled. Backward closures of
// most primitives are written in terms of other recorded primitives, so running
// the backward pass with `create_graph` records it as a new differentiable
// graph; that is what the gradient penalty needs. Primitives flagged as
// first-order only (sigmoid, tanh, softmax) compute their backward from raw
// values and refuse to participate in a recorded backward pass.

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "boxgan/tensor.hpp"

namespace boxgan::ad {

template <typename T>
class Var;

template <typename T>
using BackwardFn =
    std::function<std::vector<Var<T>>(const Var<T>& grad_out, const std::vector<bool>& needed)>;

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<Var<T>> inputs;
  BackwardFn<T> backward;
  const char* op = "leaf";
  bool requires_grad = false;
  bool twice_differentiable = true;
  std::shared_ptr<Node<T>> grad;  // accumulated by ad::backward on leaves
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  /// Only meaningful for leaves (optimizer updates, tests that perturb inputs).
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index size() const { return node_->value.size(); }
  T item() const { return node_->value.item(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->inputs.empty(); }
  const char* op() const { return node_->op; }

  bool has_grad() const { return node_->grad != nullptr; }
  Var grad() const { return Var(node_->grad); }
  void zero_grad() { node_->grad.reset(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// A fresh leaf holding the same value and no history.
  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// ---------------------------------------------------------------------------
// Recording mode

bool grad_enabled();

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

/// Builds the result node of an operation. Inputs and the backward closure are
/// kept only when recording is on and some input requires a gradient.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward,
               const char* name, bool twice_differentiable = true);

// ---------------------------------------------------------------------------
// Backward passes

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires a
/// gradient. Gradients from fan-out paths are summed.
template <typename T>
void backward(const Var<T>& root, bool create_graph = false);

/// Returns d(root)/d(input) for each input. Inputs not on a path from the
/// root receive zeros. With `create_graph` the backward pass is recorded and
/// the returned gradients are themselves differentiable.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& inputs,
                         bool create_graph = false);

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise operations accept equal shapes or a
// single-element operand on either side.

template <typename T> Var<T> constant(Tensor<T> value);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
/// Elementwise minimum; the gradient goes to `a` on ties.
template <typename T> Var<T> minimum(const Var<T>& a, const Var<T>& b);
/// Elementwise maximum; the gradient goes to `a` on ties.
template <typename T> Var<T> maximum(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> neg(const Var<T>& x);
template <typename T> Var<T> scale(const Var<T>& x, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& x, T offset);
template <typename T> Var<T> square(const Var<T>& x);
template <typename T> Var<T> sqrt(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
template <typename T> Var<T> log(const Var<T>& x);
template <typename T> Var<T> atan(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);
/// Derivative at exactly zero is the negative-side slope.
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
/// Softmax over the last axis.
template <typename T> Var<T> softmax(const Var<T>& x);

/// Sum of all elements, as a scalar.
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Broadcasts a single-element tensor to `shape`.
template <typename T> Var<T> expand(const Var<T>& x, const Shape& shape);
/// Sums every axis except the first: [N, ...] -> [N].
template <typename T> Var<T> sum_rows(const Var<T>& x);
/// Inverse broadcast of sum_rows: [N] -> `shape` with shape[0] == N.
template <typename T> Var<T> expand_rows(const Var<T>& x, const Shape& shape);
/// Sums every axis except axis 1: [N, C, ...] -> [C].
template <typename T> Var<T> channel_sum(const Var<T>& x);
/// Broadcasts a [C] vector over axis 1 of `shape`.
template <typename T> Var<T> channel_expand(const Var<T>& x, const Shape& shape);
/// x + b broadcast over axis 1.
template <typename T> Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias);

template <typename T> Var<T> reshape(const Var<T>& x, const Shape& shape);
template <typename T> Var<T> slice(const Var<T>& x, int axis, Index begin, Index end);
/// Places `x` at [begin, begin + x.extent) of a zero tensor with `extent` along `axis`.
template <typename T> Var<T> embed(const Var<T>& x, int axis, Index begin, Index extent);
template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, int axis);

/// 2-D matrix product of op(a) and op(b), where op transposes when the flag is set.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a = false,
              bool transpose_b = false);
/// x [N, in] times weight [out, in] transposed, plus bias [out].
template <typename T> Var<T> affine(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

struct Conv2dParams {
  Index stride = 1;
  Index padding = 0;
};

/// Cross-correlation of x [N, Cin, H, W] with weight [Cout, Cin, K, K].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, Conv2dParams p);
/// Adjoint of conv2d with respect to its input; `input_shape` is the shape of
/// the conv2d input being reconstructed.
template <typename T>
Var<T> conv2d_input_adjoint(const Var<T>& grad_out, const Var<T>& weight, const Shape& input_shape,
                            Conv2dParams p);
/// Adjoint of conv2d with respect to its weight.
template <typename T>
Var<T> conv2d_weight_adjoint(const Var<T>& x, const Var<T>& grad_out, const Shape& weight_shape,
                             Conv2dParams p);
/// Transposed convolution of x [N, Cout, h, w] with weight [Cout, Cin, K, K]
/// producing [N, Cin, (h-1)*stride - 2*padding + K, ...]; the exact adjoint of conv2d.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, Conv2dParams p);

/// Nearest-neighbour 2x upsampling of [N, C, H, W].
template <typename T> Var<T> upsample2x(const Var<T>& x);
/// Sum over 2x2 blocks; the adjoint of upsample2x.
template <typename T> Var<T> block_sum2x(const Var<T>& x);

/// [N, C, H, W] -> [N, H, W, C].
template <typename T> Var<T> to_channels_last(const Var<T>& x);
/// [N, H, W, C] -> [N, C, H, W].
template <typename T> Var<T> to_channels_first(const Var<T>& x);

// Operator sugar; used by formulas written once for plain scalars and Vars.
template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a) { return neg(a); }

}  // namespace boxgan::ad
