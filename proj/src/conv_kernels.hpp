// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "boxgan/autodiff.hpp"
#include "boxgan/tensor.hpp"

namespace boxgan::ad::kernels {

/// Output extent of a convolution along one axis, or throws if it is < 1.
Index conv_out_extent(Index in, Index kernel, Conv2dParams p);

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, Conv2dParams p);

template <typename T>
Tensor<T> conv2d_input_adjoint(const Tensor<T>& g, const Tensor<T>& w, const Shape& input_shape,
                               Conv2dParams p);

template <typename T>
Tensor<T> conv2d_weight_adjoint(const Tensor<T>& x, const Tensor<T>& g, const Shape& weight_shape,
                                Conv2dParams p);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b);

}  // namespace boxgan::ad::kernels
