// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Convolutions lowered to GEMM: strided kernels through im2col, stride-1
// kernels through per-tap shifted GEMMs. Work is split per sample with a fixed
// accumulation order, so results are bit-stable.

#include "conv_kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <string>
#include <vector>

namespace boxgan::ad::kernels {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  Index n, cin, h, w, cout, k, ho, wo;
  Conv2dParams p;

  Index patch() const { return cin * k * k; }
  Index out_pixels() const { return ho * wo; }
  bool is_pointwise() const { return k == 1 && p.stride == 1 && p.padding == 0; }
};

ConvGeometry make_geometry(const Shape& x, const Shape& w, Conv2dParams p) {
  if (x.size() != 4 || w.size() != 4) {
    throw ShapeError("conv2d expects 4-D input and weight, got " + shape_string(x) + " and " +
                     shape_string(w));
  }
  if (w[2] != w[3]) throw ShapeError("conv2d expects a square kernel, got " + shape_string(w));
  if (x[1] != w[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(x) + ", weight " +
                     shape_string(w));
  }
  if (p.stride < 1 || p.padding < 0) throw PreconditionError("conv2d needs stride >= 1, padding >= 0");
  ConvGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], 0, 0, p};
  g.ho = conv_out_extent(g.h, g.k, p);
  g.wo = conv_out_extent(g.w, g.k, p);
  return g;
}

// Output columns [lo, hi) whose input column ow * stride - pad + kj is in range.
std::pair<Index, Index> valid_columns(const ConvGeometry& g, Index kj) {
  const Index s = g.p.stride, offset = g.p.padding - kj;
  const Index lo = offset > 0 ? (offset + s - 1) / s : 0;
  const Index last = g.w - 1 + offset;  // largest ow * s allowed
  const Index hi = last < 0 ? 0 : std::min(g.wo, last / s + 1);
  return {std::min(lo, hi), hi};
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const Index s = g.p.stride;
  const Index pad = g.p.padding;
  for (Index c = 0; c < g.cin; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (Index ki = 0; ki < g.k; ++ki) {
      for (Index kj = 0; kj < g.k; ++kj) {
        T* row = col + ((c * g.k + ki) * g.k + kj) * g.out_pixels();
        const auto [lo, hi] = valid_columns(g, kj);
        for (Index oh = 0; oh < g.ho; ++oh) {
          const Index ih = oh * s - pad + ki;
          T* out = row + oh * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill(out, out + g.wo, T{0});
            continue;
          }
          const T* src = plane + ih * g.w - pad + kj;
          std::fill(out, out + lo, T{0});
          if (s == 1) {
            std::copy(src + lo, src + hi, out + lo);
          } else {
            for (Index ow = lo; ow < hi; ++ow) out[ow] = src[ow * s];
          }
          std::fill(out + hi, out + g.wo, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  const Index s = g.p.stride;
  const Index pad = g.p.padding;
  for (Index c = 0; c < g.cin; ++c) {
    T* plane = x + c * g.h * g.w;
    for (Index ki = 0; ki < g.k; ++ki) {
      for (Index kj = 0; kj < g.k; ++kj) {
        const T* row = col + ((c * g.k + ki) * g.k + kj) * g.out_pixels();
        const auto [lo, hi] = valid_columns(g, kj);
        for (Index oh = 0; oh < g.ho; ++oh) {
          const Index ih = oh * s - pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          T* dst = plane + ih * g.w - pad + kj;
          const T* in = row + oh * g.wo;
          if (s == 1) {
            for (Index ow = lo; ow < hi; ++ow) dst[ow] += in[ow];
          } else {
            for (Index ow = lo; ow < hi; ++ow) dst[ow * s] += in[ow];
          }
        }
      }
    }
  }
}

// Stride-1 convolutions skip im2col. With the input zero-padded into rows of
// width wp, kernel tap (ki, kj) reads one contiguous run starting at
// ki * wp + kj, so every tap is a single GEMM over an output grid wp columns
// wide. The k - 1 surplus columns per row wrap around; they are dropped from
// outputs and held at zero in gradients.
struct Shifted {
  Index wp;   // padded row width
  Index len;  // per-channel stride of the padded buffer
  Index run;  // ho * wp
};

Shifted shifted_layout(const ConvGeometry& g) {
  const Index hp = g.h + 2 * g.p.padding, wp = g.w + 2 * g.p.padding;
  return {wp, hp * wp + g.k - 1, g.ho * wp};
}

bool use_shifted(const ConvGeometry& g) { return g.p.stride == 1 && g.k > 1; }

template <typename T>
void pad_input(const T* x, const ConvGeometry& g, const Shifted& s, T* xp) {
  std::fill(xp, xp + g.cin * s.len, T{0});
  for (Index c = 0; c < g.cin; ++c) {
    for (Index r = 0; r < g.h; ++r) {
      const T* src = x + (c * g.h + r) * g.w;
      std::copy(src, src + g.w, xp + c * s.len + (r + g.p.padding) * s.wp + g.p.padding);
    }
  }
}

// Weights regrouped per tap: k*k contiguous [cout, cin] blocks.
template <typename T>
std::vector<T> tap_weights(const T* w, const ConvGeometry& g) {
  const Index taps = g.k * g.k;
  std::vector<T> out(static_cast<std::size_t>(taps * g.cout * g.cin));
  for (Index o = 0; o < g.cout; ++o) {
    for (Index c = 0; c < g.cin; ++c) {
      for (Index t = 0; t < taps; ++t) out[(t * g.cout + o) * g.cin + c] = w[(o * g.cin + c) * taps + t];
    }
  }
  return out;
}

template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void shifted_forward(const T* x, const std::vector<T>& wt, const ConvGeometry& g, T* y) {
  const Shifted s = shifted_layout(g);
  std::vector<T> xp(static_cast<std::size_t>(g.cin * s.len));
  std::vector<T> ext(static_cast<std::size_t>(g.cout * s.run));
  pad_input(x, g, s, xp.data());
  MapMatrix<T> acc(ext.data(), g.cout, s.run);
  for (Index ki = 0; ki < g.k; ++ki) {
    for (Index kj = 0; kj < g.k; ++kj) {
      const Index t = ki * g.k + kj;
      ConstMapMatrix<T> wk(wt.data() + t * g.cout * g.cin, g.cout, g.cin);
      ConstStridedMap<T> xs(xp.data() + ki * s.wp + kj, g.cin, s.run, Eigen::OuterStride<>(s.len));
      if (t == 0) {
        acc.noalias() = wk * xs;
      } else {
        acc.noalias() += wk * xs;
      }
    }
  }
  for (Index o = 0; o < g.cout; ++o) {
    for (Index r = 0; r < g.ho; ++r) {
      const T* src = ext.data() + o * s.run + r * s.wp;
      std::copy(src, src + g.wo, y + (o * g.ho + r) * g.wo);
    }
  }
}

// Gradient of one sample laid out on the wp-wide grid, surplus columns zero.
template <typename T>
std::vector<T> widen_grad(const T* grad, const ConvGeometry& g, const Shifted& s) {
  std::vector<T> ext(static_cast<std::size_t>(g.cout * s.run), T{0});
  for (Index o = 0; o < g.cout; ++o) {
    for (Index r = 0; r < g.ho; ++r) {
      const T* src = grad + (o * g.ho + r) * g.wo;
      std::copy(src, src + g.wo, ext.data() + o * s.run + r * s.wp);
    }
  }
  return ext;
}

template <typename T>
void shifted_input_adjoint(const T* grad, const std::vector<T>& wt, const ConvGeometry& g, T* x) {
  const Shifted s = shifted_layout(g);
  const std::vector<T> ext = widen_grad(grad, g, s);
  std::vector<T> xp(static_cast<std::size_t>(g.cin * s.len), T{0});
  ConstMapMatrix<T> gn(ext.data(), g.cout, s.run);
  for (Index ki = 0; ki < g.k; ++ki) {
    for (Index kj = 0; kj < g.k; ++kj) {
      const Index t = ki * g.k + kj;
      ConstMapMatrix<T> wk(wt.data() + t * g.cout * g.cin, g.cout, g.cin);
      StridedMap<T> xs(xp.data() + ki * s.wp + kj, g.cin, s.run, Eigen::OuterStride<>(s.len));
      xs.noalias() += wk.transpose() * gn;
    }
  }
  for (Index c = 0; c < g.cin; ++c) {
    for (Index r = 0; r < g.h; ++r) {
      const T* src = xp.data() + c * s.len + (r + g.p.padding) * s.wp + g.p.padding;
      std::copy(src, src + g.w, x + (c * g.h + r) * g.w);
    }
  }
}

template <typename T>
void shifted_weight_adjoint(const T* x, const T* grad, const ConvGeometry& g, std::vector<T>& dwt) {
  const Shifted s = shifted_layout(g);
  const std::vector<T> ext = widen_grad(grad, g, s);
  std::vector<T> xp(static_cast<std::size_t>(g.cin * s.len));
  pad_input(x, g, s, xp.data());
  ConstMapMatrix<T> gn(ext.data(), g.cout, s.run);
  for (Index ki = 0; ki < g.k; ++ki) {
    for (Index kj = 0; kj < g.k; ++kj) {
      const Index t = ki * g.k + kj;
      MapMatrix<T> dwk(dwt.data() + t * g.cout * g.cin, g.cout, g.cin);
      ConstStridedMap<T> xs(xp.data() + ki * s.wp + kj, g.cin, s.run, Eigen::OuterStride<>(s.len));
      dwk.noalias() += gn * xs.transpose();
    }
  }
}

}  // namespace

Index conv_out_extent(Index in, Index kernel, Conv2dParams p) {
  const Index span = in + 2 * p.padding - kernel;
  if (span < 0) {
    throw ShapeError("convolution kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in + 2 * p.padding));
  }
  return span / p.stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, Conv2dParams p) {
  const ConvGeometry g = make_geometry(x.shape(), w.shape(), p);
  Tensor<T> y(Shape{g.n, g.cout, g.ho, g.wo});
  if (use_shifted(g)) {
    const auto wt = tap_weights(w.ptr(), g);
    for (Index n = 0; n < g.n; ++n) {
      shifted_forward(x.ptr() + n * g.cin * g.h * g.w, wt, g, y.ptr() + n * g.cout * g.out_pixels());
    }
    return y;
  }
  ConstMapMatrix<T> weights(w.ptr(), g.cout, g.patch());
  std::vector<T> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.patch() * g.out_pixels()));
  for (Index n = 0; n < g.n; ++n) {
    const T* xn = x.ptr() + n * g.cin * g.h * g.w;
    const T* cols = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, col.data());
      cols = col.data();
    }
    MapMatrix<T> out(y.ptr() + n * g.cout * g.out_pixels(), g.cout, g.out_pixels());
    out.noalias() = weights * ConstMapMatrix<T>(cols, g.patch(), g.out_pixels());
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_input_adjoint(const Tensor<T>& grad, const Tensor<T>& w, const Shape& input_shape,
                               Conv2dParams p) {
  const ConvGeometry g = make_geometry(input_shape, w.shape(), p);
  if (grad.shape() != Shape{g.n, g.cout, g.ho, g.wo}) {
    throw ShapeError("conv2d input adjoint: gradient " + shape_string(grad.shape()) +
                     " does not match output of " + shape_string(input_shape));
  }
  Tensor<T> x(input_shape);
  if (use_shifted(g)) {
    const auto wt = tap_weights(w.ptr(), g);
    for (Index n = 0; n < g.n; ++n) {
      shifted_input_adjoint(grad.ptr() + n * g.cout * g.out_pixels(), wt, g, x.ptr() + n * g.cin * g.h * g.w);
    }
    return x;
  }
  ConstMapMatrix<T> weights(w.ptr(), g.cout, g.patch());
  std::vector<T> col(static_cast<std::size_t>(g.patch() * g.out_pixels()));
  for (Index n = 0; n < g.n; ++n) {
    ConstMapMatrix<T> gn(grad.ptr() + n * g.cout * g.out_pixels(), g.cout, g.out_pixels());
    T* xn = x.ptr() + n * g.cin * g.h * g.w;
    if (g.is_pointwise()) {
      MapMatrix<T>(xn, g.patch(), g.out_pixels()).noalias() = weights.transpose() * gn;
      continue;
    }
    MapMatrix<T>(col.data(), g.patch(), g.out_pixels()).noalias() = weights.transpose() * gn;
    col2im(col.data(), g, xn);
  }
  return x;
}

template <typename T>
Tensor<T> conv2d_weight_adjoint(const Tensor<T>& x, const Tensor<T>& grad, const Shape& weight_shape,
                                Conv2dParams p) {
  const ConvGeometry g = make_geometry(x.shape(), weight_shape, p);
  if (grad.shape() != Shape{g.n, g.cout, g.ho, g.wo}) {
    throw ShapeError("conv2d weight adjoint: gradient " + shape_string(grad.shape()) +
                     " does not match output of " + shape_string(x.shape()));
  }
  Tensor<T> w(weight_shape);
  if (use_shifted(g)) {
    const Index taps = g.k * g.k;
    std::vector<T> dwt(static_cast<std::size_t>(taps * g.cout * g.cin), T{0});
    for (Index n = 0; n < g.n; ++n) {
      shifted_weight_adjoint(x.ptr() + n * g.cin * g.h * g.w, grad.ptr() + n * g.cout * g.out_pixels(), g, dwt);
    }
    for (Index o = 0; o < g.cout; ++o) {
      for (Index c = 0; c < g.cin; ++c) {
        for (Index t = 0; t < taps; ++t) w[(o * g.cin + c) * taps + t] = dwt[(t * g.cout + o) * g.cin + c];
      }
    }
    return w;
  }
  MapMatrix<T> dw(w.ptr(), g.cout, g.patch());
  std::vector<T> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.patch() * g.out_pixels()));
  for (Index n = 0; n < g.n; ++n) {
    const T* xn = x.ptr() + n * g.cin * g.h * g.w;
    const T* cols = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, col.data());
      cols = col.data();
    }
    ConstMapMatrix<T> gn(grad.ptr() + n * g.cout * g.out_pixels(), g.cout, g.out_pixels());
    dw.noalias() += gn * ConstMapMatrix<T>(cols, g.patch(), g.out_pixels()).transpose();
  }
  return w;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects 2-D operands, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  ConstMapMatrix<T> ma(a.ptr(), a.dim(0), a.dim(1));
  ConstMapMatrix<T> mb(b.ptr(), b.dim(0), b.dim(1));
  const Index rows = transpose_a ? a.dim(1) : a.dim(0);
  const Index inner_a = transpose_a ? a.dim(0) : a.dim(1);
  const Index inner_b = transpose_b ? b.dim(1) : b.dim(0);
  const Index cols = transpose_b ? b.dim(0) : b.dim(1);
  if (inner_a != inner_b) {
    throw ShapeError("matmul inner extents differ: " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Tensor<T> c(Shape{rows, cols});
  MapMatrix<T> mc(c.ptr(), rows, cols);
  if (!transpose_a && !transpose_b) mc.noalias() = ma * mb;
  if (!transpose_a && transpose_b) mc.noalias() = ma * mb.transpose();
  if (transpose_a && !transpose_b) mc.noalias() = ma.transpose() * mb;
  if (transpose_a && transpose_b) mc.noalias() = ma.transpose() * mb.transpose();
  return c;
}

#define BOXGAN_INSTANTIATE(T)                                                                    \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, Conv2dParams);           \
  template Tensor<T> conv2d_input_adjoint(const Tensor<T>&, const Tensor<T>&, const Shape&,      \
                                          Conv2dParams);                                         \
  template Tensor<T> conv2d_weight_adjoint(const Tensor<T>&, const Tensor<T>&, const Shape&,     \
                                           Conv2dParams);                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);

BOXGAN_INSTANTIATE(float)
BOXGAN_INSTANTIATE(double)
#undef BOXGAN_INSTANTIATE

}  // namespace boxgan::ad::kernels
