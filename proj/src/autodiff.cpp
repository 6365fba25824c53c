// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/autodiff.hpp"

#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "conv_kernels.hpp"

namespace boxgan::ad {
namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
bool any_requires_grad(const std::vector<Var<T>>& inputs) {
  for (const auto& v : inputs) {
    if (v.requires_grad()) return true;
  }
  return false;
}

template <typename T>
Var<T> leaf(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

template <typename T, typename F>
Tensor<T> map_values(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  const T* in = x.ptr();
  T* o = out.ptr();
  for (Index i = 0; i < x.size(); ++i) o[i] = f(in[i]);
  return out;
}

// Binary elementwise kernel with single-element broadcasting on either side.
template <typename T, typename F>
Tensor<T> zip_values(const Tensor<T>& a, const Tensor<T>& b, const char* op, F f) {
  if (a.shape() == b.shape() || (a.size() == b.size() && a.size() == 1)) {
    Tensor<T> out(a.shape());
    for (Index i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (b.size() == 1) {
    const T bv = b[0];
    Tensor<T> out(a.shape());
    for (Index i = 0; i < a.size(); ++i) out[i] = f(a[i], bv);
    return out;
  }
  if (a.size() == 1) {
    const T av = a[0];
    Tensor<T> out(b.shape());
    for (Index i = 0; i < b.size(); ++i) out[i] = f(av, b[i]);
    return out;
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

// Sums a broadcast gradient back down to the operand's shape.
template <typename T>
Var<T> reduce_to(const Var<T>& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  if (element_count(shape) == 1) return reshape(sum(g), shape);
  return reshape(g, shape);
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis out of range for rank " + std::to_string(rank));
  }
  return axis;
}

struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= s[static_cast<std::size_t>(i)];
  a.extent = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
  }
}

template <typename T>
Var<T> first_order_result(Tensor<T> value) {
  return leaf(std::move(value));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward,
               const char* name, bool twice_differentiable) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = name;
  if (g_grad_enabled && any_requires_grad(inputs)) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->requires_grad = true;
    node->twice_differentiable = twice_differentiable;
  }
  return Var<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// Backward engine

namespace {

// Post-order over nodes that require gradients: inputs precede consumers.
template <typename T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  enum class Mark { open, done };
  std::unordered_map<Node<T>*, Mark> marks;
  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  marks[root] = Mark::open;
  while (!stack.empty()) {
    Node<T>* n = stack.back().first;
    const std::size_t i = stack.back().second;
    if (i < n->inputs.size()) {
      ++stack.back().second;
      Node<T>* child = n->inputs[i].node();
      if (!child->requires_grad) continue;
      auto it = marks.find(child);
      if (it == marks.end()) {
        marks[child] = Mark::open;
        stack.emplace_back(child, 0);
      } else if (it->second == Mark::open) {
        throw Error("cycle detected in differentiation graph at op '" + std::string(child->op) + "'");
      }
    } else {
      marks[n] = Mark::done;
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void accumulate(std::unordered_map<Node<T>*, Var<T>>& grads, Node<T>* key, const Var<T>& g) {
  auto it = grads.find(key);
  if (it == grads.end()) {
    grads.emplace(key, g);
  } else {
    it->second = add(it->second, g);
  }
}

template <typename T>
std::unordered_map<Node<T>*, Var<T>> run_backward(const Var<T>& root,
                                                  const std::unordered_set<Node<T>*>* targets,
                                                  bool create_graph) {
  if (!root.defined() || root.size() != 1) {
    throw ShapeError("backward root must be a scalar, got " +
                     (root.defined() ? shape_string(root.shape()) : std::string("undefined")));
  }
  std::unordered_map<Node<T>*, Var<T>> grads;
  if (!root.requires_grad()) return grads;

  const auto order = topological_order(root.node());
  std::unordered_set<Node<T>*> needed;
  for (Node<T>* n : order) {
    bool need = targets ? targets->count(n) > 0 : n->inputs.empty();
    for (const auto& in : n->inputs) {
      if (needed.count(in.node())) need = true;
    }
    if (need) needed.insert(n);
  }

  GradModeGuard mode(create_graph);
  grads.emplace(root.node(), Var<T>(Tensor<T>(root.shape(), T{1})));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->inputs.empty() || !needed.count(n)) continue;
    auto found = grads.find(n);
    if (found == grads.end()) continue;
    if (create_graph && !n->twice_differentiable) {
      throw NotTwiceDifferentiableError("operation '" + std::string(n->op) +
                                        "' has no differentiable backward pass");
    }
    const Var<T> grad_out = found->second;
    const bool keep = targets && targets->count(n);
    if (!keep) grads.erase(found);

    std::vector<bool> need(n->inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      need[i] = n->inputs[i].requires_grad() && needed.count(n->inputs[i].node()) > 0;
      any = any || need[i];
    }
    if (!any) continue;
    const auto input_grads = n->backward(grad_out, need);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (need[i] && input_grads[i].defined()) accumulate(grads, n->inputs[i].node(), input_grads[i]);
    }
  }
  return grads;
}

}  // namespace

template <typename T>
void backward(const Var<T>& root, bool create_graph) {
  auto grads = run_backward<T>(root, nullptr, create_graph);
  GradModeGuard mode(create_graph);
  for (auto& [node, g] : grads) {
    if (!node->inputs.empty()) continue;
    if (node->grad) {
      node->grad = add(Var<T>(node->grad), g).node_ptr();
    } else {
      node->grad = g.node_ptr();
    }
  }
}

template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& inputs, bool create_graph) {
  std::unordered_set<Node<T>*> targets;
  for (const auto& in : inputs) targets.insert(in.node());
  auto grads = run_backward<T>(root, &targets, create_graph);
  std::vector<Var<T>> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto it = grads.find(in.node());
    out.push_back(it != grads.end() ? it->second : leaf(Tensor<T>(in.shape())));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise primitives

template <typename T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value));
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto value = zip_values(a.value(), b.value(), "add", [](T x, T y) { return x + y; });
  const Shape sa = a.shape(), sb = b.shape();
  return make_op<T>(
      std::move(value), {a, b},
      [sa, sb](const Var<T>& g, const std::vector<bool>& need) {
        return std::vector<Var<T>>{need[0] ? reduce_to(g, sa) : Var<T>(),
                                   need[1] ? reduce_to(g, sb) : Var<T>()};
      },
      "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto value = zip_values(a.value(), b.value(), "sub", [](T x, T y) { return x - y; });
  const Shape sa = a.shape(), sb = b.shape();
  return make_op<T>(
      std::move(value), {a, b},
      [sa, sb](const Var<T>& g, const std::vector<bool>& need) {
        return std::vector<Var<T>>{need[0] ? reduce_to(g, sa) : Var<T>(),
                                   need[1] ? reduce_to(neg(g), sb) : Var<T>()};
      },
      "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto value = zip_values(a.value(), b.value(), "mul", [](T x, T y) { return x * y; });
  return make_op<T>(
      std::move(value), {a, b},
      [a, b](const Var<T>& g, const std::vector<bool>& need) {
        return std::vector<Var<T>>{need[0] ? reduce_to(mul(g, b), a.shape()) : Var<T>(),
                                   need[1] ? reduce_to(mul(g, a), b.shape()) : Var<T>()};
      },
      "mul");
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  auto value = zip_values(a.value(), b.value(), "div", [](T x, T y) { return x / y; });
  return make_op<T>(
      std::move(value), {a, b},
      [a, b](const Var<T>& g, const std::vector<bool>& need) {
        Var<T> ga, gb;
        if (need[0]) ga = reduce_to(div(g, b), a.shape());
        if (need[1]) gb = reduce_to(neg(div(mul(g, a), square(b))), b.shape());
        return std::vector<Var<T>>{ga, gb};
      },
      "div");
}

namespace {

// Selection mask for min/max: 1 where `a` provides the result (ties included).
template <typename T, typename Pick>
Var<T> select_op(const Var<T>& a, const Var<T>& b, const char* name, Pick a_wins) {
  auto value = zip_values(a.value(), b.value(), name, [&](T x, T y) { return a_wins(x, y) ? x : y; });
  auto mask = zip_values(a.value(), b.value(), name, [&](T x, T y) { return a_wins(x, y) ? T{1} : T{0}; });
  return make_op<T>(
      std::move(value), {a, b},
      [a, b, mask = std::move(mask)](const Var<T>& g, const std::vector<bool>& need) {
        Var<T> ga, gb;
        if (need[0]) ga = reduce_to(mul(g, leaf(mask)), a.shape());
        if (need[1]) {
          gb = reduce_to(mul(g, leaf(map_values(mask, [](T m) { return T{1} - m; }))), b.shape());
        }
        return std::vector<Var<T>>{ga, gb};
      },
      name);
}

}  // namespace

template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  return select_op(a, b, "minimum", [](T x, T y) { return x <= y; });
}

template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
  return select_op(a, b, "maximum", [](T x, T y) { return x >= y; });
}

template <typename T>
Var<T> neg(const Var<T>& x) {
  return scale(x, T{-1});
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  return make_op<T>(
      map_values(x.value(), [factor](T v) { return v * factor; }), {x},
      [factor](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{scale(g, factor)};
      },
      "scale");
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T offset) {
  return make_op<T>(
      map_values(x.value(), [offset](T v) { return v + offset; }), {x},
      [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g}; },
      "add_scalar");
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return make_op<T>(
      map_values(x.value(), [](T v) { return v * v; }), {x},
      [x](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{mul(g, scale(x, T{2}))};
      },
      "square");
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  return make_op<T>(
      map_values(x.value(), [](T v) { return std::sqrt(v); }), {x},
      [x](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{div(scale(g, T{0.5}), sqrt(x))};
      },
      "sqrt");
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return make_op<T>(
      map_values(x.value(), [](T v) { return std::exp(v); }), {x},
      [x](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{mul(g, exp(x))};
      },
      "exp");
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return make_op<T>(
      map_values(x.value(), [](T v) { return std::log(v); }), {x},
      [x](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{div(g, x)}; },
      "log");
}

template <typename T>
Var<T> atan(const Var<T>& x) {
  return make_op<T>(
      map_values(x.value(), [](T v) { return std::atan(v); }), {x},
      [x](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{div(g, add_scalar(square(x), T{1}))};
      },
      "atan");
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T{0});
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  auto value = map_values(x.value(), [slope](T v) { return v > T{0} ? v : v * slope; });
  return make_op<T>(
      std::move(value), {x},
      [x, slope](const Var<T>& g, const std::vector<bool>&) {
        auto mask = map_values(x.value(), [slope](T v) { return v > T{0} ? T{1} : slope; });
        return std::vector<Var<T>>{mul(g, leaf(std::move(mask)))};
      },
      "leaky_relu");
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto y = map_values(x.value(), [](T v) {
    // Branches keep exp() from overflowing for large |v|.
    if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
    const T e = std::exp(v);
    return e / (T{1} + e);
  });
  Tensor<T> saved = y;
  return make_op<T>(
      std::move(y), {x},
      [saved = std::move(saved)](const Var<T>& g, const std::vector<bool>&) {
        Tensor<T> out(saved.shape());
        for (Index i = 0; i < out.size(); ++i) out[i] = g.value()[i] * saved[i] * (T{1} - saved[i]);
        return std::vector<Var<T>>{first_order_result(std::move(out))};
      },
      "sigmoid", false);
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  auto y = map_values(x.value(), [](T v) { return std::tanh(v); });
  Tensor<T> saved = y;
  return make_op<T>(
      std::move(y), {x},
      [saved = std::move(saved)](const Var<T>& g, const std::vector<bool>&) {
        Tensor<T> out(saved.shape());
        for (Index i = 0; i < out.size(); ++i) out[i] = g.value()[i] * (T{1} - saved[i] * saved[i]);
        return std::vector<Var<T>>{first_order_result(std::move(out))};
      },
      "tanh", false);
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  if (x.value().rank() < 1) throw ShapeError("softmax needs rank >= 1");
  const Index last = x.shape().back();
  const Index rows = last ? x.size() / last : 0;
  Tensor<T> y(x.shape());
  for (Index r = 0; r < rows; ++r) {
    const T* in = x.value().ptr() + r * last;
    T* out = y.ptr() + r * last;
    T hi = in[0];
    for (Index i = 1; i < last; ++i) hi = std::max(hi, in[i]);
    T total{0};
    for (Index i = 0; i < last; ++i) {
      out[i] = std::exp(in[i] - hi);
      total += out[i];
    }
    for (Index i = 0; i < last; ++i) out[i] /= total;
  }
  Tensor<T> saved = y;
  return make_op<T>(
      std::move(y), {x},
      [saved = std::move(saved), rows, last](const Var<T>& g, const std::vector<bool>&) {
        Tensor<T> out(saved.shape());
        for (Index r = 0; r < rows; ++r) {
          const T* s = saved.ptr() + r * last;
          const T* gr = g.value().ptr() + r * last;
          T dot{0};
          for (Index i = 0; i < last; ++i) dot += gr[i] * s[i];
          for (Index i = 0; i < last; ++i) out[r * last + i] = s[i] * (gr[i] - dot);
        }
        return std::vector<Var<T>>{first_order_result(std::move(out))};
      },
      "softmax", false);
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total{0};
  for (T v : x.value().data()) total += v;
  const Shape shape = x.shape();
  return make_op<T>(
      Tensor<T>::scalar(total), {x},
      [shape](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{expand(g, shape)};
      },
      "sum");
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

template <typename T>
Var<T> expand(const Var<T>& x, const Shape& shape) {
  if (x.size() != 1) throw ShapeError("expand needs a single-element tensor, got " + shape_string(x.shape()));
  const Shape from = x.shape();
  return make_op<T>(
      Tensor<T>(shape, x.value()[0]), {x},
      [from](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{reshape(sum(g), from)};
      },
      "expand");
}

template <typename T>
Var<T> sum_rows(const Var<T>& x) {
  if (x.value().rank() < 1) throw ShapeError("sum_rows needs rank >= 1");
  const Index n = x.shape()[0];
  const Index inner = n ? x.size() / n : 0;
  Tensor<T> out(Shape{n});
  for (Index r = 0; r < n; ++r) {
    T total{0};
    const T* row = x.value().ptr() + r * inner;
    for (Index i = 0; i < inner; ++i) total += row[i];
    out[r] = total;
  }
  const Shape shape = x.shape();
  return make_op<T>(
      std::move(out), {x},
      [shape](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{expand_rows(g, shape)};
      },
      "sum_rows");
}

template <typename T>
Var<T> expand_rows(const Var<T>& x, const Shape& shape) {
  if (x.value().rank() != 1 || shape.empty() || shape[0] != x.shape()[0]) {
    throw ShapeError("expand_rows: cannot broadcast " + shape_string(x.shape()) + " to " +
                     shape_string(shape));
  }
  Tensor<T> out(shape);
  const Index n = shape[0];
  const Index inner = n ? out.size() / n : 0;
  for (Index r = 0; r < n; ++r) std::fill_n(out.ptr() + r * inner, inner, x.value()[r]);
  return make_op<T>(
      std::move(out), {x},
      [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{sum_rows(g)}; },
      "expand_rows");
}

template <typename T>
Var<T> channel_sum(const Var<T>& x) {
  if (x.value().rank() < 2) throw ShapeError("channel_sum needs rank >= 2");
  const AxisSplit s = split_at(x.shape(), 1);
  Tensor<T> out(Shape{s.extent});
  for (Index o = 0; o < s.outer; ++o) {
    for (Index c = 0; c < s.extent; ++c) {
      const T* p = x.value().ptr() + (o * s.extent + c) * s.inner;
      T total{0};
      for (Index i = 0; i < s.inner; ++i) total += p[i];
      out[c] += total;
    }
  }
  const Shape shape = x.shape();
  return make_op<T>(
      std::move(out), {x},
      [shape](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{channel_expand(g, shape)};
      },
      "channel_sum");
}

template <typename T>
Var<T> channel_expand(const Var<T>& x, const Shape& shape) {
  if (x.value().rank() != 1 || shape.size() < 2 || shape[1] != x.shape()[0]) {
    throw ShapeError("channel_expand: cannot broadcast " + shape_string(x.shape()) + " over axis 1 of " +
                     shape_string(shape));
  }
  const AxisSplit s = split_at(shape, 1);
  Tensor<T> out(shape);
  for (Index o = 0; o < s.outer; ++o) {
    for (Index c = 0; c < s.extent; ++c) {
      std::fill_n(out.ptr() + (o * s.extent + c) * s.inner, s.inner, x.value()[c]);
    }
  }
  return make_op<T>(
      std::move(out), {x},
      [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{channel_sum(g)}; },
      "channel_expand");
}

template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias) {
  return add(x, channel_expand(bias, x.shape()));
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& shape) {
  const Shape from = x.shape();
  return make_op<T>(
      x.value().reshaped(shape), {x},
      [from](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{reshape(g, from)};
      },
      "reshape");
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, Index begin, Index end) {
  axis = normalize_axis(axis, x.value().rank(), "slice");
  const AxisSplit s = split_at(x.shape(), axis);
  if (begin < 0 || end > s.extent || begin >= end) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = end - begin;
  Tensor<T> out(out_shape);
  const Index width = (end - begin) * s.inner;
  for (Index o = 0; o < s.outer; ++o) {
    const T* src = x.value().ptr() + (o * s.extent + begin) * s.inner;
    std::copy_n(src, width, out.ptr() + o * width);
  }
  const Index extent = s.extent;
  return make_op<T>(
      std::move(out), {x},
      [axis, begin, extent](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{embed(g, axis, begin, extent)};
      },
      "slice");
}

template <typename T>
Var<T> embed(const Var<T>& x, int axis, Index begin, Index extent) {
  axis = normalize_axis(axis, x.value().rank(), "embed");
  const AxisSplit s = split_at(x.shape(), axis);
  if (begin < 0 || begin + s.extent > extent) {
    throw ShapeError("embed: placement out of range for " + shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = extent;
  Tensor<T> out(out_shape);
  const Index width = s.extent * s.inner;
  for (Index o = 0; o < s.outer; ++o) {
    std::copy_n(x.value().ptr() + o * width, width, out.ptr() + (o * extent + begin) * s.inner);
  }
  const Index end = begin + s.extent;
  return make_op<T>(
      std::move(out), {x},
      [axis, begin, end](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{slice(g, axis, begin, end)};
      },
      "embed");
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  axis = normalize_axis(axis, xs[0].value().rank(), "concat");
  Shape out_shape = xs[0].shape();
  Index total = 0;
  for (const auto& x : xs) {
    Shape probe = x.shape();
    if (probe.size() != out_shape.size()) throw ShapeError("concat rank mismatch");
    probe[static_cast<std::size_t>(axis)] = out_shape[static_cast<std::size_t>(axis)];
    if (probe != out_shape) {
      throw ShapeError("concat extents differ off-axis: " + shape_string(x.shape()) + " vs " +
                       shape_string(xs[0].shape()));
    }
    total += x.shape()[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  const AxisSplit whole = split_at(out_shape, axis);
  Tensor<T> out(out_shape);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& x : xs) {
    const AxisSplit part = split_at(x.shape(), axis);
    const Index width = part.extent * part.inner;
    for (Index o = 0; o < whole.outer; ++o) {
      std::copy_n(x.value().ptr() + o * width, width,
                  out.ptr() + (o * whole.extent + offset) * whole.inner);
    }
    offsets.push_back(offset);
    offset += part.extent;
  }
  offsets.push_back(offset);
  return make_op<T>(
      std::move(out), xs,
      [axis, offsets](const Var<T>& g, const std::vector<bool>& need) {
        std::vector<Var<T>> grads(need.size());
        for (std::size_t i = 0; i < need.size(); ++i) {
          if (need[i]) grads[i] = slice(g, axis, offsets[i], offsets[i + 1]);
        }
        return grads;
      },
      "concat");
}

// ---------------------------------------------------------------------------
// Linear maps

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta, bool tb) {
  return make_op<T>(
      kernels::matmul(a.value(), b.value(), ta, tb), {a, b},
      [a, b, ta, tb](const Var<T>& g, const std::vector<bool>& need) {
        Var<T> ga, gb;
        if (need[0]) ga = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
        if (need[1]) gb = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
        return std::vector<Var<T>>{ga, gb};
      },
      "matmul");
}

template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return add_channel_bias(matmul(x, weight, false, true), bias);
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, Conv2dParams p) {
  return make_op<T>(
      kernels::conv2d_forward(x.value(), weight.value(), p), {x, weight},
      [x, weight, p](const Var<T>& g, const std::vector<bool>& need) {
        Var<T> gx, gw;
        if (need[0]) gx = conv2d_input_adjoint(g, weight, x.shape(), p);
        if (need[1]) gw = conv2d_weight_adjoint(x, g, weight.shape(), p);
        return std::vector<Var<T>>{gx, gw};
      },
      "conv2d");
}

template <typename T>
Var<T> conv2d_input_adjoint(const Var<T>& grad_out, const Var<T>& weight, const Shape& input_shape,
                            Conv2dParams p) {
  return make_op<T>(
      kernels::conv2d_input_adjoint(grad_out.value(), weight.value(), input_shape, p),
      {grad_out, weight},
      [grad_out, weight, p](const Var<T>& g, const std::vector<bool>& need) {
        Var<T> gg, gw;
        if (need[0]) gg = conv2d(g, weight, p);
        if (need[1]) gw = conv2d_weight_adjoint(g, grad_out, weight.shape(), p);
        return std::vector<Var<T>>{gg, gw};
      },
      "conv2d_input_adjoint");
}

template <typename T>
Var<T> conv2d_weight_adjoint(const Var<T>& x, const Var<T>& grad_out, const Shape& weight_shape,
                             Conv2dParams p) {
  return make_op<T>(
      kernels::conv2d_weight_adjoint(x.value(), grad_out.value(), weight_shape, p), {x, grad_out},
      [x, grad_out, p](const Var<T>& g, const std::vector<bool>& need) {
        Var<T> gx, gg;
        if (need[0]) gx = conv2d_input_adjoint(grad_out, g, x.shape(), p);
        if (need[1]) gg = conv2d(x, g, p);
        return std::vector<Var<T>>{gx, gg};
      },
      "conv2d_weight_adjoint");
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, Conv2dParams p) {
  require_rank(x.shape(), 4, "conv_transpose2d");
  require_rank(weight.shape(), 4, "conv_transpose2d weight");
  if (x.shape()[1] != weight.shape()[0]) {
    throw ShapeError("conv_transpose2d channel mismatch: input " + shape_string(x.shape()) +
                     ", weight " + shape_string(weight.shape()));
  }
  const Index k = weight.shape()[2];
  const Index h = (x.shape()[2] - 1) * p.stride - 2 * p.padding + k;
  const Index w = (x.shape()[3] - 1) * p.stride - 2 * p.padding + k;
  if (h < 1 || w < 1) throw ShapeError("conv_transpose2d produces an empty output");
  return conv2d_input_adjoint(x, weight, Shape{x.shape()[0], weight.shape()[1], h, w}, p);
}

template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "upsample2x");
  const Index planes = x.shape()[0] * x.shape()[1];
  const Index h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out(Shape{x.shape()[0], x.shape()[1], 2 * h, 2 * w});
  for (Index p = 0; p < planes; ++p) {
    const T* src = x.value().ptr() + p * h * w;
    T* dst = out.ptr() + p * 4 * h * w;
    for (Index r = 0; r < 2 * h; ++r) {
      const T* row = src + (r / 2) * w;
      T* o = dst + r * 2 * w;
      for (Index c = 0; c < 2 * w; ++c) o[c] = row[c / 2];
    }
  }
  return make_op<T>(
      std::move(out), {x},
      [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{block_sum2x(g)}; },
      "upsample2x");
}

template <typename T>
Var<T> block_sum2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "block_sum2x");
  const Index H = x.shape()[2], W = x.shape()[3];
  if (H % 2 || W % 2) throw ShapeError("block_sum2x needs even extents, got " + shape_string(x.shape()));
  const Index planes = x.shape()[0] * x.shape()[1];
  const Index h = H / 2, w = W / 2;
  Tensor<T> out(Shape{x.shape()[0], x.shape()[1], h, w});
  for (Index p = 0; p < planes; ++p) {
    const T* src = x.value().ptr() + p * H * W;
    T* dst = out.ptr() + p * h * w;
    for (Index r = 0; r < H; ++r) {
      for (Index c = 0; c < W; ++c) dst[(r / 2) * w + c / 2] += src[r * W + c];
    }
  }
  return make_op<T>(
      std::move(out), {x},
      [](const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{upsample2x(g)}; },
      "block_sum2x");
}

namespace {

// Moves axis 1 to the end (forward) or the last axis to position 1 (inverse).
template <typename T>
Tensor<T> permute_channels(const Tensor<T>& x, bool to_last) {
  require_rank(x.shape(), 4, to_last ? "to_channels_last" : "to_channels_first");
  const Shape& s = x.shape();
  const Index n = s[0];
  const Index c = to_last ? s[1] : s[3];
  const Index hw = to_last ? s[2] * s[3] : s[1] * s[2];
  Tensor<T> out(to_last ? Shape{s[0], s[2], s[3], s[1]} : Shape{s[0], s[3], s[1], s[2]});
  for (Index b = 0; b < n; ++b) {
    const T* src = x.ptr() + b * c * hw;
    T* dst = out.ptr() + b * c * hw;
    for (Index ch = 0; ch < c; ++ch) {
      for (Index p = 0; p < hw; ++p) {
        if (to_last) {
          dst[p * c + ch] = src[ch * hw + p];
        } else {
          dst[ch * hw + p] = src[p * c + ch];
        }
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> to_channels_last(const Var<T>& x) {
  return make_op<T>(
      permute_channels(x.value(), true), {x},
      [](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{to_channels_first(g)};
      },
      "to_channels_last");
}

template <typename T>
Var<T> to_channels_first(const Var<T>& x) {
  return make_op<T>(
      permute_channels(x.value(), false), {x},
      [](const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{to_channels_last(g)};
      },
      "to_channels_first");
}

// ---------------------------------------------------------------------------

#define BOXGAN_INSTANTIATE(T)                                                                      \
  template Var<T> make_op(Tensor<T>, std::vector<Var<T>>, BackwardFn<T>, const char*, bool);      \
  template void backward(const Var<T>&, bool);                                                     \
  template std::vector<Var<T>> grad(const Var<T>&, const std::vector<Var<T>>&, bool);              \
  template Var<T> constant(Tensor<T>);                                                             \
  template Var<T> add(const Var<T>&, const Var<T>&);                                               \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                               \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                               \
  template Var<T> div(const Var<T>&, const Var<T>&);                                               \
  template Var<T> minimum(const Var<T>&, const Var<T>&);                                           \
  template Var<T> maximum(const Var<T>&, const Var<T>&);                                           \
  template Var<T> neg(const Var<T>&);                                                              \
  template Var<T> scale(const Var<T>&, T);                                                         \
  template Var<T> add_scalar(const Var<T>&, T);                                                    \
  template Var<T> square(const Var<T>&);                                                           \
  template Var<T> sqrt(const Var<T>&);                                                             \
  template Var<T> exp(const Var<T>&);                                                              \
  template Var<T> log(const Var<T>&);                                                              \
  template Var<T> atan(const Var<T>&);                                                             \
  template Var<T> relu(const Var<T>&);                                                             \
  template Var<T> leaky_relu(const Var<T>&, T);                                                    \
  template Var<T> sigmoid(const Var<T>&);                                                          \
  template Var<T> tanh(const Var<T>&);                                                             \
  template Var<T> softmax(const Var<T>&);                                                          \
  template Var<T> sum(const Var<T>&);                                                              \
  template Var<T> mean(const Var<T>&);                                                             \
  template Var<T> expand(const Var<T>&, const Shape&);                                             \
  template Var<T> sum_rows(const Var<T>&);                                                         \
  template Var<T> expand_rows(const Var<T>&, const Shape&);                                        \
  template Var<T> channel_sum(const Var<T>&);                                                      \
  template Var<T> channel_expand(const Var<T>&, const Shape&);                                     \
  template Var<T> add_channel_bias(const Var<T>&, const Var<T>&);                                  \
  template Var<T> reshape(const Var<T>&, const Shape&);                                            \
  template Var<T> slice(const Var<T>&, int, Index, Index);                                         \
  template Var<T> embed(const Var<T>&, int, Index, Index);                                         \
  template Var<T> concat(const std::vector<Var<T>>&, int);                                         \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                                \
  template Var<T> affine(const Var<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, Conv2dParams);                              \
  template Var<T> conv2d_input_adjoint(const Var<T>&, const Var<T>&, const Shape&, Conv2dParams);  \
  template Var<T> conv2d_weight_adjoint(const Var<T>&, const Var<T>&, const Shape&, Conv2dParams); \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, Conv2dParams);                    \
  template Var<T> upsample2x(const Var<T>&);                                                       \
  template Var<T> block_sum2x(const Var<T>&);                                                      \
  template Var<T> to_channels_last(const Var<T>&);                                                 \
  template Var<T> to_channels_first(const Var<T>&);

BOXGAN_INSTANTIATE(float)
BOXGAN_INSTANTIATE(double)
#undef BOXGAN_INSTANTIATE

}  // namespace boxgan::ad
