// Copyright 2026 The pelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "ops_internal.hpp"

namespace pelab {

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const Index ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const Index eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + shape_to_string(a) + " with " + shape_to_string(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace detail {

BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shapes(a, b);
  const std::size_t rank = plan.out.size();
  auto strides_for = [&](const Shape& s) {
    std::vector<Index> st(rank, 0);
    Index stride = 1;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const std::size_t i = s.size() - 1 - k;
      const std::size_t o = rank - 1 - k;
      st[o] = s[i] == 1 ? 0 : stride;
      stride *= s[i];
    }
    return st;
  };
  plan.stride_a = strides_for(a);
  plan.stride_b = strides_for(b);
  return plan;
}

}  // namespace detail

namespace {

// Elementwise binary op. `f(x, y)` is the value; `da(x, y, g)` and
// `db(x, y, g)` the gradient contributions to each input.
template <typename Scalar, typename F, typename DA, typename DB>
Var<Scalar> binary_op(const char* name, const Var<Scalar>& a, const Var<Scalar>& b, F f, DA da,
                      DB db) {
  const auto& va = a.value();
  const auto& vb = b.value();
  if (va.shape() == vb.shape()) {
    Tensor<Scalar> out(va.shape());
    const Index n = out.size();
    for (Index i = 0; i < n; ++i) out[i] = f(va[i], vb[i]);
    return record_op<Scalar>(name, std::move(out), {a, b}, [a, b, da, db](const Tensor<Scalar>& g) mutable {
      const auto& xa = a.value();
      const auto& xb = b.value();
      const Index n = g.size();
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (Index i = 0; i < n; ++i) ga[i] += da(xa[i], xb[i], g[i]);
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (Index i = 0; i < n; ++i) gb[i] += db(xa[i], xb[i], g[i]);
      }
    });
  }
  auto plan = detail::make_broadcast_plan(va.shape(), vb.shape());
  Tensor<Scalar> out(plan.out);
  detail::for_each_broadcast(plan, [&](Index o, Index ia, Index ib) { out[o] = f(va[ia], vb[ib]); });
  return record_op<Scalar>(name, std::move(out), {a, b},
                           [a, b, da, db, plan](const Tensor<Scalar>& g) mutable {
                             const auto& xa = a.value();
                             const auto& xb = b.value();
                             const bool need_a = a.requires_grad();
                             const bool need_b = b.requires_grad();
                             Tensor<Scalar>* ga = need_a ? &a.grad_buffer() : nullptr;
                             Tensor<Scalar>* gb = need_b ? &b.grad_buffer() : nullptr;
                             detail::for_each_broadcast(plan, [&](Index o, Index ia, Index ib) {
                               if (ga) (*ga)[ia] += da(xa[ia], xb[ib], g[o]);
                               if (gb) (*gb)[ib] += db(xa[ia], xb[ib], g[o]);
                             });
                           });
}

// Elementwise unary op; `df(x, y)` is dy/dx given input and output.
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary_op(const char* name, const Var<Scalar>& x, F f, DF df) {
  const auto& vx = x.value();
  Tensor<Scalar> out(vx.shape());
  const Index n = out.size();
  for (Index i = 0; i < n; ++i) out[i] = f(vx[i]);
  Tensor<Scalar> saved = out;
  return record_op<Scalar>(name, std::move(out), {x},
                           [x, df, y = std::move(saved)](const Tensor<Scalar>& g) mutable {
                             const auto& vx = x.value();
                             auto& gx = x.grad_buffer();
                             const Index n = g.size();
                             for (Index i = 0; i < n; ++i) gx[i] += g[i] * df(vx[i], y[i]);
                           });
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar v) {
  if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
  const Scalar e = std::exp(v);
  return e / (Scalar(1) + e);
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  return binary_op<Scalar>(
      "add", a, b, [](Scalar x, Scalar y) { return x + y; },
      [](Scalar, Scalar, Scalar g) { return g; }, [](Scalar, Scalar, Scalar g) { return g; });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  return binary_op<Scalar>(
      "sub", a, b, [](Scalar x, Scalar y) { return x - y; },
      [](Scalar, Scalar, Scalar g) { return g; }, [](Scalar, Scalar, Scalar g) { return -g; });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  return binary_op<Scalar>(
      "mul", a, b, [](Scalar x, Scalar y) { return x * y; },
      [](Scalar, Scalar y, Scalar g) { return g * y; },
      [](Scalar x, Scalar, Scalar g) { return g * x; });
}

template <typename Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b) {
  return binary_op<Scalar>(
      "div", a, b, [](Scalar x, Scalar y) { return x / y; },
      [](Scalar, Scalar y, Scalar g) { return g / y; },
      [](Scalar x, Scalar y, Scalar g) { return -g * x / (y * y); });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar c) {
  Tensor<Scalar> out(a.shape(), (a.value().array() * c).eval());
  return record_op<Scalar>("scale", std::move(out), {a}, [a, c](const Tensor<Scalar>& g) mutable {
    a.grad_buffer().array() += g.array() * c;
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar c) {
  Tensor<Scalar> out(a.shape(), (a.value().array() + c).eval());
  return record_op<Scalar>("add_scalar", std::move(out), {a},
                           [a](const Tensor<Scalar>& g) mutable { a.grad_buffer().array() += g.array(); });
}

template <typename Scalar>
Var<Scalar> swish(const Var<Scalar>& x) {
  // Vectorized; exp(-v) overflowing to inf yields the correct limit 0.
  const auto& vx = x.value();
  Tensor<Scalar> out(vx.shape());
  out.array() = vx.array() / (Scalar(1) + (-vx.array()).exp());
  return record_op<Scalar>("swish", std::move(out), {x}, [x](const Tensor<Scalar>& g) mutable {
    const auto v = x.value().array();
    const auto s = (Scalar(1) / (Scalar(1) + (-v).exp())).eval();
    x.grad_buffer().array() += g.array() * s * (Scalar(1) + v * (Scalar(1) - s));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return unary_op<Scalar>(
      "sigmoid", x, [](Scalar v) { return stable_sigmoid(v); },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x) {
  return unary_op<Scalar>(
      "softplus", x,
      [](Scalar v) { return std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](Scalar v, Scalar) { return stable_sigmoid(v); });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  return unary_op<Scalar>(
      "square", x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x) {
  return unary_op<Scalar>(
      "log", x, [](Scalar v) { return std::log(v); }, [](Scalar v, Scalar) { return Scalar(1) / v; });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  return unary_op<Scalar>(
      "exp", x, [](Scalar v) { return std::exp(v); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
Var<Scalar> sqrt(const Var<Scalar>& x) {
  return unary_op<Scalar>(
      "sqrt", x, [](Scalar v) { return std::sqrt(v); },
      [](Scalar, Scalar y) { return Scalar(0.5) / y; });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  auto out = Tensor<Scalar>::scalar(x.value().array().sum());
  return record_op<Scalar>("sum", std::move(out), {x}, [x](const Tensor<Scalar>& g) mutable {
    x.grad_buffer().array() += g[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

#define PELAB_INSTANTIATE(S)                                          \
  template Var<S> add(const Var<S>&, const Var<S>&);                  \
  template Var<S> sub(const Var<S>&, const Var<S>&);                  \
  template Var<S> mul(const Var<S>&, const Var<S>&);                  \
  template Var<S> div(const Var<S>&, const Var<S>&);                  \
  template Var<S> scale(const Var<S>&, S);                            \
  template Var<S> add_scalar(const Var<S>&, S);                       \
  template Var<S> swish(const Var<S>&);                               \
  template Var<S> sigmoid(const Var<S>&);                             \
  template Var<S> softplus(const Var<S>&);                            \
  template Var<S> square(const Var<S>&);                              \
  template Var<S> log(const Var<S>&);                                 \
  template Var<S> exp(const Var<S>&);                                 \
  template Var<S> sqrt(const Var<S>&);                                \
  template Var<S> sum(const Var<S>&);                                 \
  template Var<S> mean(const Var<S>&);
PELAB_INSTANTIATE_FLOAT_DOUBLE(PELAB_INSTANTIATE)
#undef PELAB_INSTANTIATE

}  // namespace pelab
