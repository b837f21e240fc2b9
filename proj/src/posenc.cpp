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

#include "pelab/posenc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ops_internal.hpp"

namespace pelab {

PEKind parse_pe_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ape") return PEKind::kAPE;
  if (s == "kerple") return PEKind::kKERPLE;
  if (s == "rope") return PEKind::kRoPE;
  if (s == "nope") return PEKind::kNoPE;
  throw ConfigError("unknown positional encoding '" + std::string(name) +
                    "' (expected ape|kerple|rope|nope)");
}

std::string pe_name(PEKind kind) {
  switch (kind) {
    case PEKind::kAPE: return "ape";
    case PEKind::kKERPLE: return "kerple";
    case PEKind::kRoPE: return "rope";
    case PEKind::kNoPE: return "nope";
  }
  return "?";
}

template <typename Scalar>
Tensor<Scalar> ape_table(Index dim, Index length) {
  if (dim < 1 || length < 1) {
    throw ConfigError("ape_table needs D >= 1 and L >= 1, got D=" + std::to_string(dim) +
                      " L=" + std::to_string(length));
  }
  Tensor<Scalar> t(Shape{dim, length});
  const double D = static_cast<double>(dim);
  for (Index row = 0; row < dim; ++row) {
    const Index d = row + 1;
    const bool even = d % 2 == 0;
    const double freq = std::pow(5000.0, -static_cast<double>(even ? d : d - 1) / D);
    for (Index i = 0; i < length; ++i) {
      const double a = freq * static_cast<double>(i);
      t[row * length + i] = static_cast<Scalar>(even ? std::sin(a) : std::cos(a));
    }
  }
  return t;
}

template <typename Scalar>
Var<Scalar> apply_ape(const Var<Scalar>& z) {
  if (z.shape().size() != 3) {
    throw ShapeError("apply_ape expects [D,T,F], got " + shape_to_string(z.shape()));
  }
  const Index D = z.shape()[0], T = z.shape()[1], F = z.shape()[2];
  auto time = Var<Scalar>::constant(ape_table<Scalar>(D, T).reshaped({D, T, 1}));
  auto freq = Var<Scalar>::constant(ape_table<Scalar>(D, F).reshaped({D, 1, F}));
  return add(add(z, time), freq);
}

template <typename Scalar>
Tensor<Scalar> kerple_bias(Index length, double r1, double r2) {
  if (!(r1 > 0.0) || !(r2 > 0.0)) throw ConfigError("kerple_bias needs r1 > 0 and r2 > 0");
  Tensor<Scalar> b(Shape{length, length});
  for (Index i = 0; i < length; ++i) {
    for (Index j = 0; j < length; ++j) {
      const double dist = static_cast<double>(i > j ? i - j : j - i);
      b[i * length + j] = static_cast<Scalar>(-r1 * std::log1p(r2 * dist));
    }
  }
  return b;
}

template <typename Scalar>
Var<Scalar> kerple_bias(Index length, const KerpleParams<Scalar>& params) {
  const auto& u1 = params.u1;
  const auto& u2 = params.u2;
  if (u1.shape().size() != 1 || u1.shape() != u2.shape()) {
    throw ShapeError("kerple parameters must be matching [H] vectors, got " +
                     shape_to_string(u1.shape()) + " and " + shape_to_string(u2.shape()));
  }
  const Index heads = u1.shape()[0];
  auto softplus_d = [](double u) { return u > 30.0 ? u : std::log1p(std::exp(u)); };
  auto sigmoid_d = [](double u) { return 1.0 / (1.0 + std::exp(-u)); };
  Tensor<Scalar> out(Shape{heads, length, length});
  for (Index h = 0; h < heads; ++h) {
    const double r1 = softplus_d(static_cast<double>(u1.value()[h]));
    const double r2 = softplus_d(static_cast<double>(u2.value()[h]));
    // Bias depends only on |i - j|; fill by distance.
    for (Index i = 0; i < length; ++i) {
      for (Index j = 0; j < length; ++j) {
        const double dist = static_cast<double>(i > j ? i - j : j - i);
        out[(h * length + i) * length + j] = static_cast<Scalar>(-r1 * std::log1p(r2 * dist));
      }
    }
  }
  return record_op<Scalar>(
      "kerple_bias", std::move(out), {u1, u2},
      [u1, u2, heads, length, softplus_d, sigmoid_d](const Tensor<Scalar>& g) {
        for (Index h = 0; h < heads; ++h) {
          const double a1 = static_cast<double>(u1.value()[h]);
          const double a2 = static_cast<double>(u2.value()[h]);
          const double r1 = softplus_d(a1);
          const double r2 = softplus_d(a2);
          double d1 = 0.0;
          double d2 = 0.0;
          for (Index i = 0; i < length; ++i) {
            for (Index j = 0; j < length; ++j) {
              const double dist = static_cast<double>(i > j ? i - j : j - i);
              const double gv = static_cast<double>(g[(h * length + i) * length + j]);
              d1 -= gv * std::log1p(r2 * dist);
              d2 -= gv * r1 * dist / (1.0 + r2 * dist);
            }
          }
          if (u1.requires_grad()) u1.grad_buffer()[h] += static_cast<Scalar>(d1 * sigmoid_d(a1));
          if (u2.requires_grad()) u2.grad_buffer()[h] += static_cast<Scalar>(d2 * sigmoid_d(a2));
        }
      });
}

namespace {

// cos/sin tables [L, d_head/2]; each entry depends only on (i, k).
void rope_angles(Index length, Index half, Index d_head, double base, std::vector<double>& c,
                 std::vector<double>& s) {
  c.resize(length * half);
  s.resize(length * half);
  for (Index k = 0; k < half; ++k) {
    const double inv_freq = std::pow(base, -static_cast<double>(2 * k) / static_cast<double>(d_head));
    for (Index i = 0; i < length; ++i) {
      const double a = static_cast<double>(i) * inv_freq;
      c[i * half + k] = std::cos(a);
      s[i * half + k] = std::sin(a);
    }
  }
}

// Rotates every [L, d_head] slab of `src` into `dst`; sign -1 applies the
// inverse rotation.
template <typename Scalar>
void rope_apply(const Scalar* src, Scalar* dst, Index slabs, Index length, Index d_head,
                const std::vector<double>& c, const std::vector<double>& s, double sign) {
  const Index half = d_head / 2;
  for (Index b = 0; b < slabs; ++b) {
    for (Index i = 0; i < length; ++i) {
      const Scalar* x = src + (b * length + i) * d_head;
      Scalar* y = dst + (b * length + i) * d_head;
      for (Index k = 0; k < half; ++k) {
        const double cs = c[i * half + k];
        const double sn = sign * s[i * half + k];
        const double x0 = static_cast<double>(x[2 * k]);
        const double x1 = static_cast<double>(x[2 * k + 1]);
        y[2 * k] = static_cast<Scalar>(cs * x0 - sn * x1);
        y[2 * k + 1] = static_cast<Scalar>(sn * x0 + cs * x1);
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> rope_rotate(const Var<Scalar>& x, double base) {
  const auto& xs = x.shape();
  if (xs.size() < 2) throw ShapeError("rope_rotate expects [..., L, d_head], got " + shape_to_string(xs));
  const Index length = xs[xs.size() - 2];
  const Index d_head = xs.back();
  if (d_head % 2 != 0) {
    throw ConfigError("rope_rotate needs an even head dimension, got " + std::to_string(d_head));
  }
  const Index slabs = x.size() / (length * d_head);
  std::vector<double> c, s;
  rope_angles(length, d_head / 2, d_head, base, c, s);
  Tensor<Scalar> out(xs);
  rope_apply(x.value().data(), out.data(), slabs, length, d_head, c, s, 1.0);
  return record_op<Scalar>("rope_rotate", std::move(out), {x},
                           [x, slabs, length, d_head, c = std::move(c), s = std::move(s)](
                               const Tensor<Scalar>& g) {
                             Tensor<Scalar> back(g.shape());
                             rope_apply(g.data(), back.data(), slabs, length, d_head, c, s, -1.0);
                             x.grad_buffer().array() += back.array();
                           });
}

template <typename Scalar>
AttentionHooks<Scalar> attach(PEKind kind, const KerpleParams<Scalar>* kerple, double rope_base) {
  AttentionHooks<Scalar> hooks;
  switch (kind) {
    case PEKind::kAPE:
      hooks.input_add = [](const Var<Scalar>& z) { return apply_ape(z); };
      break;
    case PEKind::kKERPLE: {
      if (kerple == nullptr) throw ConfigError("KERPLE hooks need per-block parameters");
      KerpleParams<Scalar> p = *kerple;
      hooks.score_bias = [p](Index length) { return kerple_bias(length, p); };
      break;
    }
    case PEKind::kRoPE:
      hooks.qk_transform = [rope_base](const Var<Scalar>& x) { return rope_rotate(x, rope_base); };
      break;
    case PEKind::kNoPE:
      break;
  }
  return hooks;
}

#define PELAB_INSTANTIATE(S)                                                          \
  template Tensor<S> ape_table<S>(Index, Index);                                      \
  template Var<S> apply_ape(const Var<S>&);                                           \
  template Tensor<S> kerple_bias<S>(Index, double, double);                           \
  template Var<S> kerple_bias(Index, const KerpleParams<S>&);                         \
  template Var<S> rope_rotate(const Var<S>&, double);                                 \
  template AttentionHooks<S> attach(PEKind, const KerpleParams<S>*, double);
PELAB_INSTANTIATE_FLOAT_DOUBLE(PELAB_INSTANTIATE)
#undef PELAB_INSTANTIATE

}  // namespace pelab
