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

#include <algorithm>
#include <numeric>

#include "ops_internal.hpp"

namespace pelab {

namespace detail {

std::vector<int> inverse_permutation(const std::vector<int>& order) {
  std::vector<int> inv(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inv[order[i]] = static_cast<int>(i);
  return inv;
}

template <typename Scalar>
Tensor<Scalar> permute_tensor(const Tensor<Scalar>& x, const std::vector<int>& order) {
  const int rank = x.rank();
  if (static_cast<int>(order.size()) != rank) {
    throw ShapeError("permutation of length " + std::to_string(order.size()) +
                     " for shape " + shape_to_string(x.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (int a : order) {
    if (a < 0 || a >= rank || seen[a]) {
      throw ShapeError("invalid axis permutation for shape " + shape_to_string(x.shape()));
    }
    seen[a] = true;
  }
  std::vector<Index> in_stride(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * x.shape()[i + 1];
  Shape out_shape(rank);
  std::vector<Index> stride(rank);
  for (int i = 0; i < rank; ++i) {
    out_shape[i] = x.shape()[order[i]];
    stride[i] = in_stride[order[i]];
  }
  Tensor<Scalar> out(out_shape);
  if (std::is_sorted(order.begin(), order.end())) {
    out.array() = x.array();
    return out;
  }
  // Walk the output in order; the innermost axis is copied as a strided run.
  const Index inner = rank ? out_shape[rank - 1] : 1;
  const Index inner_stride = rank ? stride[rank - 1] : 1;
  const Index rows = out.size() / inner;
  std::vector<Index> idx(std::max(rank - 1, 0), 0);
  Index src = 0;
  Scalar* dst = out.data();
  const Scalar* in = x.data();
  for (Index r = 0; r < rows; ++r) {
    for (Index j = 0; j < inner; ++j) dst[j] = in[src + j * inner_stride];
    dst += inner;
    for (int ax = rank - 2; ax >= 0; --ax) {
      ++idx[ax];
      src += stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= stride[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> permute(const Var<Scalar>& x, const std::vector<int>& order) {
  auto out = detail::permute_tensor(x.value(), order);
  return record_op<Scalar>("permute", std::move(out), {x}, [x, order](const Tensor<Scalar>& g) mutable {
    x.grad_buffer().array() += detail::permute_tensor(g, detail::inverse_permutation(order)).array();
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  auto out = x.value().reshaped(std::move(shape));
  return record_op<Scalar>("reshape", std::move(out), {x}, [x](const Tensor<Scalar>& g) mutable {
    x.grad_buffer().array() += g.array();
  });
}

namespace {

struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, int axis, Index start, Index length) {
  const int ax = normalize_axis(axis, x.value().rank());
  const auto sp = split_at(x.shape(), ax);
  if (start < 0 || length < 1 || start + length > sp.extent) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range on axis " + std::to_string(ax) + " of " +
                     shape_to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  Tensor<Scalar> out(out_shape);
  const Index run = length * sp.inner;
  for (Index o = 0; o < sp.outer; ++o) {
    const Scalar* src = x.value().data() + (o * sp.extent + start) * sp.inner;
    std::copy(src, src + run, out.data() + o * run);
  }
  return record_op<Scalar>("slice", std::move(out), {x}, [x, sp, start, run](const Tensor<Scalar>& g) mutable {
    auto& gx = x.grad_buffer();
    for (Index o = 0; o < sp.outer; ++o) {
      Scalar* dst = gx.data() + (o * sp.extent + start) * sp.inner;
      const Scalar* src = g.data() + o * run;
      for (Index j = 0; j < run; ++j) dst[j] += src[j];
    }
  });
}

template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int ax = normalize_axis(axis, parts[0].value().rank());
  Shape out_shape = parts[0].shape();
  Index total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = out_shape;
    if (a.size() != b.size()) throw ShapeError("concat rank mismatch " + shape_to_string(a));
    a[ax] = b[ax] = 0;
    if (a != b) {
      throw ShapeError("concat shape mismatch " + shape_to_string(p.shape()) + " vs " +
                       shape_to_string(parts[0].shape()));
    }
    total += p.shape()[ax];
  }
  out_shape[ax] = total;
  Tensor<Scalar> out(out_shape);
  const auto sp = split_at(out_shape, ax);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Index run = p.shape()[ax] * sp.inner;
    for (Index o = 0; o < sp.outer; ++o) {
      const Scalar* src = p.value().data() + o * run;
      std::copy(src, src + run, out.data() + (o * sp.extent + off) * sp.inner);
    }
    off += p.shape()[ax];
  }
  return record_op<Scalar>("concat", std::move(out), parts,
                           [parts, offsets, sp, ax](const Tensor<Scalar>& g) mutable {
                             for (std::size_t k = 0; k < parts.size(); ++k) {
                               if (!parts[k].requires_grad()) continue;
                               auto& gp = parts[k].grad_buffer();
                               const Index run = parts[k].shape()[ax] * sp.inner;
                               for (Index o = 0; o < sp.outer; ++o) {
                                 const Scalar* src = g.data() + (o * sp.extent + offsets[k]) * sp.inner;
                                 Scalar* dst = gp.data() + o * run;
                                 for (Index j = 0; j < run; ++j) dst[j] += src[j];
                               }
                             }
                           });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw ShapeError("matmul dimension mismatch: " + shape_to_string(sa) + " x " +
                     shape_to_string(sb));
  }
  const Index p = sa[sa.size() - 2];
  const Index q = sa[sa.size() - 1];
  const Index r = sb[sb.size() - 1];
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  detail::BroadcastPlan plan;
  try {
    plan = detail::make_broadcast_plan(batch_a, batch_b);
  } catch (const ShapeError&) {
    throw ShapeError("matmul batch mismatch: " + shape_to_string(sa) + " x " + shape_to_string(sb));
  }
  Shape out_shape = plan.out;
  out_shape.push_back(p);
  out_shape.push_back(r);
  Tensor<Scalar> out(out_shape);
  detail::for_each_broadcast(plan, [&](Index o, Index ia, Index ib) {
    out.matrix(p, r, o * p * r).noalias() =
        a.value().matrix(p, q, ia * p * q) * b.value().matrix(q, r, ib * q * r);
  });
  return record_op<Scalar>("matmul", std::move(out), {a, b},
                           [a, b, plan, p, q, r](const Tensor<Scalar>& g) mutable {
                             const bool need_a = a.requires_grad();
                             const bool need_b = b.requires_grad();
                             Tensor<Scalar>* ga = need_a ? &a.grad_buffer() : nullptr;
                             Tensor<Scalar>* gb = need_b ? &b.grad_buffer() : nullptr;
                             detail::for_each_broadcast(plan, [&](Index o, Index ia, Index ib) {
                               auto go = g.matrix(p, r, o * p * r);
                               if (ga) {
                                 ga->matrix(p, q, ia * p * q).noalias() +=
                                     go * b.value().matrix(q, r, ib * q * r).transpose();
                               }
                               if (gb) {
                                 gb->matrix(q, r, ib * q * r).noalias() +=
                                     a.value().matrix(p, q, ia * p * q).transpose() * go;
                               }
                             });
                           });
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, int axis) {
  const int rank = x.value().rank();
  const int ax = normalize_axis(axis, rank);
  if (ax != rank - 1) {
    std::vector<int> order(rank);
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[ax], order[rank - 1]);
    return permute(softmax(permute(x, order), -1), order);
  }
  const Index cols = x.shape()[ax];
  const Index rows = x.size() / cols;
  Tensor<Scalar> out(x.shape());
  for (Index r = 0; r < rows; ++r) {
    const auto in = x.value().array().segment(r * cols, cols);
    out.array().segment(r * cols, cols) = in - in.maxCoeff();
  }
  out.array() = out.array().exp();
  for (Index r = 0; r < rows; ++r) {
    auto y = out.array().segment(r * cols, cols);
    y *= Scalar(1) / y.sum();
  }
  Tensor<Scalar> saved = out;
  return record_op<Scalar>("softmax", std::move(out), {x},
                           [x, rows, cols, y = std::move(saved)](const Tensor<Scalar>& g) mutable {
                             auto& gx = x.grad_buffer();
                             for (Index r = 0; r < rows; ++r) {
                               const auto ym = y.array().segment(r * cols, cols);
                               const auto gm = g.array().segment(r * cols, cols);
                               const Scalar dot = (gm * ym).sum();
                               gx.array().segment(r * cols, cols) += ym * (gm - dot);
                             }
                           });
}

#define PELAB_INSTANTIATE(S)                                                              \
  template Tensor<S> detail::permute_tensor(const Tensor<S>&, const std::vector<int>&);   \
  template Var<S> permute(const Var<S>&, const std::vector<int>&);                        \
  template Var<S> reshape(const Var<S>&, Shape);                                          \
  template Var<S> slice(const Var<S>&, int, Index, Index);                                \
  template Var<S> concat(const std::vector<Var<S>>&, int);                                \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                   \
  template Var<S> softmax(const Var<S>&, int);
PELAB_INSTANTIATE_FLOAT_DOUBLE(PELAB_INSTANTIATE)
#undef PELAB_INSTANTIATE

}  // namespace pelab
