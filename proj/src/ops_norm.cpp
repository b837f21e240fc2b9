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

template <typename Scalar>
Var<Scalar> global_layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                              Scalar eps) {
  const auto& xs = x.shape();
  if (xs.empty() || x.size() < 2) {
    throw ShapeError("global_layer_norm needs more than one element, got " + shape_to_string(xs));
  }
  const Index channels = xs[0];
  if (gain.shape() != Shape{channels} || bias.shape() != Shape{channels}) {
    throw ShapeError("global_layer_norm affine shapes " + shape_to_string(gain.shape()) + "/" +
                     shape_to_string(bias.shape()) + " do not match channels of " +
                     shape_to_string(xs));
  }
  const Index inner = x.size() / channels;
  const auto& xa = x.value().array();
  const Scalar mu = xa.mean();
  const Scalar var = (xa - mu).square().mean();
  const Scalar inv = Scalar(1) / std::sqrt(var + eps);
  Tensor<Scalar> xhat(xs, ((xa - mu) * inv).eval());
  Tensor<Scalar> out(xs);
  {
    detail::ConstArrayMap<Scalar> h(xhat.data(), channels, inner);
    detail::ArrayMap<Scalar> y(out.data(), channels, inner);
    y = (h.colwise() * gain.value().array()).colwise() + bias.value().array();
  }
  return record_op<Scalar>("global_layer_norm", std::move(out), {x, gain, bias},
                           [x, gain, bias, channels, inner, inv, xhat = std::move(xhat)](
                               const Tensor<Scalar>& g) mutable {
                             detail::ConstArrayMap<Scalar> gm(g.data(), channels, inner);
                             detail::ConstArrayMap<Scalar> h(xhat.data(), channels, inner);
                             if (gain.requires_grad()) gain.grad_buffer().array() += (gm * h).rowwise().sum();
                             if (bias.requires_grad()) bias.grad_buffer().array() += gm.rowwise().sum();
                             if (x.requires_grad()) {
                               const auto gh = (gm.colwise() * gain.value().array()).eval();
                               const Scalar m1 = gh.mean();
                               const Scalar m2 = (gh * h).mean();
                               detail::ArrayMap<Scalar> gx(x.grad_buffer().data(), channels, inner);
                               gx += inv * (gh - m1 - h * m2);
                             }
                           });
}

template <typename Scalar>
Var<Scalar> rms_group_norm(const Var<Scalar>& x, int groups, const Var<Scalar>& gain, int channel_axis,
                           Scalar eps) {
  const auto& xs = x.shape();
  const int ax = normalize_axis(channel_axis, static_cast<int>(xs.size()));
  const Index channels = xs[ax];
  if (groups < 1 || channels % groups != 0) {
    throw ConfigError("rms_group_norm: " + std::to_string(channels) +
                      " channels are not divisible into " + std::to_string(groups) + " groups");
  }
  if (gain.shape() != Shape{channels}) {
    throw ShapeError("rms_group_norm gain " + shape_to_string(gain.shape()) +
                     " does not match channels of " + shape_to_string(xs));
  }
  Index outer = 1;
  for (int i = 0; i < ax; ++i) outer *= xs[i];
  const Index inner = x.size() / (outer * channels);
  const Index per_group = channels / groups;

  Tensor<Scalar> out(xs);
  // 1 / rms for every (outer, group, position).
  Tensor<Scalar> inv_rms(Shape{outer * groups, inner});
  const auto& ga = gain.value().array();
  for (Index o = 0; o < outer; ++o) {
    for (int grp = 0; grp < groups; ++grp) {
      const Index off = (o * channels + grp * per_group) * inner;
      detail::ConstArrayMap<Scalar> xb(x.value().data() + off, per_group, inner);
      detail::ArrayMap<Scalar> yb(out.data() + off, per_group, inner);
      detail::ArrayMap<Scalar> inv(inv_rms.data() + (o * groups + grp) * inner, 1, inner);
      inv = ((xb.square().colwise().sum() / Scalar(per_group)) + eps).rsqrt();
      yb = (xb.rowwise() * inv.row(0)).colwise() * ga.segment(grp * per_group, per_group);
    }
  }
  return record_op<Scalar>(
      "rms_group_norm", std::move(out), {x, gain},
      [x, gain, groups, outer, channels, inner, per_group, inv_rms = std::move(inv_rms)](
          const Tensor<Scalar>& g) mutable {
        const auto& ga = gain.value().array();
        for (Index o = 0; o < outer; ++o) {
          for (int grp = 0; grp < groups; ++grp) {
            const Index off = (o * channels + grp * per_group) * inner;
            detail::ConstArrayMap<Scalar> xb(x.value().data() + off, per_group, inner);
            detail::ConstArrayMap<Scalar> gb(g.data() + off, per_group, inner);
            detail::ConstArrayMap<Scalar> inv(inv_rms.data() + (o * groups + grp) * inner, 1, inner);
            const auto xhat = (xb.rowwise() * inv.row(0)).eval();
            if (gain.requires_grad()) {
              gain.grad_buffer().array().segment(grp * per_group, per_group) += (gb * xhat).rowwise().sum();
            }
            if (x.requires_grad()) {
              const auto gh = (gb.colwise() * ga.segment(grp * per_group, per_group)).eval();
              const auto dot = ((gh * xhat).colwise().sum() / Scalar(per_group)).eval();
              detail::ArrayMap<Scalar> gx(x.grad_buffer().data() + off, per_group, inner);
              gx += (gh - xhat.rowwise() * dot).rowwise() * inv.row(0);
            }
          }
        }
      });
}

#define PELAB_INSTANTIATE(S)                                                                  \
  template Var<S> global_layer_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);          \
  template Var<S> rms_group_norm(const Var<S>&, int, const Var<S>&, int, S);
PELAB_INSTANTIATE_FLOAT_DOUBLE(PELAB_INSTANTIATE)
#undef PELAB_INSTANTIATE

}  // namespace pelab
