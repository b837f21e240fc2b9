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

#pragma once

#include <optional>
#include <vector>

#include "pelab/autodiff.hpp"

namespace pelab {

/// Numpy-style broadcast of two shapes; throws ShapeError naming both.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Elementwise arithmetic with broadcasting.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar c);
template <typename Scalar> Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar c);

// Elementwise nonlinearities.
template <typename Scalar> Var<Scalar> swish(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> softplus(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> square(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> log(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> exp(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sqrt(const Var<Scalar>& x);

// Reductions to a rank-0 scalar.
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);

/// Batched matrix product over the last two axes; leading axes broadcast.
template <typename Scalar> Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);

/// Softmax along `axis`, computed with max subtraction.
template <typename Scalar> Var<Scalar> softmax(const Var<Scalar>& x, int axis = -1);

template <typename Scalar> Var<Scalar> permute(const Var<Scalar>& x, const std::vector<int>& order);
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);
template <typename Scalar> Var<Scalar> slice(const Var<Scalar>& x, int axis, Index start, Index length);
template <typename Scalar> Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, int axis);

/// Zero padding used by every same-padded convolution: K-1 in total,
/// floor((K-1)/2) on the left, the rest on the right.
constexpr Index same_pad_left(Index kernel) { return (kernel - 1) / 2; }

/// Output length of a same-padded strided conv1d.
Index conv_output_length(Index length, Index kernel, Index stride);

/// 1-D cross-correlation. x: [N, C_in, L] or [C_in, L]; w: [C_out, C_in, K];
/// bias: [C_out] or undefined. Output [N, C_out, L'] with
/// L' = floor((L + K - 1 - K) / stride) + 1.
template <typename Scalar>
Var<Scalar> conv1d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias = {},
                   Index stride = 1);

/// Transposed 1-D convolution, the exact adjoint of `conv1d` with the same
/// weight layout read as [C_in_of_this_op, C_out_of_this_op, K].
/// `output_length` defaults to the length that conv1d would have consumed
/// (only unambiguous for stride 1).
template <typename Scalar>
Var<Scalar> conv_transpose1d(const Var<Scalar>& x, const Var<Scalar>& w,
                             const Var<Scalar>& bias = {}, Index stride = 1,
                             std::optional<Index> output_length = std::nullopt);

/// Same-padded stride-1 2-D cross-correlation. x: [N, C_in, T, F] or
/// [C_in, T, F]; w: [C_out, C_in, k_t, k_f].
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias = {});

/// Adjoint of conv2d; w: [C_in, C_out, k_t, k_f].
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& w,
                             const Var<Scalar>& bias = {});

/// Global layer normalization: statistics over every element of x, then a
/// per-channel affine map along axis 0. Biased variance, eps inside the root.
template <typename Scalar>
Var<Scalar> global_layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain,
                              const Var<Scalar>& bias, Scalar eps = Scalar(1e-5));

/// RMS group normalization along `channel_axis`: at every position the D
/// channels are split into `groups` contiguous groups, each divided by its
/// root mean square, then scaled by the per-channel gain.
template <typename Scalar>
Var<Scalar> rms_group_norm(const Var<Scalar>& x, int groups, const Var<Scalar>& gain,
                           int channel_axis, Scalar eps = Scalar(1e-5));

}  // namespace pelab
