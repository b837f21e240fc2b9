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

#include <functional>
#include <string>
#include <string_view>

#include "pelab/ops.hpp"

namespace pelab {

enum class PEKind { kAPE, kKERPLE, kRoPE, kNoPE };

/// Parses "ape" | "kerple" | "rope" | "nope" (case-insensitive).
PEKind parse_pe_kind(std::string_view name);
std::string pe_name(PEKind kind);

/// Sinusoidal table [D, L]. Row d (1-based) holds sin(5000^(-d/D) i) for
/// even d and cos(5000^(-(d-1)/D) i) for odd d, positions i = 0..L-1.
template <typename Scalar>
Tensor<Scalar> ape_table(Index dim, Index length);

/// z[D,T,F] + time table broadcast over F + frequency table broadcast over T.
template <typename Scalar>
Var<Scalar> apply_ape(const Var<Scalar>& z);

/// Per-head unconstrained KERPLE parameters; r = softplus(u).
template <typename Scalar>
struct KerpleParams {
  Var<Scalar> u1;  // [H]
  Var<Scalar> u2;  // [H]
};

/// Inverse softplus of 1, the initial value of u1 and u2.
inline double kerple_init_value() { return 0.54132485461291810; }  // log(e - 1)

/// Logarithmic bias -r1 log(1 + r2 |i - j|), full symmetric [L, L].
template <typename Scalar>
Tensor<Scalar> kerple_bias(Index length, double r1, double r2);

/// Differentiable per-head bias [H, L, L] from unconstrained parameters.
template <typename Scalar>
Var<Scalar> kerple_bias(Index length, const KerpleParams<Scalar>& params);

/// Rotary transform along the last two axes [..., L, d_head]: pair
/// (x_2k, x_2k+1) at position i is rotated by i * base^(-2k/d_head).
template <typename Scalar>
Var<Scalar> rope_rotate(const Var<Scalar>& x, double base = 10000.0);

/// Where a positional encoding enters attention. Unset hooks are identity.
template <typename Scalar>
struct AttentionHooks {
  /// Applied once to the encoded [D,T,F] representation.
  std::function<Var<Scalar>(const Var<Scalar>&)> input_add;
  /// Bias [H, L, L] added to the attention logits.
  std::function<Var<Scalar>(Index)> score_bias;
  /// Applied to queries and keys [..., L, d_head].
  std::function<Var<Scalar>(const Var<Scalar>&)> qk_transform;
};

/// Hooks for a PE kind. KERPLE needs `kerple`; other kinds ignore it.
template <typename Scalar>
AttentionHooks<Scalar> attach(PEKind kind, const KerpleParams<Scalar>* kerple = nullptr,
                              double rope_base = 10000.0);

}  // namespace pelab
