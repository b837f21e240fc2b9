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

#include <vector>

#include "pelab/ops.hpp"

namespace pelab::detail {

/// Strides of two inputs aligned to a broadcast output shape (0 on
/// broadcast axes).
struct BroadcastPlan {
  Shape out;
  std::vector<Index> stride_a;
  std::vector<Index> stride_b;
};

BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b);

template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const int rank = static_cast<int>(plan.out.size());
  const Index n = shape_numel(plan.out);
  std::vector<Index> idx(rank, 0);
  Index ia = 0;
  Index ib = 0;
  for (Index o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (int ax = rank - 1; ax >= 0; --ax) {
      ++idx[ax];
      ia += plan.stride_a[ax];
      ib += plan.stride_b[ax];
      if (idx[ax] < plan.out[ax]) break;
      ia -= plan.stride_a[ax] * plan.out[ax];
      ib -= plan.stride_b[ax] * plan.out[ax];
      idx[ax] = 0;
    }
  }
}

template <typename Scalar>
Tensor<Scalar> permute_tensor(const Tensor<Scalar>& x, const std::vector<int>& order);

std::vector<int> inverse_permutation(const std::vector<int>& order);

/// Row-major Eigen array view helpers.
template <typename Scalar>
using ArrayRM = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ArrayMap = Eigen::Map<ArrayRM<Scalar>>;
template <typename Scalar>
using ConstArrayMap = Eigen::Map<const ArrayRM<Scalar>>;

}  // namespace pelab::detail

#define PELAB_INSTANTIATE_FLOAT_DOUBLE(MACRO) \
  MACRO(float)                                \
  MACRO(double)
