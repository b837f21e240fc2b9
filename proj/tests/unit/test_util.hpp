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

#include <cstdint>
#include <functional>
#include <random>

#include "pelab/ops.hpp"

namespace pelab::testing {

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline double inner(const Tensor<double>& a, const Tensor<double>& b) {
  return (a.array() * b.array()).sum();
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

/// Dense matrix of a linear map, built column by column from unit inputs.
/// Rows index the flattened output, columns the flattened input.
inline Eigen::MatrixXd dense_matrix(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                    const Shape& in_shape) {
  Tensor<double> e(in_shape);
  const Index n = e.size();
  Eigen::MatrixXd m;
  for (Index j = 0; j < n; ++j) {
    e.set_zero();
    e[j] = 1.0;
    const auto y = f(e);
    if (j == 0) m.resize(y.size(), n);
    m.col(j) = y.array().matrix();
  }
  return m;
}

inline Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }

}  // namespace pelab::testing
