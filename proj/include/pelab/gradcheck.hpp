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
#include <vector>

#include "pelab/autodiff.hpp"

namespace pelab {

/// How a tensor-valued op is reduced to the scalar whose gradient is checked.
enum class GradCheckReduction {
  kSum,               // plain sum of all outputs
  kRandomProjection,  // sum of outputs weighted by fixed random values
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using GradCheckFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Central finite-difference check of reverse-mode gradients. Every
/// coordinate of every input is perturbed by +-h; the error per coordinate
/// is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// A random projection avoids ops whose plain sum is constant (softmax).
GradCheckResult finite_diff_check(const GradCheckFn& op, const std::vector<Tensor<double>>& inputs,
                                  double h = 1e-5,
                                  GradCheckReduction reduction = GradCheckReduction::kRandomProjection,
                                  std::uint64_t seed = 7);

/// Same check against leaves held elsewhere (e.g. model parameters):
/// `forward` recomputes the output from the current values of `leaves`,
/// which are perturbed in place and restored.
GradCheckResult finite_diff_check_leaves(const std::function<Var<double>()>& forward,
                                         std::vector<Var<double>> leaves, double h = 1e-5,
                                         std::uint64_t seed = 7);

}  // namespace pelab
