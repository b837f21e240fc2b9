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

#include "pelab/gradcheck.hpp"

#include <cmath>
#include <random>

#include "pelab/ops.hpp"

namespace pelab {

GradCheckResult finite_diff_check(const GradCheckFn& op, const std::vector<Tensor<double>>& inputs,
                                  double h, GradCheckReduction reduction, std::uint64_t seed) {
  Tensor<double> weights;
  auto reduce = [&](const Var<double>& y) {
    if (reduction == GradCheckReduction::kSum) return sum(y);
    if (weights.empty() || weights.shape() != y.shape()) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.5, 1.5);
      weights = Tensor<double>(y.shape());
      for (Index i = 0; i < weights.size(); ++i) weights[i] = (rng() & 1 ? 1.0 : -1.0) * u(rng);
    }
    return sum(mul(y, Var<double>::constant(weights)));
  };

  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(Var<double>::parameter(t));
  backward(reduce(op(vars)));

  auto evaluate = [&](std::vector<Tensor<double>>& xs) {
    NoGradGuard guard;
    std::vector<Var<double>> in;
    in.reserve(xs.size());
    for (const auto& t : xs) in.push_back(Var<double>::constant(t));
    return reduce(op(in)).value().item();
  };

  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (Index i = 0; i < probe[k].size(); ++i) {
      const double saved = probe[k][i];
      probe[k][i] = saved + h;
      const double up = evaluate(probe);
      probe[k][i] = saved - h;
      const double down = evaluate(probe);
      probe[k][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = vars[k].has_grad() ? vars[k].grad()[i] : 0.0;
      const double err =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (err > result.max_relative_error || (k == 0 && i == 0)) {
        result = {err, k, i, analytic, numeric};
      }
    }
  }
  return result;
}

GradCheckResult finite_diff_check_leaves(const std::function<Var<double>()>& forward,
                                         std::vector<Var<double>> leaves, double h, std::uint64_t seed) {
  Tensor<double> weights;
  auto reduce = [&](const Var<double>& y) {
    if (weights.empty() || weights.shape() != y.shape()) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.5, 1.5);
      weights = Tensor<double>(y.shape());
      for (Index i = 0; i < weights.size(); ++i) weights[i] = (rng() & 1 ? 1.0 : -1.0) * u(rng);
    }
    return sum(mul(y, Var<double>::constant(weights)));
  };
  for (auto& v : leaves) v.zero_grad();
  backward(reduce(forward()));
  std::vector<Tensor<double>> analytic;
  for (auto& v : leaves) analytic.push_back(v.has_grad() ? v.grad() : Tensor<double>(v.shape()));

  auto evaluate = [&] {
    NoGradGuard guard;
    return reduce(forward()).value().item();
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto& value = leaves[k].mutable_value();
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = evaluate();
      value[i] = saved - h;
      const double down = evaluate();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (err > result.max_relative_error || (k == 0 && i == 0)) result = {err, k, i, a, numeric};
    }
  }
  for (auto& v : leaves) v.zero_grad();
  return result;
}

}  // namespace pelab
