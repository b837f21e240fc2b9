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

#include "pelab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pelab {

namespace {

void check_same(const Waveform& a, const Waveform& b, const char* what) {
  if (a.channels() != b.channels() || a.length() != b.length()) {
    throw ShapeError(std::string(what) + ": estimate [" + std::to_string(a.channels()) + ", " +
                     std::to_string(a.length()) + "] vs reference [" + std::to_string(b.channels()) + ", " +
                     std::to_string(b.length()) + "]");
  }
}

double energy(const SampleMatrix& x) { return x.square().sum(); }

double ratio_db(double num, double den) { return 10.0 * std::log10(num / den); }

}  // namespace

Db cap_db(double value, double cap) {
  if (std::isnan(value)) throw NumericError("metric is NaN");
  if (value > cap) return {cap, true};
  if (value < -cap) return {-cap, true};
  return {value, false};
}

Db si_sdr(const Waveform& est, const Waveform& ref, double cap) {
  check_same(est, ref, "si_sdr");
  const double rr = energy(ref.samples);
  if (rr == 0.0) throw ConfigError("si_sdr: silent reference; use snr_loss_zero_ok");
  const double alpha = (est.samples * ref.samples).sum() / rr;
  const double target = alpha * alpha * rr;
  const double noise = energy(alpha * ref.samples - est.samples);
  if (noise == 0.0) return {cap, true};
  if (target == 0.0) return {-cap, true};
  return cap_db(ratio_db(target, noise), cap);
}

double si_sdri(const Waveform& est, const Waveform& ref, const Waveform& mix, double cap) {
  return si_sdr(est, ref, cap).value - si_sdr(mix, ref, cap).value;
}

Db usdr(const std::vector<Waveform>& est, const std::vector<Waveform>& ref, double cap) {
  if (est.size() != ref.size()) {
    throw ShapeError("usdr: " + std::to_string(est.size()) + " estimates for " + std::to_string(ref.size()) +
                     " references");
  }
  double total = 0.0;
  int used = 0;
  bool any_capped = false;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    check_same(est[i], ref[i], "usdr");
    const double rr = energy(ref[i].samples);
    if (rr == 0.0) continue;
    const double err = energy(ref[i].samples - est[i].samples);
    const Db d = err == 0.0 ? Db{cap, true} : cap_db(ratio_db(rr, err), cap);
    total += d.value;
    any_capped = any_capped || d.capped;
    ++used;
  }
  if (used == 0) throw ConfigError("usdr: every reference stem is silent");
  return {total / used, any_capped};
}

double snr_loss_zero_ok(const Waveform& est, const Waveform& ref, const Waveform& mix, double tau) {
  check_same(est, ref, "snr_loss_zero_ok");
  check_same(mix, ref, "snr_loss_zero_ok");
  const double rr = energy(ref.samples);
  if (rr > 0.0) return 10.0 * std::log10(energy(ref.samples - est.samples) + tau * rr) - 10.0 * std::log10(rr);
  const double floor = tau * energy(mix.samples);
  if (floor == 0.0) return 0.0;
  return 10.0 / std::log(10.0) * std::log1p(energy(est.samples) / floor);
}

std::vector<int> pit_assign(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ShapeError("pit_assign: cost matrix must be square");
  if (n > 8) throw ConfigError("pit_assign: exhaustive search limited to 8 sources");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  // Totals are accumulated in estimate order so that reordering the
  // references cannot change them through rounding.
  std::vector<double> by_est(n);
  do {
    for (int i = 0; i < n; ++i) by_est[perm[i]] = cost(i, perm[i]);
    double c = 0.0;
    for (int j = 0; j < n; ++j) c += by_est[j];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

template <typename Scalar>
Var<Scalar> si_sdr_loss(const Var<Scalar>& est, const Tensor<Scalar>& ref, double eps) {
  if (est.shape() != ref.shape()) {
    throw ShapeError("si_sdr_loss: estimate " + shape_to_string(est.shape()) + " vs reference " +
                     shape_to_string(ref.shape()));
  }
  const auto r = Var<Scalar>::constant(ref);
  const Scalar rr = ref.array().square().sum();
  const Scalar e = static_cast<Scalar>(eps);
  // alpha = <est, ref> / (|ref|^2 + eps)
  auto alpha = scale(sum(mul(est, r)), Scalar(1) / (rr + e));
  auto target = mul(alpha, r);
  auto num = add_scalar(scale(square(alpha), rr), e);
  auto den = add_scalar(sum(square(sub(target, est))), e);
  const Scalar k = Scalar(10) / std::log(Scalar(10));
  return scale(sub(log(den), log(num)), k);
}

template <typename Scalar>
Var<Scalar> snr_zero_ok_loss(const Var<Scalar>& est, const Tensor<Scalar>& ref, const Tensor<Scalar>& mix,
                             double tau) {
  if (est.shape() != ref.shape() || mix.shape() != ref.shape()) {
    throw ShapeError("snr_zero_ok_loss: estimate " + shape_to_string(est.shape()) + ", reference " +
                     shape_to_string(ref.shape()) + ", mixture " + shape_to_string(mix.shape()));
  }
  const Scalar k = Scalar(10) / std::log(Scalar(10));
  const Scalar rr = ref.array().square().sum();
  if (rr > Scalar(0)) {
    auto err = sum(square(sub(Var<Scalar>::constant(ref), est)));
    return scale(add_scalar(log(add_scalar(err, Scalar(tau) * rr)), -std::log(rr)), k);
  }
  const Scalar floor = Scalar(tau) * mix.array().square().sum();
  if (floor == Scalar(0)) return scale(sum(est), Scalar(0));
  return scale(add_scalar(log(add_scalar(sum(square(est)), floor)), -std::log(floor)), k);
}

template <typename Scalar>
PitResult<Scalar> pit_loss(const std::vector<Var<Scalar>>& est, const std::vector<Tensor<Scalar>>& ref,
                           const PairLoss<Scalar>& base) {
  const Index n = static_cast<Index>(ref.size());
  if (static_cast<Index>(est.size()) != n || n == 0) {
    throw ShapeError("pit_loss: " + std::to_string(est.size()) + " estimates for " + std::to_string(n) +
                     " references");
  }
  std::vector<Var<Scalar>> pair(n * n);
  Eigen::MatrixXd cost(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      pair[i * n + j] = base(est[j], ref[i]);
      cost(i, j) = static_cast<double>(pair[i * n + j].value()[0]);
    }
  }
  PitResult<Scalar> out;
  out.perm = pit_assign(cost);
  std::vector<Var<Scalar>> chosen(n);
  for (Index i = 0; i < n; ++i) chosen[out.perm[i]] = pair[i * n + out.perm[i]];
  Var<Scalar> total = chosen[0];
  for (Index j = 1; j < n; ++j) total = add(total, chosen[j]);
  out.loss = scale(total, Scalar(1) / static_cast<Scalar>(n));
  return out;
}

#define PELAB_INSTANTIATE(S)                                                                        \
  template Var<S> si_sdr_loss(const Var<S>&, const Tensor<S>&, double);                             \
  template Var<S> snr_zero_ok_loss(const Var<S>&, const Tensor<S>&, const Tensor<S>&, double);      \
  template PitResult<S> pit_loss(const std::vector<Var<S>>&, const std::vector<Tensor<S>>&,         \
                                 const PairLoss<S>&);
PELAB_INSTANTIATE(float)
PELAB_INSTANTIATE(double)
#undef PELAB_INSTANTIATE

}  // namespace pelab
