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
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pelab/ops.hpp"
#include "pelab/signal.hpp"

namespace pelab {

/// Report-side cap in dB; values beyond it are clamped and flagged.
inline constexpr double kMetricCapDb = 60.0;
/// Smoothing of the differentiable SI-SDR loss.
inline constexpr double kSiSdrEps = 1e-8;
/// Soft ceiling of the zero-tolerant SNR loss (30 dB).
inline constexpr double kSnrTau = 1e-3;

/// One scalar result with its evaluation condition.
struct MetricRecord {
  std::string pe;
  std::string metric;
  std::string condition;
  double duration_s = 0.0;
  double rate_hz = 0.0;
  std::uint64_t seed = 0;
  double value_db = 0.0;
  int source = -1;  // -1 for averages over sources
  bool capped = false;
};

/// A capped dB value.
struct Db {
  double value = 0.0;
  bool capped = false;
};

Db cap_db(double value, double cap = kMetricCapDb);

/// Scale-invariant SDR over all channels; throws ConfigError for a silent
/// reference and ShapeError on a size mismatch.
Db si_sdr(const Waveform& est, const Waveform& ref, double cap = kMetricCapDb);
/// si_sdr(est, ref) - si_sdr(mix, ref), each term capped first.
double si_sdri(const Waveform& est, const Waveform& ref, const Waveform& mix, double cap = kMetricCapDb);

/// Utterance-level SDR averaged over stems with a non-silent reference.
/// Throws ConfigError when every reference is silent.
Db usdr(const std::vector<Waveform>& est, const std::vector<Waveform>& ref, double cap = kMetricCapDb);

/// Negative SNR that tolerates all-zero references.
double snr_loss_zero_ok(const Waveform& est, const Waveform& ref, const Waveform& mix, double tau = kSnrTau);

/// Assignment minimizing the summed cost over all N! permutations;
/// perm[i] is the estimate index matched to reference i. Ties keep the
/// lexicographically first permutation.
std::vector<int> pit_assign(const Eigen::MatrixXd& cost);

/// Differentiable losses; `ref` and `mix` are constants of est's shape.
template <typename Scalar>
Var<Scalar> si_sdr_loss(const Var<Scalar>& est, const Tensor<Scalar>& ref, double eps = kSiSdrEps);

template <typename Scalar>
Var<Scalar> snr_zero_ok_loss(const Var<Scalar>& est, const Tensor<Scalar>& ref, const Tensor<Scalar>& mix,
                             double tau = kSnrTau);

template <typename Scalar>
using PairLoss = std::function<Var<Scalar>(const Var<Scalar>& est, const Tensor<Scalar>& ref)>;

template <typename Scalar>
struct PitResult {
  Var<Scalar> loss;       // mean pair loss of the chosen assignment
  std::vector<int> perm;  // perm[i] = estimate matched to reference i
};

/// Permutation-invariant training loss. Pair losses are evaluated for all
/// N^2 pairs; only the selected assignment enters the returned graph.
template <typename Scalar>
PitResult<Scalar> pit_loss(const std::vector<Var<Scalar>>& est, const std::vector<Tensor<Scalar>>& ref,
                           const PairLoss<Scalar>& base);

}  // namespace pelab
