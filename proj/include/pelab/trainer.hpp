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
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "pelab/data_synth.hpp"
#include "pelab/model.hpp"
#include "pelab/objectives.hpp"

namespace pelab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled-decay Adam over a ParameterStore. Entries with decay == false
/// (gains, biases, KERPLE parameters) are not decayed.
template <typename Scalar>
class AdamW {
 public:
  AdamW(ParameterStore<Scalar>& params, AdamWConfig cfg = {});

  /// p <- p - lr*wd*p (masked), then the bias-corrected Adam update.
  /// Parameters without a gradient are treated as having a zero gradient.
  void step(double lr);
  Index steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  ParameterStore<Scalar>& params_;
  AdamWConfig cfg_;
  std::vector<Tensor<Scalar>> m_, v_;
  Index t_ = 0;
};

/// Global L2 norm over every parameter gradient.
template <typename Scalar>
double grad_norm(const ParameterStore<Scalar>& params);

/// Rescales all gradients so the global norm is at most max_norm and
/// returns the applied factor. A NaN/Inf gradient throws NumericError
/// naming the parameter.
template <typename Scalar>
double clip_grad_norm(ParameterStore<Scalar>& params, double max_norm = 5.0);

struct ScheduleConfig {
  Index warmup_steps = 4000;
  double peak_lr = 1e-3;
  Index constant_epochs = 0;  // plateau decay is only considered afterwards
  double decay_factor = 0.5;
  int plateau_patience = 3;
  int early_stop_patience = 10;
};

struct ScheduleState {
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_without_improvement = 0;
  int plateau_counter = 0;
  int decay_events = 0;
  bool stop = false;
};

/// Linear warmup to peak_lr, then peak_lr * decay_factor^decay_events.
double lr_at(Index step, const ScheduleConfig& cfg, const ScheduleState& state = {});

/// Feeds one validation loss (epoch is 0-based) and updates plateau and
/// early-stop bookkeeping. Returns true if this epoch is a new best.
bool schedule_update(ScheduleState& state, const ScheduleConfig& cfg, Index epoch, double val_loss);

enum class LossKind {
  kSiSdr,      // SI-SDR; silent references fall back to the zero-tolerant SNR loss
  kSnrZeroOk,  // zero-tolerant SNR for every source
};

LossKind parse_loss_kind(const std::string& s);
std::string loss_name(LossKind k);

enum class Precision { kFloat, kDouble };

struct TrainConfig {
  LocoformerConfig model;
  std::uint64_t seed = 0;        // model initialisation
  std::uint64_t data_seed = 1;   // mixtures
  Index epochs = 40;
  Index steps_per_epoch = 50;
  Index batch = 2;
  double chunk_seconds = 1.0;
  double rate = 8000.0;
  double drop_prob = 0.1;
  /// 0: fresh dynamic mixture every step; otherwise cycle this many fixed
  /// mixtures.
  Index fixed_mixtures = 0;
  /// Validation mixtures; ignored when validate_on_train is set.
  Index val_items = 8;
  bool validate_on_train = false;
  LossKind loss = LossKind::kSiSdr;
  double max_grad_norm = 5.0;
  AdamWConfig adam;
  ScheduleConfig schedule;
  Precision precision = Precision::kFloat;
  StftConfig stft;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  Index epoch = 0;
  Index step = 0;  // optimizer steps completed
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_sisdri = 0.0;
};

template <typename Scalar>
struct TrainResult {
  Locoformer<Scalar> model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  Index steps = 0;
  bool early_stopped = false;
  bool aborted = false;
  std::string abort_reason;
  double last_clip_scale = 1.0;
  double max_post_clip_norm = 0.0;
};

/// Per-epoch callback, e.g. for progress logging.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Deterministic training; identical (config, thread count) gives an
/// identical history. When out_dir is non-empty, best.ckpt and history.csv
/// are written there as training proceeds.
template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig& cfg, const std::string& out_dir = "",
                          const EpochCallback& on_epoch = nullptr);

/// Training mixtures of step `step`, batch slot `b`.
Mixture training_mixture(const TrainConfig& cfg, Index step, Index b);

/// PIT loss of one mixture; the graph reaches the model parameters.
template <typename Scalar>
PitResult<Scalar> mixture_loss(const Locoformer<Scalar>& model, const Mixture& m, LossKind loss,
                               const StftConfig& stft = {});

/// Inference on one waveform: RMS normalisation, STFT, model, iSTFT,
/// rescaling. Returns N waveforms shaped like the input.
template <typename Scalar>
std::vector<Waveform> separate(const Locoformer<Scalar>& model, const Waveform& mix, const StftConfig& stft = {});

/// Mean SI-SDRi over items and sources, sources matched by best SI-SDR.
double mean_sisdri(const std::vector<EvalItem>& items, const SeparationFn& sep);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace pelab
