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

#include "pelab/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace pelab {

template <typename Scalar>
AdamW<Scalar>::AdamW(ParameterStore<Scalar>& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.var.shape());
    v_.emplace_back(e.var.shape());
  }
}

template <typename Scalar>
void AdamW<Scalar>::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<Scalar>(cfg_.beta1);
  const auto b2 = static_cast<Scalar>(cfg_.beta2);
  const auto step_size = static_cast<Scalar>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<Scalar>(cfg_.eps);
  auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& var = entries[i].var;
    auto& p = var.mutable_value().array();
    if (entries[i].decay && cfg_.weight_decay != 0.0) p *= static_cast<Scalar>(1.0 - lr * cfg_.weight_decay);
    if (!var.has_grad()) {
      m_[i].array() *= b1;
      v_[i].array() *= b2;
    } else {
      const auto& g = var.grad().array();
      m_[i].array() = b1 * m_[i].array() + (Scalar(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (Scalar(1) - b2) * g.square();
    }
    p -= step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

template <typename Scalar>
double grad_norm(const ParameterStore<Scalar>& params) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.var.has_grad()) continue;
    const double s = e.var.grad().array().template cast<double>().square().sum();
    if (!std::isfinite(s)) throw NumericError("non-finite gradient in parameter " + e.name);
    sq += s;
  }
  return std::sqrt(sq);
}

template <typename Scalar>
double clip_grad_norm(ParameterStore<Scalar>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm <= max_norm) return 1.0;
  double scale = max_norm / norm;
  auto apply = [&](double f) {
    for (auto& e : params.entries()) {
      if (e.var.has_grad()) e.var.grad_buffer().array() *= static_cast<Scalar>(f);
    }
  };
  apply(scale);
  // Rounding in Scalar may leave the norm a few ulps above the bound.
  for (double n = grad_norm(params); n > max_norm; n = grad_norm(params)) {
    const double shrink = 1.0 - 4.0 * static_cast<double>(std::numeric_limits<Scalar>::epsilon());
    apply(shrink);
    scale *= shrink;
  }
  return scale;
}

double lr_at(Index step, const ScheduleConfig& cfg, const ScheduleState& state) {
  if (step < 0) return 0.0;
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * (static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
  }
  return cfg.peak_lr * std::pow(cfg.decay_factor, state.decay_events);
}

bool schedule_update(ScheduleState& state, const ScheduleConfig& cfg, Index epoch, double val_loss) {
  const bool improved = val_loss < state.best_val;
  if (improved) {
    state.best_val = val_loss;
    state.epochs_without_improvement = 0;
    state.plateau_counter = 0;
  } else {
    ++state.epochs_without_improvement;
    if (epoch >= cfg.constant_epochs) ++state.plateau_counter;
  }
  if (state.plateau_counter >= cfg.plateau_patience) {
    ++state.decay_events;
    state.plateau_counter = 0;
  }
  if (state.epochs_without_improvement >= cfg.early_stop_patience) state.stop = true;
  return improved;
}

LossKind parse_loss_kind(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "si_sdr" || l == "sisdr") return LossKind::kSiSdr;
  if (l == "snr_zero_ok" || l == "snr") return LossKind::kSnrZeroOk;
  throw ConfigError("unknown loss '" + s + "' (expected si_sdr or snr_zero_ok)");
}

std::string loss_name(LossKind k) { return k == LossKind::kSiSdr ? "si_sdr" : "snr_zero_ok"; }

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"model", c.model},
      {"seed", c.seed},
      {"data_seed", c.data_seed},
      {"epochs", c.epochs},
      {"steps_per_epoch", c.steps_per_epoch},
      {"batch", c.batch},
      {"chunk_seconds", c.chunk_seconds},
      {"rate", c.rate},
      {"drop_prob", c.drop_prob},
      {"fixed_mixtures", c.fixed_mixtures},
      {"val_items", c.val_items},
      {"validate_on_train", c.validate_on_train},
      {"loss", loss_name(c.loss)},
      {"max_grad_norm", c.max_grad_norm},
      {"adam",
       {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}, {"weight_decay", c.adam.weight_decay}}},
      {"schedule",
       {{"warmup_steps", c.schedule.warmup_steps},
        {"peak_lr", c.schedule.peak_lr},
        {"constant_epochs", c.schedule.constant_epochs},
        {"decay_factor", c.schedule.decay_factor},
        {"plateau_patience", c.schedule.plateau_patience},
        {"early_stop_patience", c.schedule.early_stop_patience}}},
      {"precision", c.precision == Precision::kFloat ? "float" : "double"},
      {"stft", {{"window_duration", c.stft.window_duration}, {"hop_duration", c.stft.hop_duration}}},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const nlohmann::json& obj, const char* key, auto& field) {
    if (obj.contains(key)) obj.at(key).get_to(field);
  };
  if (j.contains("model")) c.model = j.at("model").get<LocoformerConfig>();
  get(j, "seed", c.seed);
  get(j, "data_seed", c.data_seed);
  get(j, "epochs", c.epochs);
  get(j, "steps_per_epoch", c.steps_per_epoch);
  get(j, "batch", c.batch);
  get(j, "chunk_seconds", c.chunk_seconds);
  get(j, "rate", c.rate);
  get(j, "drop_prob", c.drop_prob);
  get(j, "fixed_mixtures", c.fixed_mixtures);
  get(j, "val_items", c.val_items);
  get(j, "validate_on_train", c.validate_on_train);
  get(j, "max_grad_norm", c.max_grad_norm);
  if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    get(a, "beta1", c.adam.beta1);
    get(a, "beta2", c.adam.beta2);
    get(a, "eps", c.adam.eps);
    get(a, "weight_decay", c.adam.weight_decay);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    get(s, "warmup_steps", c.schedule.warmup_steps);
    get(s, "peak_lr", c.schedule.peak_lr);
    get(s, "constant_epochs", c.schedule.constant_epochs);
    get(s, "decay_factor", c.schedule.decay_factor);
    get(s, "plateau_patience", c.schedule.plateau_patience);
    get(s, "early_stop_patience", c.schedule.early_stop_patience);
  }
  if (j.contains("precision")) {
    const auto p = j.at("precision").get<std::string>();
    if (p == "float") {
      c.precision = Precision::kFloat;
    } else if (p == "double") {
      c.precision = Precision::kDouble;
    } else {
      throw ConfigError("precision must be float or double, got '" + p + "'");
    }
  }
  if (j.contains("stft")) {
    get(j.at("stft"), "window_duration", c.stft.window_duration);
    get(j.at("stft"), "hop_duration", c.stft.hop_duration);
  }
  if (c.epochs < 0 || c.steps_per_epoch < 1 || c.batch < 1) {
    throw ConfigError("epochs >= 0, steps_per_epoch >= 1 and batch >= 1 required");
  }
}

Mixture training_mixture(const TrainConfig& cfg, Index step, Index b) {
  const auto n = static_cast<int>(cfg.model.N);
  if (cfg.fixed_mixtures > 0) {
    const Index i = (step * cfg.batch + b) % cfg.fixed_mixtures;
    return dynamic_mix(make_recipe(n, cfg.chunk_seconds, cfg.rate, mix_seed(cfg.data_seed, static_cast<std::uint64_t>(i)),
                                   cfg.model.M, cfg.drop_prob));
  }
  const auto stream = static_cast<std::uint64_t>(step * cfg.batch + b);
  return dynamic_mix(make_recipe(n, cfg.chunk_seconds, cfg.rate, mix_seed(mix_seed(cfg.data_seed, 99), stream),
                                 cfg.model.M, cfg.drop_prob));
}

namespace {

template <typename Scalar>
Tensor<Scalar> tensor_of(const Waveform& w) {
  Tensor<Scalar> t(Shape{w.channels(), w.length()});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(w.samples.data()[i]);
  return t;
}

// Model output as [N, M, len] waveforms in the original scale.
template <typename Scalar>
Var<Scalar> run_model(const Locoformer<Scalar>& model, const Waveform& mix, const StftConfig& cfg, double* rms_out) {
  auto [xn, rms] = rms_normalize(mix);
  *rms_out = rms;
  const auto spec = stft(xn, cfg);
  auto y = model.forward(Var<Scalar>::constant(spec.data.template cast<Scalar>()));
  auto w = istft(y, cfg, mix.sampling_rate, mix.length());
  return scale(w, static_cast<Scalar>(rms));
}

}  // namespace

namespace {

template <typename Scalar>
PitResult<Scalar> pit_on_output(const Var<Scalar>& w, const Mixture& m, LossKind loss) {
  using V = Var<Scalar>;
  const Index n = static_cast<Index>(m.refs.size());
  const Index channels = m.mixture.channels(), len = m.mixture.length();
  std::vector<V> est;
  std::vector<Tensor<Scalar>> ref;
  for (Index k = 0; k < n; ++k) {
    est.push_back(reshape(slice(w, 0, k, 1), {channels, len}));
    ref.push_back(tensor_of<Scalar>(m.refs[k]));
  }
  const auto mix = tensor_of<Scalar>(m.mixture);
  PairLoss<Scalar> base = [&](const V& e, const Tensor<Scalar>& r) {
    if (loss == LossKind::kSiSdr && r.array().square().sum() > Scalar(0)) return si_sdr_loss(e, r);
    return snr_zero_ok_loss(e, r, mix);
  };
  return pit_loss(est, ref, base);
}

template <typename Scalar>
std::vector<Waveform> waveforms_of(const Tensor<Scalar>& w, const Waveform& mix, Index n) {
  const Index channels = mix.channels(), len = mix.length();
  std::vector<Waveform> out;
  for (Index k = 0; k < n; ++k) {
    Waveform e(channels, len, mix.sampling_rate);
    for (Index i = 0; i < channels * len; ++i) e.samples.data()[i] = static_cast<double>(w[k * channels * len + i]);
    out.push_back(std::move(e));
  }
  return out;
}

// Sum of SI-SDRi over the sources of one item, sources matched by SI-SDR.
double item_sisdri_sum(const std::vector<Waveform>& est, const Mixture& m) {
  const Index n = static_cast<Index>(m.refs.size());
  if (static_cast<Index>(est.size()) != n) throw ConfigError("separator returned the wrong number of sources");
  Eigen::MatrixXd cost(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) cost(i, j) = -si_sdr(est[j], m.refs[i]).value;
  }
  const auto perm = pit_assign(cost);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += si_sdri(est[perm[i]], m.refs[i], m.mixture);
  return total;
}

}  // namespace

template <typename Scalar>
PitResult<Scalar> mixture_loss(const Locoformer<Scalar>& model, const Mixture& m, LossKind loss,
                               const StftConfig& stft_cfg) {
  const Index n = static_cast<Index>(m.refs.size());
  if (n != model.config().N) {
    throw ConfigError("mixture has " + std::to_string(n) + " references for a model with N=" +
                      std::to_string(model.config().N));
  }
  double rms = 0.0;
  return pit_on_output(run_model(model, m.mixture, stft_cfg, &rms), m, loss);
}

template <typename Scalar>
std::vector<Waveform> separate(const Locoformer<Scalar>& model, const Waveform& mix, const StftConfig& stft_cfg) {
  NoGradGuard guard;
  double rms = 0.0;
  return waveforms_of(run_model(model, mix, stft_cfg, &rms).value(), mix, model.config().N);
}

double mean_sisdri(const std::vector<EvalItem>& items, const SeparationFn& sep) {
  if (items.empty()) throw ConfigError("mean_sisdri: empty evaluation set");
  double total = 0.0;
  Index count = 0;
  for (const auto& item : items) {
    total += item_sisdri_sum(sep(item.mix.mixture), item.mix);
    count += static_cast<Index>(item.mix.refs.size());
  }
  return total / static_cast<double>(count);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,step,lr,train_loss,val_loss,val_sisdri\n";
  char line[256];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%td,%td,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.step, r.lr, r.train_loss,
                  r.val_loss, r.val_sisdri);
    out += line;
  }
  return out;
}

template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig& cfg, const std::string& out_dir, const EpochCallback& on_epoch) {
  cfg.model.validate();
  TrainResult<Scalar> res{Locoformer<Scalar>(cfg.model, cfg.seed), {}, 0, false, false, "", 1.0, 0.0};
  auto& model = res.model;
  auto& params = model.params();
  AdamW<Scalar> opt(params, cfg.adam);
  ScheduleState sched;

  std::vector<EvalItem> val;
  if (cfg.validate_on_train) {
    const Index count = cfg.fixed_mixtures > 0 ? cfg.fixed_mixtures : cfg.batch;
    for (Index i = 0; i < count; ++i) {
      EvalItem item;
      item.id = "train" + std::to_string(i);
      item.mix = training_mixture(cfg, i / cfg.batch, i % cfg.batch);
      val.push_back(std::move(item));
    }
  } else {
    val = make_eval_set(cfg.val_items, cfg.chunk_seconds, cfg.rate, mix_seed(cfg.data_seed, 7777),
                        static_cast<int>(cfg.model.N), cfg.model.M);
  }

  auto snapshot = [&] {
    std::vector<Tensor<Scalar>> s;
    for (const auto& e : params.entries()) s.push_back(e.var.value());
    return s;
  };
  auto restore = [&](const std::vector<Tensor<Scalar>>& s) {
    auto& entries = params.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].var.mutable_value() = s[i];
  };
  auto best = snapshot();
  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  auto write_outputs = [&] {
    if (out_dir.empty()) return;
    std::ofstream(fs::path(out_dir) / "history.csv") << history_csv(res.history);
  };

  Index step = 0;
  for (Index epoch = 0; epoch < cfg.epochs && !sched.stop; ++epoch) {
    double train_total = 0.0;
    double lr = 0.0;
    try {
      for (Index s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
        params.zero_grad();
        double step_loss = 0.0;
        for (Index b = 0; b < cfg.batch; ++b) {
          const auto m = training_mixture(cfg, step, b);
          auto r = mixture_loss(model, m, cfg.loss, cfg.stft);
          step_loss += static_cast<double>(r.loss.value()[0]);
          if (r.loss.requires_grad()) backward(scale(r.loss, Scalar(1) / static_cast<Scalar>(cfg.batch)));
        }
        if (!std::isfinite(step_loss)) throw NumericError("non-finite training loss at step " + std::to_string(step));
        res.last_clip_scale = clip_grad_norm(params, cfg.max_grad_norm);
        res.max_post_clip_norm = std::max(res.max_post_clip_norm, grad_norm(params));
        lr = lr_at(step + 1, cfg.schedule, sched);
        opt.step(lr);
        train_total += step_loss / static_cast<double>(cfg.batch);
      }
    } catch (const NumericError& e) {
      // The failing step never reached the optimizer; parameters are the
      // last good ones.
      res.aborted = true;
      res.abort_reason = e.what();
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.lr = lr;
    rec.train_loss = train_total / static_cast<double>(cfg.steps_per_epoch);
    {
      // One forward pass per item serves both the loss and SI-SDRi.
      NoGradGuard guard;
      double vl = 0.0, vs = 0.0;
      Index sources = 0;
      for (const auto& item : val) {
        double rms = 0.0;
        const auto w = run_model(model, item.mix.mixture, cfg.stft, &rms);
        vl += static_cast<double>(pit_on_output(w, item.mix, cfg.loss).loss.value()[0]);
        vs += item_sisdri_sum(waveforms_of(w.value(), item.mix.mixture, cfg.model.N), item.mix);
        sources += static_cast<Index>(item.mix.refs.size());
      }
      rec.val_loss = vl / static_cast<double>(val.size());
      rec.val_sisdri = vs / static_cast<double>(sources);
    }
    res.history.push_back(rec);
    if (schedule_update(sched, cfg.schedule, epoch, rec.val_loss)) {
      best = snapshot();
      if (!out_dir.empty()) {
        save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), model,
                        nlohmann::json{{"epoch", epoch}, {"step", step}, {"val_loss", rec.val_loss}});
      }
    }
    write_outputs();
    if (on_epoch) on_epoch(rec);
  }
  res.steps = step;
  res.early_stopped = sched.stop;
  params.zero_grad();
  if (!res.history.empty() || res.aborted) restore(best);
  if (!out_dir.empty() && res.history.empty()) {
    save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), model, nlohmann::json{{"epoch", -1}, {"step", 0}});
  }
  write_outputs();
  return res;
}

#define PELAB_INSTANTIATE(S)                                                                                   \
  template class AdamW<S>;                                                                                     \
  template double grad_norm(const ParameterStore<S>&);                                                         \
  template double clip_grad_norm(ParameterStore<S>&, double);                                                  \
  template PitResult<S> mixture_loss(const Locoformer<S>&, const Mixture&, LossKind, const StftConfig&);        \
  template std::vector<Waveform> separate(const Locoformer<S>&, const Waveform&, const StftConfig&);           \
  template TrainResult<S> train(const TrainConfig&, const std::string&, const EpochCallback&);
PELAB_INSTANTIATE(float)
PELAB_INSTANTIATE(double)
#undef PELAB_INSTANTIATE

}  // namespace pelab
