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
#include <utility>
#include <vector>

#include "pelab/autodiff.hpp"

namespace pelab {

using SampleMatrix = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Multi-channel audio: samples [M, length] at `sampling_rate` Hz.
struct Waveform {
  SampleMatrix samples;
  double sampling_rate = 0.0;

  Waveform() = default;
  Waveform(SampleMatrix s, double rate);
  Waveform(Index channels, Index length, double rate);

  Index channels() const { return samples.rows(); }
  Index length() const { return samples.cols(); }
  double duration() const { return static_cast<double>(length()) / sampling_rate; }
};

/// Fixed-duration STFT geometry; sample counts follow from the rate.
struct StftConfig {
  double window_duration = 0.032;
  double hop_duration = 0.016;

  Index window_length(double rate) const;  // round(duration * rate), must be even
  Index hop_length(double rate) const;     // window_length / 2
  Index fft_size(double rate) const { return window_length(rate); }
  Index num_bins(double rate) const { return fft_size(rate) / 2 + 1; }
  /// Center-framed frame count: 1 + floor(length / hop).
  Index num_frames(Index length, double rate) const;
  void validate(double rate) const;
};

/// Periodic Hann window, square-rooted.
std::vector<double> sqrt_hann(Index length);

/// Real/imaginary stacked spectrum [2, M, T, F].
struct Spectrogram {
  Tensor<double> data;
  StftConfig config;
  double sampling_rate = 0.0;
  Index signal_length = 0;

  Index channels() const { return data.shape()[1]; }
  Index frames() const { return data.shape()[2]; }
  Index bins() const { return data.shape()[3]; }
};

Spectrogram stft(const Waveform& w, const StftConfig& cfg = {});

Waveform istft(const Spectrogram& s);
/// Inverse with an explicit geometry; throws ConfigError when the bin count
/// does not match cfg at `rate`.
Waveform istft(const Tensor<double>& spec, const StftConfig& cfg, double rate, Index length);

/// Differentiable inverse STFT. spec: [2, B..., T, F] -> [B..., length].
/// Overlap-add with the synthesis window, normalized by the summed squared
/// window, so istft(stft(x)) == x.
template <typename Scalar>
Var<Scalar> istft(const Var<Scalar>& spec, const StftConfig& cfg, double rate, Index length);

/// Separates a waveform into sources. Every returned Waveform has the
/// input's channel count and length.
using SeparationFn = std::function<std::vector<Waveform>(const Waveform&)>;

/// Chunked overlap-add inference with chunks of `chunk_seconds` and hop of
/// half a chunk. Triangular cross-fade weights are normalized by their sum.
/// Source order is aligned to the previous chunk by overlap correlation.
std::vector<Waveform> chunked_separate(const Waveform& w, const SeparationFn& model,
                                       double chunk_seconds, const StftConfig& cfg = {});

/// Scales to unit RMS. Returns the original RMS; a silent input is
/// returned unchanged with rms 0.
std::pair<Waveform, double> rms_normalize(const Waveform& w);

enum class WavFormat { kPcm16, kFloat32 };

Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w, WavFormat format = WavFormat::kFloat32);

}  // namespace pelab
