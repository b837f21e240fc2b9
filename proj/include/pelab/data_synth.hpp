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
#include <string>
#include <vector>

#include "pelab/signal.hpp"

namespace pelab {

/// Highest frequency any source may contain, independent of the rate, so
/// the same seed yields the same content at 8 and 16 kHz.
inline constexpr double kContentCapHz = 3500.0;

enum class SourceKind { kHarmonic, kNoiseBand, kChirp };

std::string source_kind_name(SourceKind k);

/// Parametric mono source. Which fields matter depends on `kind`:
/// harmonic uses f0; noise band uses [band_lo, band_hi]; the chirp sweeps
/// sinusoidally over [band_lo, band_hi] at sweep_rate.
struct SourceSpec {
  SourceKind kind = SourceKind::kHarmonic;
  double f0 = 200.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
  double sweep_rate = 1.0;
  double am_rate = 3.0;   // syllable-like amplitude modulation, Hz
  double am_depth = 0.5;  // 0 disables modulation
  double max_freq = kContentCapHz;
  double duration = 1.0;
  double rate = 8000.0;
  std::uint64_t seed = 0;

  /// Upper edge of the spectral support including modulation sidebands.
  double highest_frequency() const;
};

/// Unit-RMS waveform [1, round(duration * rate)]. Throws ConfigError when
/// content would reach the Nyquist frequency.
Waveform gen_source(const SourceSpec& spec);

/// Spec for source slot `slot` (0..3); slots draw their frequencies from
/// disjoint ranges.
SourceSpec draw_source_spec(int slot, double duration, double rate, std::uint64_t seed);

struct MixRecipe {
  std::vector<SourceSpec> sources;
  double gain_lo_db = -10.0;
  double gain_hi_db = 10.0;
  double drop_prob = 0.1;
  Index channels = 1;  // 2 pans each source with constant gains
  std::uint64_t seed = 0;
};

MixRecipe make_recipe(int num_sources, double duration, double rate, std::uint64_t seed, Index channels = 1,
                      double drop_prob = 0.1);

/// Random choices of one mixing event.
struct MixDraw {
  std::vector<double> gains_db;
  std::vector<bool> dropped;
  std::vector<double> pan;  // in [0, 1]; 0.5 is centre
};

MixDraw draw_mix(const MixRecipe& recipe);

struct Mixture {
  Waveform mixture;
  std::vector<Waveform> refs;  // dropped sources are all-zero
  MixDraw draw;
};

/// mixture == refs[0] + refs[1] + ... evaluated left to right.
Mixture dynamic_mix(const MixRecipe& recipe);

struct EvalItem {
  std::string id;
  std::uint64_t seed = 0;
  Mixture mix;
};

/// Deterministic evaluation mixtures without drops. Item i uses
/// mix_seed(seed, i), so sets at different durations or rates share their
/// source parameters.
std::vector<EvalItem> make_eval_set(Index count, double duration, double rate, std::uint64_t seed,
                                    int num_sources = 2, Index channels = 1);

/// Writes <id>_mix.wav, <id>_s<k>.wav and manifest.jsonl into `dir`.
void export_eval_set(const std::vector<EvalItem>& set, const std::string& dir);

/// FNV-1a over every sample of a set; equal sets have equal checksums.
std::uint64_t eval_set_checksum(const std::vector<EvalItem>& set);

}  // namespace pelab
