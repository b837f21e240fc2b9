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

#include "pelab/data_synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

namespace pelab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925;
constexpr int kNoisePartials = 64;

// Per-slot frequency ranges, disjoint across slots.
struct SlotRanges {
  double f0_lo, f0_hi;          // harmonic fundamental
  double centre_lo, centre_hi;  // chirp / noise band centre
};
constexpr SlotRanges kSlots[4] = {
    {90.0, 150.0, 500.0, 800.0},
    {200.0, 320.0, 1300.0, 1700.0},
    {400.0, 520.0, 2100.0, 2400.0},
    {600.0, 700.0, 2800.0, 3000.0},
};

std::vector<double> envelope(const SourceSpec& s, Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  const double ph = phase(rng);
  std::vector<double> env(n, 1.0);
  if (s.am_depth <= 0.0) return env;
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / s.rate;
    env[i] = 1.0 + s.am_depth * std::sin(kTwoPi * s.am_rate * t + ph);
  }
  return env;
}

}  // namespace

std::string source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::kHarmonic:
      return "harmonic";
    case SourceKind::kNoiseBand:
      return "noise_band";
    case SourceKind::kChirp:
      return "chirp";
  }
  return "unknown";
}

double SourceSpec::highest_frequency() const {
  const double side = am_depth > 0.0 ? am_rate : 0.0;
  if (kind == SourceKind::kHarmonic) return f0 * std::floor(max_freq / f0) + side;
  return band_hi + side;
}

Waveform gen_source(const SourceSpec& s) {
  if (s.rate <= 0.0 || s.duration <= 0.0) throw ConfigError("gen_source: rate and duration must be positive");
  if (s.kind == SourceKind::kHarmonic && (s.f0 <= 0.0 || s.f0 > s.max_freq)) {
    throw ConfigError("gen_source: fundamental " + std::to_string(s.f0) + " Hz outside (0, max_freq]");
  }
  if (s.kind != SourceKind::kHarmonic && !(0.0 < s.band_lo && s.band_lo < s.band_hi)) {
    throw ConfigError("gen_source: empty band [" + std::to_string(s.band_lo) + ", " + std::to_string(s.band_hi) +
                      "]");
  }
  if (s.highest_frequency() >= s.rate / 2.0 || s.highest_frequency() > s.max_freq + s.am_rate) {
    throw ConfigError("gen_source: content up to " + std::to_string(s.highest_frequency()) +
                      " Hz does not fit below Nyquist " + std::to_string(s.rate / 2.0) + " Hz");
  }
  const Index n = static_cast<Index>(std::llround(s.duration * s.rate));
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto env = envelope(s, n, rng);
  Waveform w(1, n, s.rate);
  auto x = w.samples.row(0);
  switch (s.kind) {
    case SourceKind::kHarmonic: {
      const int partials = static_cast<int>(std::floor(s.max_freq / s.f0));
      for (int k = 1; k <= partials; ++k) {
        const double amp = (0.5 + unit(rng)) / k;
        const double ph = kTwoPi * unit(rng);
        const double w0 = kTwoPi * s.f0 * k;
        for (Index i = 0; i < n; ++i) x(i) += amp * std::sin(w0 * (static_cast<double>(i) / s.rate) + ph);
      }
      break;
    }
    case SourceKind::kNoiseBand: {
      for (int k = 0; k < kNoisePartials; ++k) {
        const double f = s.band_lo + (s.band_hi - s.band_lo) * unit(rng);
        const double ph = kTwoPi * unit(rng);
        for (Index i = 0; i < n; ++i) x(i) += std::sin(kTwoPi * f * (static_cast<double>(i) / s.rate) + ph);
      }
      break;
    }
    case SourceKind::kChirp: {
      // Instantaneous frequency fc + fd sin(2 pi fm t + phi) stays in the band.
      const double fc = 0.5 * (s.band_lo + s.band_hi);
      const double fd = 0.5 * (s.band_hi - s.band_lo);
      const double phi = kTwoPi * unit(rng);
      const double ph0 = kTwoPi * unit(rng);
      for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / s.rate;
        const double phase =
            kTwoPi * fc * t - fd / s.sweep_rate * (std::cos(kTwoPi * s.sweep_rate * t + phi) - std::cos(phi));
        x(i) = std::sin(phase + ph0);
      }
      break;
    }
  }
  for (Index i = 0; i < n; ++i) x(i) *= env[i];
  return rms_normalize(w).first;
}

SourceSpec draw_source_spec(int slot, double duration, double rate, std::uint64_t seed) {
  if (slot < 0 || slot > 3) throw ConfigError("draw_source_spec: slot must be in 0..3");
  const auto& r = kSlots[slot];
  std::mt19937_64 rng(mix_seed(seed, 17));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SourceSpec s;
  s.kind = static_cast<SourceKind>(std::min(2, static_cast<int>(3.0 * unit(rng))));
  s.f0 = r.f0_lo + (r.f0_hi - r.f0_lo) * unit(rng);
  const double centre = r.centre_lo + (r.centre_hi - r.centre_lo) * unit(rng);
  const double half = 150.0 + 150.0 * unit(rng);
  s.band_lo = centre - half;
  s.band_hi = centre + half;
  s.sweep_rate = 0.5 + 1.5 * unit(rng);
  s.am_rate = 2.0 + 4.0 * unit(rng);
  s.am_depth = 0.3 + 0.5 * unit(rng);
  s.duration = duration;
  s.rate = rate;
  s.seed = mix_seed(seed, 18);
  return s;
}

MixRecipe make_recipe(int num_sources, double duration, double rate, std::uint64_t seed, Index channels,
                      double drop_prob) {
  if (num_sources < 1 || num_sources > 4) throw ConfigError("make_recipe: 1..4 sources supported");
  if (channels != 1 && channels != 2) throw ConfigError("make_recipe: mono or stereo only");
  MixRecipe r;
  for (int k = 0; k < num_sources; ++k) r.sources.push_back(draw_source_spec(k, duration, rate, mix_seed(seed, k)));
  r.drop_prob = drop_prob;
  r.channels = channels;
  r.seed = seed;
  return r;
}

MixDraw draw_mix(const MixRecipe& recipe) {
  std::mt19937_64 rng(mix_seed(recipe.seed, 1000));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MixDraw d;
  for (std::size_t k = 0; k < recipe.sources.size(); ++k) {
    d.gains_db.push_back(recipe.gain_lo_db + (recipe.gain_hi_db - recipe.gain_lo_db) * unit(rng));
    d.dropped.push_back(unit(rng) < recipe.drop_prob);
    d.pan.push_back(unit(rng));
  }
  return d;
}

Mixture dynamic_mix(const MixRecipe& recipe) {
  if (recipe.sources.empty()) throw ConfigError("dynamic_mix: no sources");
  Mixture m;
  m.draw = draw_mix(recipe);
  const auto& first = recipe.sources.front();
  const Index n = static_cast<Index>(std::llround(first.duration * first.rate));
  m.mixture = Waveform(recipe.channels, n, first.rate);
  for (std::size_t k = 0; k < recipe.sources.size(); ++k) {
    Waveform ref(recipe.channels, n, first.rate);
    if (!m.draw.dropped[k]) {
      const auto src = gen_source(recipe.sources[k]);
      if (src.length() != n || src.sampling_rate != first.rate) {
        throw ConfigError("dynamic_mix: sources differ in length or rate");
      }
      const double g = std::pow(10.0, m.draw.gains_db[k] / 20.0);
      if (recipe.channels == 1) {
        ref.samples.row(0) = g * src.samples.row(0);
      } else {
        // Constant-power pan scaled so the channel-average power is g^2.
        const double theta = m.draw.pan[k] * kTwoPi / 4.0;
        ref.samples.row(0) = (g * std::sqrt(2.0) * std::cos(theta)) * src.samples.row(0);
        ref.samples.row(1) = (g * std::sqrt(2.0) * std::sin(theta)) * src.samples.row(0);
      }
    }
    m.mixture.samples += ref.samples;
    m.refs.push_back(std::move(ref));
  }
  return m;
}

std::vector<EvalItem> make_eval_set(Index count, double duration, double rate, std::uint64_t seed, int num_sources,
                                    Index channels) {
  std::vector<EvalItem> set;
  for (Index i = 0; i < count; ++i) {
    EvalItem item;
    item.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof(id), "item%04td", i);
    item.id = id;
    item.mix = dynamic_mix(make_recipe(num_sources, duration, rate, item.seed, channels, 0.0));
    set.push_back(std::move(item));
  }
  return set;
}

void export_eval_set(const std::vector<EvalItem>& set, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw ConfigError("export_eval_set: cannot write into " + dir);
  for (const auto& item : set) {
    nlohmann::json j;
    j["id"] = item.id;
    j["seed"] = item.seed;
    j["rate"] = item.mix.mixture.sampling_rate;
    j["duration"] = item.mix.mixture.duration();
    const std::string mix_name = item.id + "_mix.wav";
    write_wav((fs::path(dir) / mix_name).string(), item.mix.mixture);
    j["paths"]["mixture"] = mix_name;
    j["paths"]["refs"] = nlohmann::json::array();
    for (std::size_t k = 0; k < item.mix.refs.size(); ++k) {
      const std::string name = item.id + "_s" + std::to_string(k) + ".wav";
      write_wav((fs::path(dir) / name).string(), item.mix.refs[k]);
      j["paths"]["refs"].push_back(name);
    }
    manifest << j.dump() << '\n';
  }
}

std::uint64_t eval_set_checksum(const std::vector<EvalItem>& set) {
  std::uint64_t h = fnv1a(nullptr, 0);
  auto feed = [&](const Waveform& w) {
    h = fnv1a(w.samples.data(), sizeof(double) * static_cast<std::size_t>(w.samples.size()), h);
  };
  for (const auto& item : set) {
    feed(item.mix.mixture);
    for (const auto& r : item.mix.refs) feed(r);
  }
  return h;
}

}  // namespace pelab
