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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>

#include "pelab/gradcheck.hpp"
#include "pelab/signal.hpp"
#include "test_util.hpp"

namespace pelab {
namespace {

using testing::random_tensor;
using T = Tensor<double>;
using V = Var<double>;

constexpr double kPi = 3.14159265358979323846;

Waveform noise(Index channels, Index length, double rate, std::uint64_t seed) {
  const auto t = random_tensor({channels, length}, seed);
  Waveform w(channels, length, rate);
  for (Index m = 0; m < channels; ++m) {
    for (Index i = 0; i < length; ++i) w.samples(m, i) = t.at({m, i});
  }
  return w;
}

double rel_err(const SampleMatrix& a, const SampleMatrix& b) {
  return std::sqrt((a - b).square().sum() / b.square().sum());
}

TEST(StftConfig, DeskGeometry) {
  StftConfig cfg;
  EXPECT_EQ(cfg.window_length(8000), 256);
  EXPECT_EQ(cfg.hop_length(8000), 128);
  EXPECT_EQ(cfg.num_bins(8000), 129);
  EXPECT_EQ(cfg.num_bins(16000), 257);
  EXPECT_EQ(cfg.num_frames(8000, 8000), 63);
  StftConfig bad;
  bad.hop_duration = 0.008;
  EXPECT_THROW(bad.validate(8000), ConfigError);
}

TEST(Stft, ZeroSignal) {
  const auto s = stft(Waveform(2, 1000, 8000));
  EXPECT_EQ(s.data.shape(), (Shape{2, 2, 8, 129}));
  EXPECT_EQ(s.data.array().abs().maxCoeff(), 0.0);
}

TEST(Stft, MatchesNaiveDft) {
  const auto w = noise(1, 700, 8000, 1);
  const auto s = stft(w);
  const Index win = 256, hop = 128, pad = 128, bins = 129;
  const auto window = sqrt_hann(win);
  const Index plane = s.frames() * bins;
  for (Index t : {0, 2, 5}) {
    for (Index k : {0, 1, 17, 128}) {
      std::complex<double> acc = 0.0;
      for (Index n = 0; n < win; ++n) {
        Index idx = t * hop + n - pad;
        if (idx < 0) idx = -idx;
        if (idx >= 700) idx = 2 * 699 - idx;
        acc += w.samples(0, idx) * window[n] * std::polar(1.0, -2.0 * kPi * double(k * n) / double(win));
      }
      EXPECT_NEAR(s.data[t * bins + k], acc.real(), 1e-9);
      EXPECT_NEAR(s.data[plane + t * bins + k], acc.imag(), 1e-9);
    }
  }
}

TEST(Stft, BinCenterSinusoidMainLobe) {
  // A square-root Hann (sine) window spreads a bin-centred tone over the
  // bin and its two neighbours: weights 1, 1/9, 1/9 of a total pi^2/8,
  // i.e. 81% in the bin and 99.07% in the lobe.
  const double rate = 8000;
  const Index k0 = 20;
  const double f = k0 * rate / 256.0;
  Waveform w(1, 4000, rate);
  for (Index i = 0; i < 4000; ++i) w.samples(0, i) = std::sin(2.0 * kPi * f * i / rate + 0.3);
  const auto s = stft(w);
  const Index bins = s.bins();
  const Index plane = s.frames() * bins;
  for (Index t = 2; t < s.frames() - 2; ++t) {
    double total = 0.0, lobe = 0.0, peak = 0.0;
    Index arg = -1;
    for (Index k = 0; k < bins; ++k) {
      const double e = std::pow(s.data[t * bins + k], 2) + std::pow(s.data[plane + t * bins + k], 2);
      total += e;
      if (std::abs(k - k0) <= 1) lobe += e;
      if (e > peak) {
        peak = e;
        arg = k;
      }
    }
    EXPECT_EQ(arg, k0);
    EXPECT_GE(lobe / total, 0.99);
    EXPECT_NEAR(peak / total, 8.0 / (kPi * kPi), 1e-3);
  }
}

TEST(Stft, DoublingRateKeepsFramesDoublesBins) {
  const auto a = stft(Waveform(1, 8000, 8000));
  const auto b = stft(Waveform(1, 16000, 16000));
  EXPECT_EQ(a.frames(), b.frames());
  EXPECT_EQ(b.bins() - 1, 2 * (a.bins() - 1));
}

TEST(Stft, ShortSignalRejected) { EXPECT_THROW(stft(Waveform(1, 255, 8000)), ConfigError); }

TEST(Istft, RoundTripNoise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (Index len : {256, 1000, 8000, 8001}) {
      const auto w = noise(2, len, 8000, seed);
      const auto back = istft(stft(w));
      ASSERT_EQ(back.length(), len);
      EXPECT_LT(rel_err(back.samples, w.samples), 1e-10);
    }
  }
}

TEST(Istft, RoundTripChirp) {
  const double rate = 16000;
  Waveform w(1, 32000, rate);
  for (Index i = 0; i < w.length(); ++i) {
    const double t = i / rate;
    w.samples(0, i) = std::sin(2.0 * kPi * (100.0 * t + 0.5 * 3000.0 * t * t));
  }
  EXPECT_LT(rel_err(istft(stft(w)).samples, w.samples), 1e-10);
}

TEST(Istft, ZeroSpecAndMismatch) {
  auto s = stft(Waveform(1, 1000, 8000));
  EXPECT_EQ(istft(s).samples.abs().maxCoeff(), 0.0);
  EXPECT_THROW(istft(s.data, s.config, 16000, 1000), ConfigError);
}

TEST(Istft, DifferentiableMatchesPlain) {
  const auto w = noise(2, 900, 8000, 7);
  const auto s = stft(w);
  const auto y = istft(V::constant(s.data), s.config, 8000, 900).value();
  const auto ref = istft(s);
  for (Index m = 0; m < 2; ++m) {
    for (Index i = 0; i < 900; ++i) EXPECT_NEAR(y.at({m, i}), ref.samples(m, i), 1e-12);
  }
}

TEST(Istft, AdjointAndGradient) {
  StftConfig cfg;
  const double rate = 1000;  // 32-sample window
  const Index len = 100;
  const Shape spec_shape{2, 1, cfg.num_frames(len, rate), cfg.num_bins(rate)};
  const auto spec = random_tensor(spec_shape, 8);
  const auto g = random_tensor({1, len}, 9);
  auto sv = V::parameter(spec);
  backward(sum(mul(istft(sv, cfg, rate, len), V::constant(g))));
  const auto y = istft(V::constant(spec), cfg, rate, len).value();
  EXPECT_NEAR(testing::inner(y, g), testing::inner(spec, sv.grad()), 1e-10);

  const auto r = finite_diff_check(
      [&](const std::vector<V>& v) { return istft(v[0], cfg, rate, len); }, {spec});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(ChunkedSeparate, IdentityModel) {
  const auto w = noise(2, 20000, 8000, 10);
  SeparationFn identity = [](const Waveform& x) { return std::vector<Waveform>{x}; };
  for (double chunk : {0.5, 1.0, 3.0}) {
    const auto out = chunked_separate(w, identity, chunk);
    ASSERT_EQ(out.size(), 1u);
    ASSERT_EQ(out[0].length(), w.length());
    EXPECT_LT((out[0].samples - w.samples).abs().maxCoeff(), 1e-10) << chunk;
  }
}

TEST(ChunkedSeparate, SingleChunkEqualsDirect) {
  const auto w = noise(1, 4000, 8000, 11);
  SeparationFn half = [](const Waveform& x) {
    return std::vector<Waveform>{Waveform(x.samples * 0.5, x.sampling_rate),
                                 Waveform(x.samples * 0.25, x.sampling_rate)};
  };
  const auto out = chunked_separate(w, half, 1.0);
  const auto direct = half(w);
  for (std::size_t n = 0; n < 2; ++n) EXPECT_TRUE((out[n].samples == direct[n].samples).all());
}

TEST(ChunkedSeparate, ConstantGainAcrossSeam) {
  // 1.5 chunks of a constant signal: each output sample is a normalized
  // triangular blend of two identical values 0.7*c.
  Waveform w(1, 12000, 8000);
  w.samples.setConstant(2.0);
  SeparationFn gain = [](const Waveform& x) {
    return std::vector<Waveform>{Waveform(x.samples * 0.7, x.sampling_rate)};
  };
  const auto out = chunked_separate(w, gain, 1.0);
  EXPECT_LT((out[0].samples - 1.4).abs().maxCoeff(), 1e-12);
}

TEST(ChunkedSeparate, AlignsSwappedSources) {
  const double rate = 8000;
  const Index len = 24000, chunk = 8000, hop = 4000;
  auto a = noise(1, len, rate, 12);
  auto b = noise(1, len, rate, 13);
  for (Index i = 0; i < len; ++i) b.samples(0, i) = std::sin(0.01 * i);
  Waveform mix(a.samples + b.samples, rate);
  int call = 0;
  SeparationFn swapping = [&](const Waveform& x) {
    const Index start = std::min<Index>(call * hop, len - chunk);
    Waveform pa(a.samples.middleCols(start, chunk), rate);
    Waveform pb(b.samples.middleCols(start, chunk), rate);
    (void)x;
    return (call++ % 2 == 0) ? std::vector<Waveform>{pa, pb} : std::vector<Waveform>{pb, pa};
  };
  const auto out = chunked_separate(mix, swapping, 1.0);
  EXPECT_LT((out[0].samples - a.samples).abs().maxCoeff(), 1e-12);
  EXPECT_LT((out[1].samples - b.samples).abs().maxCoeff(), 1e-12);
}

TEST(ChunkedSeparate, ChunkShorterThanWindowRejected) {
  SeparationFn identity = [](const Waveform& x) { return std::vector<Waveform>{x}; };
  EXPECT_THROW(chunked_separate(Waveform(1, 8000, 8000), identity, 0.01), ConfigError);
}

TEST(RmsNormalize, Examples) {
  Waveform w(1, 4, 8000);
  w.samples << 2, 2, 2, 2;
  auto [n, rms] = rms_normalize(w);
  EXPECT_EQ(rms, 2.0);
  EXPECT_TRUE((n.samples == 1.0).all());

  Waveform u(1, 4, 8000);
  u.samples << 1, -1, 1, -1;
  auto [un, urms] = rms_normalize(u);
  EXPECT_EQ(urms, 1.0);
  EXPECT_TRUE((un.samples == u.samples).all());

  const auto x = noise(2, 100, 8000, 14);
  auto [xn, xr] = rms_normalize(x);
  EXPECT_NEAR(std::sqrt(xn.samples.square().mean()), 1.0, 1e-12);
  EXPECT_TRUE((xn.samples.sign() == x.samples.sign()).all());
  EXPECT_GT(xr, 0.0);

  auto [zn, zr] = rms_normalize(Waveform(1, 10, 8000));
  EXPECT_EQ(zr, 0.0);
  EXPECT_EQ(zn.samples.abs().maxCoeff(), 0.0);
}

TEST(Wav, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path();
  auto w = noise(2, 500, 8000, 15);
  w.samples *= 0.5;
  const auto fpath = (dir / "pelab_f32.wav").string();
  write_wav(fpath, w, WavFormat::kFloat32);
  const auto rf = read_wav(fpath);
  EXPECT_EQ(rf.sampling_rate, 8000);
  EXPECT_LT((rf.samples - w.samples).abs().maxCoeff(), 1e-7);

  const auto ppath = (dir / "pelab_pcm.wav").string();
  write_wav(ppath, w, WavFormat::kPcm16);
  const auto rp = read_wav(ppath);
  EXPECT_EQ(rp.channels(), 2);
  EXPECT_LE((rp.samples - w.samples).abs().maxCoeff(), 0.5 / 32768.0 + 1e-12);
  std::filesystem::remove(fpath);
  std::filesystem::remove(ppath);
}

}  // namespace
}  // namespace pelab
