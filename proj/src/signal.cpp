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

#include "pelab/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "ops_internal.hpp"

namespace pelab {

Waveform::Waveform(SampleMatrix s, double rate) : samples(std::move(s)), sampling_rate(rate) {
  if (!(rate > 0.0)) throw ConfigError("sampling rate must be positive");
}

Waveform::Waveform(Index channels, Index length, double rate)
    : Waveform(SampleMatrix::Zero(channels, length), rate) {}

Index StftConfig::window_length(double rate) const {
  const auto n = static_cast<Index>(std::llround(window_duration * rate));
  return n + (n % 2);
}

Index StftConfig::hop_length(double rate) const { return window_length(rate) / 2; }

Index StftConfig::num_frames(Index length, double rate) const {
  return 1 + length / hop_length(rate);
}

void StftConfig::validate(double rate) const {
  if (!(rate > 0.0)) throw ConfigError("sampling rate must be positive");
  if (!(window_duration > 0.0) || std::abs(hop_duration * 2.0 - window_duration) > 1e-12) {
    throw ConfigError("STFT hop must be half the window for square-root Hann overlap-add");
  }
  if (window_length(rate) < 4) throw ConfigError("STFT window shorter than 4 samples");
}

std::vector<double> sqrt_hann(Index length) {
  std::vector<double> w(length);
  const double pi = 3.14159265358979323846;
  for (Index n = 0; n < length; ++n) {
    w[n] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(n) / static_cast<double>(length)));
  }
  return w;
}

namespace {

using Complex = std::complex<double>;

// Shared frame geometry of a center-padded STFT.
struct Framing {
  Index win = 0;
  Index hop = 0;
  Index pad = 0;
  Index bins = 0;
  Index frames = 0;
  Index length = 0;
  std::vector<double> window;
  std::vector<double> inv_wsum;  // 1 / sum of squared windows per padded sample

  Framing(const StftConfig& cfg, double rate, Index len) : length(len) {
    cfg.validate(rate);
    win = cfg.window_length(rate);
    hop = cfg.hop_length(rate);
    pad = win / 2;
    bins = win / 2 + 1;
    frames = cfg.num_frames(len, rate);
    window = sqrt_hann(win);
  }

  Index padded_length() const { return length + 2 * pad; }

  void build_wsum() {
    std::vector<double> ws(padded_length(), 0.0);
    for (Index t = 0; t < frames; ++t) {
      for (Index n = 0; n < win; ++n) ws[t * hop + n] += window[n] * window[n];
    }
    inv_wsum.resize(ws.size());
    for (std::size_t p = 0; p < ws.size(); ++p) inv_wsum[p] = ws[p] > 1e-10 ? 1.0 / ws[p] : 0.0;
  }
};

Eigen::FFT<double> make_fft() {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  return fft;
}

// Inverse of one slab [T, F] of real and imaginary parts into `out` (length
// `fr.length`).
template <typename Scalar>
void istft_slab(const Scalar* re, const Scalar* im, const Framing& fr, Eigen::FFT<double>& fft,
                double* out) {
  std::vector<double> acc(fr.padded_length(), 0.0);
  std::vector<Complex> spec(fr.bins);
  std::vector<double> frame(fr.win);
  for (Index t = 0; t < fr.frames; ++t) {
    for (Index k = 0; k < fr.bins; ++k) {
      spec[k] = Complex(static_cast<double>(re[t * fr.bins + k]), static_cast<double>(im[t * fr.bins + k]));
    }
    spec.front().imag(0.0);
    spec.back().imag(0.0);
    fft.inv(frame.data(), spec.data(), fr.win);
    for (Index n = 0; n < fr.win; ++n) acc[t * fr.hop + n] += frame[n] * fr.window[n];
  }
  for (Index i = 0; i < fr.length; ++i) out[i] = acc[i + fr.pad] * fr.inv_wsum[i + fr.pad];
}

}  // namespace

Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  const Index len = w.length();
  Framing fr(cfg, w.sampling_rate, len);
  if (len < fr.win) {
    throw ConfigError("signal of " + std::to_string(len) + " samples is shorter than one STFT window (" +
                      std::to_string(fr.win) + ")");
  }
  const Index M = w.channels();
  Spectrogram s;
  s.config = cfg;
  s.sampling_rate = w.sampling_rate;
  s.signal_length = len;
  s.data = Tensor<double>(Shape{2, M, fr.frames, fr.bins});
  const Index plane = M * fr.frames * fr.bins;
  auto fft = make_fft();
  std::vector<double> padded(fr.padded_length());
  std::vector<double> frame(fr.win);
  std::vector<Complex> spec;
  for (Index m = 0; m < M; ++m) {
    for (Index p = 0; p < fr.padded_length(); ++p) {
      Index idx = p - fr.pad;
      if (idx < 0) idx = -idx;
      if (idx >= len) idx = 2 * (len - 1) - idx;
      padded[p] = w.samples(m, idx);
    }
    for (Index t = 0; t < fr.frames; ++t) {
      for (Index n = 0; n < fr.win; ++n) frame[n] = padded[t * fr.hop + n] * fr.window[n];
      fft.fwd(spec, frame);
      const Index off = (m * fr.frames + t) * fr.bins;
      for (Index k = 0; k < fr.bins; ++k) {
        s.data[off + k] = spec[k].real();
        s.data[plane + off + k] = spec[k].imag();
      }
    }
  }
  return s;
}

Waveform istft(const Tensor<double>& spec, const StftConfig& cfg, double rate, Index length) {
  const auto& sh = spec.shape();
  if (sh.size() != 4 || sh[0] != 2) {
    throw ShapeError("istft expects [2, M, T, F], got " + shape_to_string(sh));
  }
  Framing fr(cfg, rate, length);
  if (sh[3] != fr.bins || sh[2] != fr.frames) {
    throw ConfigError("spectrogram " + shape_to_string(sh) + " does not match STFT geometry (T=" +
                      std::to_string(fr.frames) + ", F=" + std::to_string(fr.bins) + ") at " +
                      std::to_string(rate) + " Hz");
  }
  fr.build_wsum();
  const Index M = sh[1];
  const Index plane = M * fr.frames * fr.bins;
  Waveform w(M, length, rate);
  auto fft = make_fft();
  std::vector<double> out(length);
  for (Index m = 0; m < M; ++m) {
    const Index off = m * fr.frames * fr.bins;
    istft_slab(spec.data() + off, spec.data() + plane + off, fr, fft, out.data());
    for (Index i = 0; i < length; ++i) w.samples(m, i) = out[i];
  }
  return w;
}

Waveform istft(const Spectrogram& s) {
  return istft(s.data, s.config, s.sampling_rate, s.signal_length);
}

template <typename Scalar>
Var<Scalar> istft(const Var<Scalar>& spec, const StftConfig& cfg, double rate, Index length) {
  const auto& sh = spec.shape();
  if (sh.size() < 3 || sh[0] != 2) {
    throw ShapeError("istft expects [2, ..., T, F], got " + shape_to_string(sh));
  }
  auto fr = std::make_shared<Framing>(cfg, rate, length);
  if (sh.back() != fr->bins || sh[sh.size() - 2] != fr->frames) {
    throw ConfigError("spectrogram " + shape_to_string(sh) + " does not match STFT geometry (T=" +
                      std::to_string(fr->frames) + ", F=" + std::to_string(fr->bins) + ")");
  }
  fr->build_wsum();
  Shape out_shape(sh.begin() + 1, sh.end() - 2);
  out_shape.push_back(length);
  const Index slabs = shape_numel(out_shape) / length;
  const Index slab = fr->frames * fr->bins;
  const Index plane = slabs * slab;

  Tensor<Scalar> out(out_shape);
  {
    auto fft = make_fft();
    std::vector<double> buf(length);
    const Scalar* base = spec.value().data();
    for (Index b = 0; b < slabs; ++b) {
      istft_slab(base + b * slab, base + plane + b * slab, *fr, fft, buf.data());
      for (Index i = 0; i < length; ++i) out[b * length + i] = static_cast<Scalar>(buf[i]);
    }
  }
  return record_op<Scalar>(
      "istft", std::move(out), {spec}, [spec, fr, slabs, slab, plane](const Tensor<Scalar>& g) {
        const Framing& f = *fr;
        auto fft = make_fft();
        auto& gs = spec.grad_buffer();
        std::vector<double> gp(f.padded_length());
        std::vector<double> gf(f.win);
        std::vector<Complex> G;
        const double inv_n = 1.0 / static_cast<double>(f.win);
        for (Index b = 0; b < slabs; ++b) {
          std::fill(gp.begin(), gp.end(), 0.0);
          for (Index i = 0; i < f.length; ++i) {
            gp[i + f.pad] = static_cast<double>(g[b * f.length + i]) * f.inv_wsum[i + f.pad];
          }
          for (Index t = 0; t < f.frames; ++t) {
            for (Index n = 0; n < f.win; ++n) gf[n] = gp[t * f.hop + n] * f.window[n];
            fft.fwd(G, gf);
            const Index off = b * slab + t * f.bins;
            for (Index k = 0; k < f.bins; ++k) {
              const bool edge = k == 0 || k == f.bins - 1;
              const double c = (edge ? 1.0 : 2.0) * inv_n;
              gs[off + k] += static_cast<Scalar>(c * G[k].real());
              if (!edge) gs[plane + off + k] += static_cast<Scalar>(c * G[k].imag());
            }
          }
        }
      });
}

template Var<float> istft(const Var<float>&, const StftConfig&, double, Index);
template Var<double> istft(const Var<double>&, const StftConfig&, double, Index);

std::vector<Waveform> chunked_separate(const Waveform& w, const SeparationFn& model,
                                       double chunk_seconds, const StftConfig& cfg) {
  if (!(chunk_seconds > 0.0)) throw ConfigError("chunk length must be positive");
  const Index len = w.length();
  const auto chunk = static_cast<Index>(std::llround(chunk_seconds * w.sampling_rate));
  if (chunk < cfg.window_length(w.sampling_rate)) {
    throw ConfigError("chunk of " + std::to_string(chunk) + " samples is shorter than one STFT window");
  }
  auto run = [&](const Waveform& piece) {
    auto sources = model(piece);
    if (sources.empty()) throw ConfigError("separation model returned no sources");
    for (const auto& s : sources) {
      if (s.length() != piece.length() || s.channels() != piece.channels()) {
        throw ShapeError("separation model changed the signal shape");
      }
    }
    return sources;
  };
  if (chunk >= len) return run(w);

  const Index hop = std::max<Index>(1, chunk / 2);
  std::vector<Index> starts;
  for (Index s = 0; s + chunk < len; s += hop) starts.push_back(s);
  starts.push_back(len - chunk);

  // Triangular weights, strictly positive so every sample has nonzero mass.
  Eigen::ArrayXd tri(chunk);
  for (Index n = 0; n < chunk; ++n) tri[n] = static_cast<double>(std::min(n + 1, chunk - n));

  std::vector<Waveform> acc;
  Eigen::ArrayXd mass = Eigen::ArrayXd::Zero(len);
  std::vector<Waveform> prev;
  Index prev_start = 0;
  for (Index start : starts) {
    Waveform piece(w.samples.middleCols(start, chunk), w.sampling_rate);
    auto sources = run(piece);
    if (acc.empty()) {
      for (std::size_t n = 0; n < sources.size(); ++n) acc.emplace_back(w.channels(), len, w.sampling_rate);
    } else if (sources.size() != acc.size()) {
      throw ShapeError("separation model returned a varying number of sources");
    }
    if (!prev.empty() && sources.size() > 1) {
      // Greedy assignment by correlation over the shared region.
      const Index lo = start;
      const Index hi = std::min(prev_start + chunk, start + chunk);
      const std::size_t n_src = sources.size();
      Eigen::MatrixXd corr(n_src, n_src);
      for (std::size_t a = 0; a < n_src; ++a) {
        for (std::size_t b = 0; b < n_src; ++b) {
          const auto pa = prev[a].samples.middleCols(lo - prev_start, hi - lo);
          const auto sb = sources[b].samples.middleCols(lo - start, hi - lo);
          const double na = std::sqrt(pa.square().sum());
          const double nb = std::sqrt(sb.square().sum());
          corr(a, b) = (na > 0 && nb > 0) ? (pa * sb).sum() / (na * nb) : 0.0;
        }
      }
      std::vector<int> assign(n_src, -1);
      std::vector<bool> used(n_src, false);
      for (std::size_t round = 0; round < n_src; ++round) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t ba = 0, bb = 0;
        for (std::size_t a = 0; a < n_src; ++a) {
          if (assign[a] >= 0) continue;
          for (std::size_t b = 0; b < n_src; ++b) {
            if (!used[b] && corr(a, b) > best) {
              best = corr(a, b);
              ba = a;
              bb = b;
            }
          }
        }
        assign[ba] = static_cast<int>(bb);
        used[bb] = true;
      }
      std::vector<Waveform> ordered;
      for (std::size_t a = 0; a < n_src; ++a) ordered.push_back(std::move(sources[assign[a]]));
      sources = std::move(ordered);
    }
    for (std::size_t n = 0; n < sources.size(); ++n) {
      acc[n].samples.middleCols(start, chunk) += sources[n].samples.rowwise() * tri.transpose();
    }
    mass.segment(start, chunk) += tri;
    prev = std::move(sources);
    prev_start = start;
  }
  for (auto& a : acc) a.samples.rowwise() /= mass.transpose();
  return acc;
}

std::pair<Waveform, double> rms_normalize(const Waveform& w) {
  const double rms = w.samples.size() ? std::sqrt(w.samples.square().mean()) : 0.0;
  if (rms == 0.0) return {w, 0.0};
  return {Waveform(w.samples / rms, w.sampling_rate), rms};
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw ConfigError("truncated WAV file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w, WavFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  const bool pcm = format == WavFormat::kPcm16;
  const std::uint16_t channels = static_cast<std::uint16_t>(w.channels());
  const std::uint16_t bits = pcm ? 16 : 32;
  const auto rate = static_cast<std::uint32_t>(std::llround(w.sampling_rate));
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.length() * channels * (bits / 8));
  os.write("RIFF", 4);
  put<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put<std::uint32_t>(os, 16);
  put<std::uint16_t>(os, pcm ? 1 : 3);
  put<std::uint16_t>(os, channels);
  put<std::uint32_t>(os, rate);
  put<std::uint32_t>(os, rate * channels * (bits / 8));
  put<std::uint16_t>(os, static_cast<std::uint16_t>(channels * (bits / 8)));
  put<std::uint16_t>(os, bits);
  os.write("data", 4);
  put<std::uint32_t>(os, data_bytes);
  for (Index i = 0; i < w.length(); ++i) {
    for (Index m = 0; m < w.channels(); ++m) {
      const double v = w.samples(m, i);
      if (pcm) {
        const double q = std::clamp(std::nearbyint(v * 32768.0), -32768.0, 32767.0);
        put<std::int16_t>(os, static_cast<std::int16_t>(q));
      } else {
        put<float>(os, static_cast<float>(v));
      }
    }
  }
  if (!os) throw ConfigError("failed writing '" + path + "'");
}

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw ConfigError("'" + path + "' is not a RIFF/WAVE file");
  }
  std::uint16_t tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  for (std::size_t pos = 12; pos + 8 <= buf.size();) {
    const std::string id(buf.data() + pos, 4);
    const auto size = get<std::uint32_t>(buf, pos + 4);
    if (id == "fmt ") {
      tag = get<std::uint16_t>(buf, pos + 8);
      channels = get<std::uint16_t>(buf, pos + 10);
      rate = get<std::uint32_t>(buf, pos + 12);
      bits = get<std::uint16_t>(buf, pos + 22);
      if (tag == 0xFFFE) tag = get<std::uint16_t>(buf, pos + 32);
    } else if (id == "data") {
      data_pos = pos + 8;
      data_len = std::min<std::size_t>(size, buf.size() - data_pos);
    }
    pos += 8 + size + (size & 1);
  }
  const bool pcm16 = tag == 1 && bits == 16;
  const bool f32 = tag == 3 && bits == 32;
  if (!(pcm16 || f32) || channels == 0 || data_pos == 0) {
    throw ConfigError("'" + path + "': only PCM16 and float32 WAV are supported");
  }
  const std::size_t frame_bytes = channels * (bits / 8);
  const Index length = static_cast<Index>(data_len / frame_bytes);
  Waveform w(channels, length, rate);
  for (Index i = 0; i < length; ++i) {
    for (Index m = 0; m < channels; ++m) {
      const std::size_t at = data_pos + i * frame_bytes + m * (bits / 8);
      w.samples(m, i) = pcm16 ? get<std::int16_t>(buf, at) / 32768.0 : get<float>(buf, at);
    }
  }
  return w;
}

}  // namespace pelab
