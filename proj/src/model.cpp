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

#include "pelab/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "ops_internal.hpp"

namespace pelab {

using nlohmann::json;

void LocoformerConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (D < 1 || B < 0 || K < 1 || stride < 1 || H < 1 || ffn_expand < 1 || N < 1 || M < 1 || G < 1) {
    fail("sizes must be positive (B may be 0)");
  }
  if (D % H != 0) fail("D=" + std::to_string(D) + " is not divisible by H=" + std::to_string(H));
  if (D % G != 0 || (D * ffn_expand) % G != 0) {
    fail("norm groups G=" + std::to_string(G) + " must divide D and D*ffn_expand");
  }
  if (pe == PEKind::kRoPE && head_dim() % 2 != 0) fail("RoPE needs an even head dimension");
  for (Index b : band_table) {
    if (b < 1) fail("band widths must be positive");
  }
}

void to_json(json& j, const LocoformerConfig& c) {
  j = json{{"D", c.D},     {"B", c.B}, {"K", c.K}, {"stride", c.stride},         {"H", c.H},
           {"ffn_expand", c.ffn_expand}, {"N", c.N}, {"M", c.M}, {"G", c.G},
           {"pe", pe_name(c.pe)}, {"rope_base", c.rope_base}, {"band_table", c.band_table}};
}

void from_json(const json& j, LocoformerConfig& c) {
  LocoformerConfig d;
  c.D = j.value("D", d.D);
  c.B = j.value("B", d.B);
  c.K = j.value("K", d.K);
  c.stride = j.value("stride", d.stride);
  c.H = j.value("H", d.H);
  c.ffn_expand = j.value("ffn_expand", d.ffn_expand);
  c.N = j.value("N", d.N);
  c.M = j.value("M", d.M);
  c.G = j.value("G", d.G);
  c.pe = parse_pe_kind(j.value("pe", pe_name(d.pe)));
  c.rope_base = j.value("rope_base", d.rope_base);
  c.band_table = j.value("band_table", std::vector<Index>{});
}

std::vector<Index> uniform_band_table(Index bins, Index bands) {
  if (bands < 1 || bands > bins) throw ConfigError("cannot split " + std::to_string(bins) + " bins into " + std::to_string(bands) + " bands");
  std::vector<Index> t(bands, bins / bands);
  for (Index q = 0; q < bins % bands; ++q) ++t[q];
  return t;
}

// ---------------------------------------------------------------- store

template <typename Scalar>
Var<Scalar>& ParameterStore<Scalar>::add(const std::string& name, Tensor<Scalar> value, bool decay) {
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, Var<Scalar>::parameter(std::move(value)), decay});
  return entries_.back().var;
}

template <typename Scalar>
const Var<Scalar>& ParameterStore<Scalar>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].var;
}

template <typename Scalar>
Var<Scalar>& ParameterStore<Scalar>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].var;
}

template <typename Scalar>
Index ParameterStore<Scalar>::count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.var.size();
  return n;
}

template <typename Scalar>
std::uint64_t ParameterStore<Scalar>::checksum() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& e : entries_) {
    h = fnv1a(e.name.data(), e.name.size(), h);
    const auto& s = e.var.shape();
    h = fnv1a(s.data(), s.size() * sizeof(Index), h);
    h = fnv1a(e.var.value().data(), e.var.size() * sizeof(Scalar), h);
  }
  return h;
}

template <typename Scalar>
void ParameterStore<Scalar>::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

// ---------------------------------------------------------------- counts

Index param_count(const LocoformerConfig& c) {
  c.validate();
  const Index D = c.D, E = c.ffn_expand * c.D, out = 2 * c.N * c.M, in = 2 * c.M;
  Index n = 0;
  if (c.band_split()) {
    for (Index b : c.band_table) n += in * b + D * in * b + D;
  } else {
    n += D * in * 9 + D + 2 * D;
  }
  const Index ffn = D + 3 * E * D * c.K + 2 * E + D;
  const Index attn = D + 3 * D * D + 2 * D + D * D + D + (c.pe == PEKind::kKERPLE ? 2 * c.H : 0);
  n += c.B * 2 * (2 * ffn + attn);
  if (c.band_split()) {
    for (Index b : c.band_table) n += 4 * D * D + 4 * D + out * b * 4 * D + out * b;
  } else {
    n += D * out * 9 + out;
  }
  return n;
}

// ---------------------------------------------------------------- model

template <typename Scalar>
Locoformer<Scalar>::Locoformer(const LocoformerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  init_parameters(seed);
}

template <typename Scalar>
void Locoformer<Scalar>::init_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](Shape shape, Index fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor<Scalar> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(u(rng));
    return t;
  };
  auto ones = [](Index n) { return Tensor<Scalar>(Shape{n}, Scalar(1)); };
  auto zeros = [](Index n) { return Tensor<Scalar>(Shape{n}); };

  const Index D = cfg_.D, E = cfg_.ffn_expand * D, K = cfg_.K;
  const Index in = 2 * cfg_.M, out = 2 * cfg_.N * cfg_.M;
  auto& ps = params_;

  if (cfg_.band_split()) {
    for (std::size_t q = 0; q < cfg_.band_table.size(); ++q) {
      const std::string pre = "bands." + std::to_string(q) + ".";
      const Index width = in * cfg_.band_table[q];
      ps.add(pre + "norm.gain", ones(width), false);
      ps.add(pre + "linear.weight", uniform({D, width}, width), true);
      ps.add(pre + "linear.bias", zeros(D), false);
    }
  } else {
    ps.add("encoder.conv.weight", uniform({D, in, 3, 3}, in * 9), true);
    ps.add("encoder.conv.bias", zeros(D), false);
    ps.add("encoder.norm.gain", ones(D), false);
    ps.add("encoder.norm.bias", zeros(D), false);
  }

  for (Index b = 0; b < cfg_.B; ++b) {
    for (const char* stage : {"freq", "time"}) {
      const std::string pre = "blocks." + std::to_string(b) + "." + stage + ".";
      auto ffn = [&](const std::string& f) {
        ps.add(f + "norm.gain", ones(D), false);
        ps.add(f + "conv_a.weight", uniform({E, D, K}, D * K), true);
        ps.add(f + "conv_a.bias", zeros(E), false);
        ps.add(f + "conv_b.weight", uniform({E, D, K}, D * K), true);
        ps.add(f + "conv_b.bias", zeros(E), false);
        ps.add(f + "deconv.weight", uniform({E, D, K}, E * K), true);
        ps.add(f + "deconv.bias", zeros(D), false);
      };
      ffn(pre + "ffn1.");
      ps.add(pre + "attn.norm.gain", ones(D), false);
      ps.add(pre + "attn.qkv.weight", uniform({3 * D, D, 1}, D), true);
      // No key bias: it shifts every logit of a row equally and cancels in softmax.
      ps.add(pre + "attn.q.bias", zeros(D), false);
      ps.add(pre + "attn.v.bias", zeros(D), false);
      ps.add(pre + "attn.out.weight", uniform({D, D, 1}, D), true);
      ps.add(pre + "attn.out.bias", zeros(D), false);
      if (cfg_.pe == PEKind::kKERPLE) {
        const auto u = static_cast<Scalar>(kerple_init_value());
        ps.add(pre + "attn.kerple_u1", Tensor<Scalar>(Shape{cfg_.H}, u), false);
        ps.add(pre + "attn.kerple_u2", Tensor<Scalar>(Shape{cfg_.H}, u), false);
      }
      ffn(pre + "ffn2.");
    }
  }

  if (cfg_.band_split()) {
    for (std::size_t q = 0; q < cfg_.band_table.size(); ++q) {
      const std::string pre = "bands." + std::to_string(q) + ".mlp.";
      const Index width = out * cfg_.band_table[q];
      ps.add(pre + "fc1.weight", uniform({4 * D, D}, D), true);
      ps.add(pre + "fc1.bias", zeros(4 * D), false);
      ps.add(pre + "fc2.weight", uniform({width, 4 * D}, 4 * D), true);
      ps.add(pre + "fc2.bias", zeros(width), false);
    }
  } else {
    ps.add("decoder.deconv.weight", uniform({D, out, 3, 3}, D * 9), true);
    ps.add("decoder.deconv.bias", zeros(out), false);
  }
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::forward(const V& x) const {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[0] != 2 || xs[1] != cfg_.M) {
    throw ShapeError("model expects a [2, " + std::to_string(cfg_.M) + ", T, F] spectrogram, got " +
                     shape_to_string(xs));
  }
  if (cfg_.band_split()) {
    auto z = band_split_encode(x);
    if (cfg_.pe == PEKind::kAPE) z = apply_ape(z);
    return band_wise_decode(dual_path(z), x);
  }
  return decode(dual_path(encode(x)));
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::encode(const V& x) const {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[0] != 2 || xs[1] != cfg_.M) {
    throw ShapeError("encoder expects [2, " + std::to_string(cfg_.M) + ", T, F], got " + shape_to_string(xs));
  }
  auto z = reshape(x, {2 * cfg_.M, xs[2], xs[3]});
  z = conv2d(z, p("encoder.conv.weight"), p("encoder.conv.bias"));
  z = global_layer_norm(z, p("encoder.norm.gain"), p("encoder.norm.bias"));
  if (cfg_.pe == PEKind::kAPE) z = attach<Scalar>(PEKind::kAPE).input_add(z);
  return z;
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::dual_path(const V& z) const {
  if (cfg_.B == 0) return z;
  auto y = permute(z, {1, 0, 2});  // [T, D, F]
  for (Index b = 0; b < cfg_.B; ++b) {
    y = frequency_stage(b, y);
    y = permute(y, {2, 1, 0});  // [F, D, T]
    y = temporal_stage(b, y);
    y = permute(y, {2, 1, 0});  // [T, D, F]
  }
  return permute(y, {1, 0, 2});
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::frequency_stage(Index b, const V& z) const {
  return sequence_block("blocks." + std::to_string(b) + ".freq", z);
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::temporal_stage(Index b, const V& z) const {
  return sequence_block("blocks." + std::to_string(b) + ".time", z);
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::sequence_block(const std::string& prefix, const V& z) const {
  const Scalar half(0.5);
  auto y = add(z, scale(conv_swiglu(prefix + ".ffn1", z), half));
  y = add(y, mhsa(prefix + ".attn", y));
  return add(y, scale(conv_swiglu(prefix + ".ffn2", y), half));
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::conv_swiglu(const std::string& prefix, const V& z) const {
  const Index L = z.shape().back();
  auto h = rms_group_norm(z, static_cast<int>(cfg_.G), p(prefix + ".norm.gain"), -2);
  // Both gate branches in one convolution over stacked weights.
  const Index E = cfg_.D * cfg_.ffn_expand;
  auto ab = conv1d(h, concat<Scalar>({p(prefix + ".conv_a.weight"), p(prefix + ".conv_b.weight")}, 0),
                   concat<Scalar>({p(prefix + ".conv_a.bias"), p(prefix + ".conv_b.bias")}, 0), cfg_.stride);
  auto a = slice(ab, 1, 0, E);
  auto g = slice(ab, 1, E, E);
  auto gated = mul(swish(a), g);
  return conv_transpose1d(gated, p(prefix + ".deconv.weight"), p(prefix + ".deconv.bias"), cfg_.stride, L);
}

template <typename Scalar>
AttentionHooks<Scalar> Locoformer<Scalar>::hooks(const std::string& prefix) const {
  if (cfg_.pe == PEKind::kKERPLE) {
    KerpleParams<Scalar> kp{p(prefix + ".kerple_u1"), p(prefix + ".kerple_u2")};
    return attach(cfg_.pe, &kp, cfg_.rope_base);
  }
  auto h = attach<Scalar>(cfg_.pe, nullptr, cfg_.rope_base);
  h.input_add = nullptr;  // applied once at the encoder
  return h;
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::mhsa(const std::string& prefix, const V& z, AttentionTrace<Scalar>* trace) const {
  const auto& zs = z.shape();
  if (zs.size() != 3 || zs[1] != cfg_.D) {
    throw ShapeError("attention expects [batch, " + std::to_string(cfg_.D) + ", L], got " + shape_to_string(zs));
  }
  const Index batch = zs[0], D = cfg_.D, L = zs[2], H = cfg_.H, dh = cfg_.head_dim();
  auto h = rms_group_norm(z, static_cast<int>(cfg_.G), p(prefix + ".norm.gain"), 1);
  const auto no_key_bias = V::constant(Tensor<Scalar>(Shape{D}));
  const auto bias = concat<Scalar>({p(prefix + ".q.bias"), no_key_bias, p(prefix + ".v.bias")}, 0);
  auto qkv = conv1d(h, p(prefix + ".qkv.weight"), bias);
  auto heads = [&](Index part) {
    return permute(reshape(slice(qkv, 1, part * D, D), {batch, H, dh, L}), {0, 1, 3, 2});
  };
  auto o = attention(heads(0), heads(1), heads(2), hooks(prefix), trace);
  o = reshape(permute(o, {0, 1, 3, 2}), {batch, D, L});
  return conv1d(o, p(prefix + ".out.weight"), p(prefix + ".out.bias"));
}

template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& q0, const Var<Scalar>& k0, const Var<Scalar>& v,
                      const AttentionHooks<Scalar>& hooks, AttentionTrace<Scalar>* trace) {
  const auto& qs = q0.shape();
  if (qs.size() != 4 || k0.shape() != qs || v.shape() != qs) {
    throw ShapeError("attention expects matching [batch, H, L, d_head] q/k/v, got " + shape_to_string(qs) +
                     ", " + shape_to_string(k0.shape()) + ", " + shape_to_string(v.shape()));
  }
  const Index L = qs[2];
  auto q = q0;
  auto k = k0;
  if (hooks.qk_transform) {
    q = hooks.qk_transform(q);
    k = hooks.qk_transform(k);
  }
  const Scalar inv_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(qs[3]));
  auto logits = scale(matmul(q, permute(k, {0, 1, 3, 2})), inv_scale);
  if (hooks.score_bias) logits = add(logits, hooks.score_bias(L));
  auto w = softmax(logits, -1);
  if (trace) {
    trace->logits = logits.value();
    trace->weights = w.value();
    trace->values = v.value();
  }
  return matmul(w, v);
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::decode(const V& z) const {
  const auto& zs = z.shape();
  auto y = conv_transpose2d(z, p("decoder.deconv.weight"), p("decoder.deconv.bias"));
  return reshape(y, {2, cfg_.N, cfg_.M, zs[1], zs[2]});
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::band_split_encode(const V& x) const {
  const auto& xs = x.shape();
  const Index F = xs[3], T = xs[2], M = cfg_.M;
  const Index total = std::accumulate(cfg_.band_table.begin(), cfg_.band_table.end(), Index{0});
  if (total != F) {
    throw ConfigError("band table covers " + std::to_string(total) + " bins but the input has F=" +
                      std::to_string(F) + "; a band-split model cannot change sampling rate");
  }
  std::vector<V> cols;
  Index start = 0;
  for (std::size_t q = 0; q < cfg_.band_table.size(); ++q) {
    const Index b = cfg_.band_table[q];
    const std::string pre = "bands." + std::to_string(q) + ".";
    auto band = permute(slice(x, 3, start, b), {2, 0, 1, 3});  // [T, 2, M, b]
    band = reshape(band, {T, 2 * M * b});
    band = rms_group_norm(band, 1, p(pre + "norm.gain"), 1);
    auto feat = add(matmul(band, permute(p(pre + "linear.weight"), {1, 0})), p(pre + "linear.bias"));
    cols.push_back(reshape(permute(feat, {1, 0}), {cfg_.D, T, 1}));
    start += b;
  }
  return concat(cols, 2);
}

template <typename Scalar>
Var<Scalar> Locoformer<Scalar>::band_wise_decode(const V& z, const V& x) const {
  const auto& xs = x.shape();
  const Index T = xs[2], M = cfg_.M, N = cfg_.N;
  const Index Q = static_cast<Index>(cfg_.band_table.size());
  if (z.shape() != Shape{cfg_.D, T, Q}) {
    throw ShapeError("band decoder expects [D, T, Q] = " + shape_to_string({cfg_.D, T, Q}) + ", got " +
                     shape_to_string(z.shape()));
  }
  std::vector<V> bands;
  Index start = 0;
  for (Index q = 0; q < Q; ++q) {
    const Index b = cfg_.band_table[q];
    const std::string pre = "bands." + std::to_string(q) + ".mlp.";
    auto feat = permute(reshape(slice(z, 2, q, 1), {cfg_.D, T}), {1, 0});  // [T, D]
    auto hid = swish(add(matmul(feat, permute(p(pre + "fc1.weight"), {1, 0})), p(pre + "fc1.bias")));
    auto mask = add(matmul(hid, permute(p(pre + "fc2.weight"), {1, 0})), p(pre + "fc2.bias"));
    mask = permute(reshape(mask, {T, 2, N, M, b}), {1, 2, 3, 0, 4});  // [2, N, M, T, b]
    auto mix = reshape(slice(x, 3, start, b), {2, 1, M, T, b});
    auto mr = slice(mask, 0, 0, 1), mi = slice(mask, 0, 1, 1);
    auto xr = slice(mix, 0, 0, 1), xi = slice(mix, 0, 1, 1);
    auto er = sub(mul(mr, xr), mul(mi, xi));
    auto ei = add(mul(mr, xi), mul(mi, xr));
    bands.push_back(concat<Scalar>({er, ei}, 0));
    start += b;
  }
  return concat(bands, 4);
}

// ---------------------------------------------------------------- checkpoint

namespace {
constexpr char kMagic[8] = {'P', 'E', 'L', 'A', 'B', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
const char* scalar_name();
template <>
const char* scalar_name<float>() { return "float32"; }
template <>
const char* scalar_name<double>() { return "float64"; }
}  // namespace

template <typename Scalar>
void save_checkpoint(const std::string& path, const Locoformer<Scalar>& model, const json& extra) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  json header;
  header["config"] = model.config();
  header["scalar"] = scalar_name<Scalar>();
  header["checksum"] = model.params().checksum();
  header["extra"] = extra;
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : model.params().entries()) {
    tensors.push_back({{"name", e.name}, {"shape", e.var.shape()}, {"offset", offset}, {"count", e.var.size()}});
    offset += static_cast<std::uint64_t>(e.var.size()) * sizeof(Scalar);
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  const std::uint32_t version = kVersion;
  const std::uint64_t size = text.size();
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&size), sizeof size);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : model.params().entries()) {
    os.write(reinterpret_cast<const char*>(e.var.value().data()),
             static_cast<std::streamsize>(e.var.size() * sizeof(Scalar)));
  }
  if (!os) throw ConfigError("failed writing checkpoint '" + path + "'");
}

template <typename Scalar>
Locoformer<Scalar> load_checkpoint(const std::string& path, json* extra) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint '" + path + "'");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&size), sizeof size);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw ConfigError("'" + path + "' is not a checkpoint");
  if (version != kVersion) throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  std::string text(size, '\0');
  is.read(text.data(), static_cast<std::streamsize>(size));
  const json header = json::parse(text);
  const auto cfg = header.at("config").get<LocoformerConfig>();
  const std::string scalar = header.at("scalar");
  const bool file_double = scalar == "float64";
  if (!file_double && scalar != "float32") throw ConfigError("unknown checkpoint scalar '" + scalar + "'");
  const std::size_t width = file_double ? sizeof(double) : sizeof(float);
  std::vector<char> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  Locoformer<Scalar> model(cfg, 0);
  std::size_t seen = 0;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    auto& var = model.params().get(name);
    const auto shape = t.at("shape").get<Shape>();
    if (shape != var.shape()) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_to_string(shape) + ", model expects " +
                       shape_to_string(var.shape()));
    }
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<Index>();
    if (offset + count * width > data.size()) throw ConfigError("checkpoint '" + path + "' is truncated");
    auto& dst = var.mutable_value();
    for (Index i = 0; i < count; ++i) {
      if (file_double) {
        double v;
        std::memcpy(&v, data.data() + offset + i * width, width);
        dst[i] = static_cast<Scalar>(v);
      } else {
        float v;
        std::memcpy(&v, data.data() + offset + i * width, width);
        dst[i] = static_cast<Scalar>(v);
      }
    }
    ++seen;
  }
  if (seen != model.params().entries().size()) throw ConfigError("checkpoint '" + path + "' is missing parameters");
  if (extra) *extra = header.value("extra", json::object());
  return model;
}

#define PELAB_INSTANTIATE(S)                                                                       \
  template class ParameterStore<S>;                                                                \
  template class Locoformer<S>;                                                                    \
  template Var<S> attention(const Var<S>&, const Var<S>&, const Var<S>&, const AttentionHooks<S>&, \
                            AttentionTrace<S>*);                                                   \
  template void save_checkpoint(const std::string&, const Locoformer<S>&, const json&);            \
  template Locoformer<S> load_checkpoint<S>(const std::string&, json*);
PELAB_INSTANTIATE_FLOAT_DOUBLE(PELAB_INSTANTIATE)
#undef PELAB_INSTANTIATE

}  // namespace pelab
