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
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pelab/ops.hpp"
#include "pelab/posenc.hpp"

namespace pelab {

/// Architecture hyperparameters; fully determines the parameter set.
struct LocoformerConfig {
  Index D = 32;          // feature dimension
  Index B = 2;           // dual-path blocks
  Index K = 4;           // ConvSwiGLU kernel
  Index stride = 1;      // ConvSwiGLU stride
  Index H = 4;           // attention heads
  Index ffn_expand = 4;  // ConvSwiGLU hidden width multiplier
  Index N = 2;           // sources
  Index M = 1;           // channels
  Index G = 4;           // RMSGroupNorm groups
  PEKind pe = PEKind::kNoPE;
  double rope_base = 10000.0;
  /// Band widths for the band-split variant; empty for the plain model.
  std::vector<Index> band_table;

  bool band_split() const { return !band_table.empty(); }
  Index head_dim() const { return D / H; }
  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const LocoformerConfig& c);
void from_json(const nlohmann::json& j, LocoformerConfig& c);

/// Uniform band table of `bands` widths summing to `bins`; the first
/// bins % bands widths are one larger.
std::vector<Index> uniform_band_table(Index bins, Index bands);

/// Named parameters in registration order.
template <typename Scalar>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var<Scalar> var;
    bool decay = true;  // subject to weight decay
  };

  Var<Scalar>& add(const std::string& name, Tensor<Scalar> value, bool decay);
  const Var<Scalar>& get(const std::string& name) const;
  Var<Scalar>& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  Index count() const;  // total scalar count
  std::uint64_t checksum() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Number of scalar parameters implied by `cfg`.
Index param_count(const LocoformerConfig& cfg);

/// Attention internals captured for inspection.
template <typename Scalar>
struct AttentionTrace {
  Tensor<Scalar> logits;   // [batch, H, L, L] after scaling and bias
  Tensor<Scalar> weights;  // softmax of logits
  Tensor<Scalar> values;   // [batch, H, L, d_head]
};

/// Dual-path TF transformer with macaron ConvSwiGLU/MHSA blocks.
/// Activations use the layout [D, T, F]; the frequency stage folds T into
/// the batch, the temporal stage folds F.
template <typename Scalar>
class Locoformer {
 public:
  using V = Var<Scalar>;

  Locoformer(const LocoformerConfig& cfg, std::uint64_t seed);

  const LocoformerConfig& config() const { return cfg_; }
  ParameterStore<Scalar>& params() { return params_; }
  const ParameterStore<Scalar>& params() const { return params_; }

  /// Mixture spectrogram [2, M, T, F] -> source estimates [2, N, M, T, F].
  V forward(const V& x) const;

  V encode(const V& x) const;
  V dual_path(const V& z) const;
  V decode(const V& z) const;
  V band_split_encode(const V& x) const;
  V band_wise_decode(const V& z, const V& x) const;

  /// One of the two stages of block b; z: [batch, D, L].
  V frequency_stage(Index b, const V& z) const;
  V temporal_stage(Index b, const V& z) const;

  /// Building blocks addressed by parameter prefix, e.g. "blocks.0.freq".
  V sequence_block(const std::string& prefix, const V& z) const;
  V conv_swiglu(const std::string& prefix, const V& z) const;
  V mhsa(const std::string& prefix, const V& z, AttentionTrace<Scalar>* trace = nullptr) const;
  /// Hooks of the stage at `prefix` (KERPLE parameters are per stage).
  AttentionHooks<Scalar> hooks(const std::string& prefix) const;

 private:
  void init_parameters(std::uint64_t seed);
  const V& p(const std::string& name) const { return params_.get(name); }

  LocoformerConfig cfg_;
  ParameterStore<Scalar> params_;
};

/// Scaled dot-product attention over q, k, v: [batch, H, L, d_head].
template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v,
                      const AttentionHooks<Scalar>& hooks, AttentionTrace<Scalar>* trace = nullptr);

/// Checkpoint container: "PELABCKP", u32 version, u64 header size, JSON
/// header (config, scalar, tensor table), then little-endian tensor data.
template <typename Scalar>
void save_checkpoint(const std::string& path, const Locoformer<Scalar>& model,
                     const nlohmann::json& extra = nlohmann::json::object());

template <typename Scalar>
Locoformer<Scalar> load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr);

}  // namespace pelab
