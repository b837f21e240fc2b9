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

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pelab {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

/// Incompatible tensor extents. The message names every shape involved.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid model, signal or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the autodiff graph (non-scalar loss, double backward).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_to_string(const Shape& shape);
Index shape_numel(const Shape& shape);

/// Resolves a possibly negative axis against `rank`.
int normalize_axis(int axis, int rank);

/// 64-bit FNV-1a over raw bytes; used for checksums of parameters and audio.
std::uint64_t fnv1a(const void* data, std::size_t bytes,
                    std::uint64_t seed = 14695981039346656037ULL);

/// Deterministic child seed derivation (splitmix64 of the pair).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pelab
