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

#include "pelab/trainer.hpp"

namespace pelab {

/// Evaluation axes shared by every PE kind of a sweep.
struct EvalSpec {
  std::vector<double> durations{1.0, 2.0, 4.0};
  std::vector<double> rates{8000.0, 16000.0};
  /// Segment lengths T' for chunked inference (hop T'/2).
  std::vector<double> chunk_seconds{1.0};
  Index items = 4;
  std::uint64_t seed = 2026;
};

struct ExperimentConfig {
  std::string name = "desk";
  TrainConfig train;
  std::vector<PEKind> pe_kinds{PEKind::kAPE, PEKind::kKERPLE, PEKind::kRoPE, PEKind::kNoPE};
  std::vector<std::uint64_t> seeds{0};
  EvalSpec eval;
  std::string output_dir = "runs/desk";

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

void to_json(nlohmann::json& j, const EvalSpec& e);
void from_json(const nlohmann::json& j, EvalSpec& e);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::string& path);

/// Small preset whose 4-PE sweep runs in minutes on one core.
ExperimentConfig desk_preset();

/// Records of a full sweep for `cfg`: |pe| * |seeds| * |rates| *
/// |durations| * (1 + |chunk_seconds|).
Index expected_record_count(const ExperimentConfig& cfg);

struct RunFailure {
  std::string pe;
  std::uint64_t seed = 0;
  std::string reason;
};

struct ExperimentReport {
  std::vector<MetricRecord> records;
  nlohmann::json config;
  std::string version;
  double wall_seconds = 0.0;
  /// Eval-set checksum per (pe, rate, duration), keyed "pe/rate/duration".
  std::map<std::string, std::uint64_t> eval_checksums;
  std::vector<RunFailure> failures;
};

std::string condition_direct();
std::string condition_chunked(double chunk_seconds);

/// Eval set of one (duration, rate) cell; identical for every PE kind.
std::vector<EvalItem> eval_set_for(const ExperimentConfig& cfg, double duration, double rate);

/// Per duration: direct inference and chunked inference for each T',
/// as SI-SDRi records. When `checksums` is given, stores each eval-set
/// checksum under "pe/rate/duration".
template <typename Scalar>
std::vector<MetricRecord> eval_length_extrapolation(const Locoformer<Scalar>& model, const ExperimentConfig& cfg,
                                                    double rate, std::uint64_t seed,
                                                    std::map<std::string, std::uint64_t>* checksums = nullptr);

/// Direct SI-SDRi per rate at `duration`. Throws ConfigError for band-split
/// models and NumericError if the parameter checksum changes.
template <typename Scalar>
std::vector<MetricRecord> eval_sfi(const Locoformer<Scalar>& model, const ExperimentConfig& cfg, double duration,
                                   std::uint64_t seed);

/// Trains every (pe, seed), evaluates it and appends records to
/// <output_dir>/records.jsonl as they arrive. A training abort is recorded
/// in `failures` and the sweep continues. Up to worker_threads() runs
/// execute concurrently; the record order does not depend on it.
ExperimentReport run_pe_sweep(const ExperimentConfig& cfg);

/// PE_LAB_THREADS if set (>= 1), otherwise the hardware concurrency.
int worker_threads();

std::string version_stamp();

std::string records_csv(const std::vector<MetricRecord>& records);
std::vector<MetricRecord> parse_records_csv(const std::string& text);
nlohmann::json report_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);
/// Markdown table: one row per (pe, seed), one column per (rate,
/// duration) for direct inference, matched cells marked.
std::string report_table(const ExperimentReport& report);

/// Writes results.csv / results.json / table.md for formats among
/// "csv", "json", "md". Throws ConfigError if `dir` is not writable.
void emit_report(const ExperimentReport& report, const std::string& dir, const std::vector<std::string>& formats);

}  // namespace pelab
