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

// Command-line front end: train, sweep, eval, report, preset.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pelab/harness.hpp"

namespace fs = std::filesystem;
using namespace pelab;

namespace {

ExperimentConfig config_or_preset(const std::string& path) {
  return path.empty() ? desk_preset() : load_experiment_config(path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(std::stod(item));
  return out;
}

int cmd_train(const std::string& config, const std::string& pe, std::int64_t seed, const std::string& out,
              std::int64_t epochs) {
  auto cfg = config_or_preset(config);
  auto tc = cfg.train;
  if (!pe.empty()) tc.model.pe = parse_pe_kind(pe);
  if (seed >= 0) tc.seed = static_cast<std::uint64_t>(seed);
  if (epochs >= 0) tc.epochs = epochs;
  const std::string dir = out.empty() ? (fs::path(cfg.output_dir) / (pe_name(tc.model.pe) + "_seed" +
                                                                     std::to_string(tc.seed))).string()
                                      : out;
  fs::create_directories(dir);
  std::ofstream(fs::path(dir) / "train_config.json") << nlohmann::json(tc).dump(2) << '\n';
  auto log = [](const EpochRecord& r) {
    std::printf("epoch %td step %td lr %.3g train %.4f val %.4f val_sisdri %.3f dB\n", r.epoch, r.step, r.lr,
                r.train_loss, r.val_loss, r.val_sisdri);
    std::fflush(stdout);
  };
  bool aborted = false;
  std::string reason;
  if (tc.precision == Precision::kFloat) {
    auto r = train<float>(tc, dir, log);
    aborted = r.aborted;
    reason = r.abort_reason;
  } else {
    auto r = train<double>(tc, dir, log);
    aborted = r.aborted;
    reason = r.abort_reason;
  }
  std::printf("checkpoint: %s\n", (fs::path(dir) / "best.ckpt").c_str());
  if (aborted) {
    std::fprintf(stderr, "training aborted: %s\n", reason.c_str());
    return 3;
  }
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& out, const std::string& pes, const std::string& seeds) {
  auto cfg = config_or_preset(config);
  if (!out.empty()) cfg.output_dir = out;
  if (!pes.empty()) {
    cfg.pe_kinds.clear();
    for (const auto& p : split_list(pes)) cfg.pe_kinds.push_back(parse_pe_kind(p));
  }
  if (!seeds.empty()) {
    cfg.seeds.clear();
    for (const auto& s : split_list(seeds)) cfg.seeds.push_back(std::stoull(s));
  }
  const auto report = run_pe_sweep(cfg);
  emit_report(report, cfg.output_dir, {"csv", "json", "md"});
  std::cout << report_table(report);
  std::printf("\n%zu records in %.1f s -> %s\n", report.records.size(), report.wall_seconds,
              cfg.output_dir.c_str());
  return report.failures.empty() ? 0 : 3;
}

int cmd_eval(const std::string& config, const std::string& checkpoint, const std::string& durations,
             const std::string& rates, const std::string& chunks, std::int64_t items, const std::string& out) {
  auto cfg = config_or_preset(config);
  nlohmann::json extra;
  const auto model = load_checkpoint<double>(checkpoint, &extra);
  cfg.train.model = model.config();
  if (!durations.empty()) cfg.eval.durations = parse_doubles(durations);
  if (!rates.empty()) cfg.eval.rates = parse_doubles(rates);
  if (chunks == "none") {
    cfg.eval.chunk_seconds.clear();
  } else if (!chunks.empty()) {
    cfg.eval.chunk_seconds = parse_doubles(chunks);
  }
  if (items > 0) cfg.eval.items = items;
  // The training duration need not be part of an ad-hoc evaluation.
  if (std::find(cfg.eval.durations.begin(), cfg.eval.durations.end(), cfg.train.chunk_seconds) ==
      cfg.eval.durations.end()) {
    cfg.train.chunk_seconds = cfg.eval.durations.front();
  }
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;
  report.version = version_stamp();
  const std::uint64_t seed = extra.is_object() ? extra.value("seed", std::uint64_t{0}) : 0;
  for (double rate : cfg.eval.rates) {
    auto recs = eval_length_extrapolation(model, cfg, rate, seed, &report.eval_checksums);
    report.records.insert(report.records.end(), recs.begin(), recs.end());
  }
  std::cout << records_csv(report.records);
  if (!out.empty()) emit_report(report, out, {"csv", "json", "md"});
  return 0;
}

int cmd_report(const std::string& in, const std::string& formats, const std::string& out) {
  const fs::path dir(in);
  ExperimentReport report;
  if (fs::exists(dir / "results.json")) {
    std::ifstream f(dir / "results.json");
    report = report_from_json(nlohmann::json::parse(f));
  } else if (fs::exists(dir / "records.jsonl")) {
    // Partial sweep: rebuild from the incremental records.
    std::ifstream f(dir / "records.jsonl");
    nlohmann::json j{{"records", nlohmann::json::array()}, {"failures", nlohmann::json::array()}};
    for (std::string line; std::getline(f, line);) {
      if (line.empty()) continue;
      auto r = nlohmann::json::parse(line);
      if (r.contains("failure")) {
        j["failures"].push_back({{"pe", r["failure"]}, {"seed", r["seed"]}, {"reason", r["reason"]}});
      } else {
        j["records"].push_back(r);
      }
    }
    if (fs::exists(dir / "config.json")) j["config"] = nlohmann::json::parse(std::ifstream(dir / "config.json"));
    report = report_from_json(j);
  } else {
    throw ConfigError("no results.json or records.jsonl in " + in);
  }
  emit_report(report, out.empty() ? in : out, split_list(formats));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Positional-encoding lab for TF-Locoformer separation models"};
  app.require_subcommand(1);

  std::string config, pe, out, pes, seeds, checkpoint, durations, rates, chunks, in, formats = "csv,json,md";
  std::int64_t seed = -1, epochs = -1, items = 0;

  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--config", config, "Experiment config (JSON); default: desk preset");
  train_cmd->add_option("--pe", pe, "ape, kerple, rope or nope");
  train_cmd->add_option("--seed", seed, "Initialisation seed");
  train_cmd->add_option("--epochs", epochs, "Override train.epochs");
  train_cmd->add_option("--out", out, "Output directory");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate every PE kind");
  sweep_cmd->add_option("--config", config, "Experiment config (JSON); default: desk preset");
  sweep_cmd->add_option("--out", out, "Override output_dir");
  sweep_cmd->add_option("--pe", pes, "Override pe_kinds, comma separated");
  sweep_cmd->add_option("--seeds", seeds, "Override seeds, comma separated");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint over lengths and rates");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", config, "Experiment config supplying eval defaults");
  eval_cmd->add_option("--durations", durations, "Input lengths in seconds, e.g. 1,2,4");
  eval_cmd->add_option("--rates", rates, "Sampling rates in Hz, e.g. 8000,16000");
  eval_cmd->add_option("--chunks", chunks, "Chunk lengths T' in seconds, or 'none'");
  eval_cmd->add_option("--items", items, "Mixtures per cell");
  eval_cmd->add_option("--out", out, "Write results.csv/json and table.md here");

  auto* report_cmd = app.add_subcommand("report", "Re-emit a report from a run directory");
  report_cmd->add_option("--in", in, "Run directory")->required();
  report_cmd->add_option("--format", formats, "Comma-separated subset of csv,json,md");
  report_cmd->add_option("--out", out, "Output directory; default: --in");

  auto* preset_cmd = app.add_subcommand("preset", "Print the desk preset config");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(config, pe, seed, out, epochs);
    if (*sweep_cmd) return cmd_sweep(config, out, pes, seeds);
    if (*eval_cmd) return cmd_eval(config, checkpoint, durations, rates, chunks, items, out);
    if (*report_cmd) return cmd_report(in, formats, out);
    if (*preset_cmd) {
      std::cout << nlohmann::json(desk_preset()).dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
