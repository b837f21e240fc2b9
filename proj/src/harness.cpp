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

#include "pelab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef PELAB_VERSION
#define PELAB_VERSION "unknown"
#endif

namespace pelab {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const EvalSpec& e) {
  j = nlohmann::json{{"durations", e.durations},
                     {"rates", e.rates},
                     {"chunk_seconds", e.chunk_seconds},
                     {"items", e.items},
                     {"seed", e.seed}};
}

void from_json(const nlohmann::json& j, EvalSpec& e) {
  if (j.contains("durations")) j.at("durations").get_to(e.durations);
  if (j.contains("rates")) j.at("rates").get_to(e.rates);
  if (j.contains("chunk_seconds")) j.at("chunk_seconds").get_to(e.chunk_seconds);
  if (j.contains("items")) j.at("items").get_to(e.items);
  if (j.contains("seed")) j.at("seed").get_to(e.seed);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.pe_kinds) kinds.push_back(pe_name(k));
  j = nlohmann::json{{"name", c.name},     {"train", c.train}, {"pe_kinds", kinds},
                     {"seeds", c.seeds},   {"eval", c.eval},   {"output_dir", c.output_dir}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("name")) j.at("name").get_to(c.name);
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("pe_kinds")) {
    c.pe_kinds.clear();
    for (const auto& k : j.at("pe_kinds")) c.pe_kinds.push_back(parse_pe_kind(k.get<std::string>()));
  }
  if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
  if (j.contains("eval")) c.eval = j.at("eval").get<EvalSpec>();
  if (j.contains("output_dir")) j.at("output_dir").get_to(c.output_dir);
  c.validate();
}

void ExperimentConfig::validate() const {
  train.model.validate();
  if (pe_kinds.empty() || seeds.empty()) throw ConfigError("pe_kinds and seeds must be non-empty");
  if (eval.durations.empty() || eval.rates.empty()) throw ConfigError("eval durations and rates must be non-empty");
  if (eval.items < 1) throw ConfigError("eval.items must be >= 1");
  for (double d : eval.durations) {
    if (d <= 0.0) throw ConfigError("eval durations must be positive");
  }
  for (double t : eval.chunk_seconds) {
    if (t <= 0.0) throw ConfigError("chunk_seconds must be positive");
  }
  if (std::find(eval.durations.begin(), eval.durations.end(), train.chunk_seconds) == eval.durations.end()) {
    throw ConfigError("eval durations must include the training duration " + std::to_string(train.chunk_seconds));
  }
  for (double r : eval.rates) {
    if (train.model.band_split() && r != train.rate) {
      throw ConfigError("band-split models cannot be evaluated at a rate other than the training rate");
    }
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.name = "desk";
  auto& m = c.train.model;
  m.D = 16;
  m.B = 1;
  m.K = 4;
  m.H = 2;
  m.G = 2;
  m.N = 2;
  m.M = 1;
  c.train.epochs = 2;
  c.train.steps_per_epoch = 10;
  c.train.batch = 2;
  c.train.chunk_seconds = 1.0;
  c.train.rate = 8000.0;
  c.train.val_items = 2;
  c.train.schedule.warmup_steps = 20;
  c.eval.items = 2;
  c.output_dir = "runs/desk";
  return c;
}

Index expected_record_count(const ExperimentConfig& cfg) {
  return static_cast<Index>(cfg.pe_kinds.size() * cfg.seeds.size() * cfg.eval.rates.size() *
                            cfg.eval.durations.size() * (1 + cfg.eval.chunk_seconds.size()));
}

std::string condition_direct() { return "direct"; }

std::string condition_chunked(double chunk_seconds) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "chunk=%gs", chunk_seconds);
  return buf;
}

std::vector<EvalItem> eval_set_for(const ExperimentConfig& cfg, double duration, double rate) {
  return make_eval_set(cfg.eval.items, duration, rate, cfg.eval.seed, static_cast<int>(cfg.train.model.N),
                       cfg.train.model.M);
}

namespace {

std::string checksum_key(const std::string& pe, double rate, double duration) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s/%g/%g", pe.c_str(), rate, duration);
  return buf;
}

MetricRecord sisdri_record(const std::string& pe, const std::string& condition, double duration, double rate,
                           std::uint64_t seed, double value) {
  MetricRecord r;
  r.pe = pe;
  r.metric = "sisdri";
  r.condition = condition;
  r.duration_s = duration;
  r.rate_hz = rate;
  r.seed = seed;
  r.value_db = value;
  return r;
}

}  // namespace

template <typename Scalar>
std::vector<MetricRecord> eval_length_extrapolation(const Locoformer<Scalar>& model, const ExperimentConfig& cfg,
                                                    double rate, std::uint64_t seed,
                                                    std::map<std::string, std::uint64_t>* checksums) {
  if (model.config().band_split() && rate != cfg.train.rate) {
    throw ConfigError("band-split model evaluated at an untrained rate");
  }
  const std::string pe = pe_name(model.config().pe);
  const auto& stft_cfg = cfg.train.stft;
  const SeparationFn direct = [&](const Waveform& w) { return separate(model, w, stft_cfg); };
  std::vector<MetricRecord> out;
  for (double d : cfg.eval.durations) {
    const auto items = eval_set_for(cfg, d, rate);
    if (checksums) (*checksums)[checksum_key(pe, rate, d)] = eval_set_checksum(items);
    out.push_back(sisdri_record(pe, condition_direct(), d, rate, seed, mean_sisdri(items, direct)));
    for (double t : cfg.eval.chunk_seconds) {
      const SeparationFn chunked = [&](const Waveform& w) { return chunked_separate(w, direct, t, stft_cfg); };
      out.push_back(sisdri_record(pe, condition_chunked(t), d, rate, seed, mean_sisdri(items, chunked)));
    }
  }
  return out;
}

template <typename Scalar>
std::vector<MetricRecord> eval_sfi(const Locoformer<Scalar>& model, const ExperimentConfig& cfg, double duration,
                                   std::uint64_t seed) {
  if (model.config().band_split()) {
    throw ConfigError("sampling-frequency evaluation needs a model without band splitting");
  }
  const std::string pe = pe_name(model.config().pe);
  const auto before = model.params().checksum();
  std::vector<MetricRecord> out;
  for (double rate : cfg.eval.rates) {
    const auto items = eval_set_for(cfg, duration, rate);
    const SeparationFn sep = [&](const Waveform& w) { return separate(model, w, cfg.train.stft); };
    out.push_back(sisdri_record(pe, condition_direct(), duration, rate, seed, mean_sisdri(items, sep)));
    if (model.params().checksum() != before) {
      throw NumericError("parameters changed while evaluating at " + std::to_string(rate) + " Hz");
    }
  }
  return out;
}

int worker_threads() {
  if (const char* env = std::getenv("PE_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string version_stamp() { return PELAB_VERSION; }

namespace {

nlohmann::json record_json(const MetricRecord& r) {
  return nlohmann::json{{"pe", r.pe},           {"metric", r.metric}, {"condition", r.condition},
                        {"duration_s", r.duration_s}, {"rate_hz", r.rate_hz}, {"seed", r.seed},
                        {"value_db", r.value_db}, {"source", r.source}, {"capped", r.capped}};
}

MetricRecord record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  j.at("pe").get_to(r.pe);
  j.at("metric").get_to(r.metric);
  j.at("condition").get_to(r.condition);
  j.at("duration_s").get_to(r.duration_s);
  j.at("rate_hz").get_to(r.rate_hz);
  j.at("seed").get_to(r.seed);
  j.at("value_db").get_to(r.value_db);
  if (j.contains("source")) j.at("source").get_to(r.source);
  if (j.contains("capped")) j.at("capped").get_to(r.capped);
  return r;
}

struct RunOutput {
  std::vector<MetricRecord> records;
  std::map<std::string, std::uint64_t> checksums;
  bool failed = false;
  std::string reason;
};

template <typename Scalar>
RunOutput run_one(const ExperimentConfig& cfg, PEKind kind, std::uint64_t seed, const std::string& dir) {
  auto tc = cfg.train;
  tc.model.pe = kind;
  tc.seed = seed;
  auto res = train<Scalar>(tc, dir);
  RunOutput out;
  if (res.aborted) {
    out.failed = true;
    out.reason = res.abort_reason;
  }
  ExperimentConfig ec = cfg;
  ec.train = tc;
  const auto before = res.model.params().checksum();
  for (double rate : cfg.eval.rates) {
    auto recs = eval_length_extrapolation(res.model, ec, rate, seed, &out.checksums);
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  }
  if (res.model.params().checksum() != before) throw NumericError("parameters changed during evaluation");
  return out;
}

}  // namespace

ExperimentReport run_pe_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = cfg;
  report.version = version_stamp();

  struct Job {
    PEKind kind;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto kind : cfg.pe_kinds) {
    for (auto seed : cfg.seeds) jobs.push_back({kind, seed});
  }
  std::vector<RunOutput> outputs(jobs.size());

  fs::create_directories(cfg.output_dir);
  {
    std::ofstream(fs::path(cfg.output_dir) / "config.json") << nlohmann::json(cfg).dump(2) << '\n';
  }
  std::ofstream partial(fs::path(cfg.output_dir) / "records.jsonl");
  if (!partial) throw ConfigError("cannot write into " + cfg.output_dir);
  std::mutex io;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      const std::string pe = pe_name(job.kind);
      const auto dir = (fs::path(cfg.output_dir) / (pe + "_seed" + std::to_string(job.seed))).string();
      RunOutput out;
      try {
        out = cfg.train.precision == Precision::kFloat ? run_one<float>(cfg, job.kind, job.seed, dir)
                                                       : run_one<double>(cfg, job.kind, job.seed, dir);
      } catch (const std::exception& e) {
        out.failed = true;
        out.reason = e.what();
      }
      std::lock_guard<std::mutex> lock(io);
      for (const auto& r : out.records) partial << record_json(r).dump() << '\n';
      if (out.failed) {
        partial << nlohmann::json{{"failure", pe}, {"seed", job.seed}, {"reason", out.reason}}.dump() << '\n';
      }
      partial.flush();
      outputs[i] = std::move(out);
    }
  };
  const int threads = std::min<int>(worker_threads(), static_cast<int>(jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& out = outputs[i];
    report.records.insert(report.records.end(), out.records.begin(), out.records.end());
    report.eval_checksums.insert(out.checksums.begin(), out.checksums.end());
    if (out.failed) report.failures.push_back({pe_name(jobs[i].kind), jobs[i].seed, out.reason});
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string records_csv(const std::vector<MetricRecord>& records) {
  std::string out = "pe,metric,condition,duration_s,rate_hz,seed,value_db\n";
  char line[512];
  for (const auto& r : records) {
    for (const auto* s : {&r.pe, &r.metric, &r.condition}) {
      if (s->find_first_of(",\"\n") != std::string::npos) throw ConfigError("CSV field contains a separator: " + *s);
    }
    std::snprintf(line, sizeof(line), "%s,%s,%s,%.6f,%.6f,%llu,%.6f\n", r.pe.c_str(), r.metric.c_str(),
                  r.condition.c_str(), r.duration_s, r.rate_hz, static_cast<unsigned long long>(r.seed), r.value_db);
    out += line;
  }
  return out;
}

std::vector<MetricRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "pe,metric,condition,duration_s,rate_hz,seed,value_db") {
    throw ConfigError("unexpected CSV header: " + line);
  }
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw ConfigError("CSV row with " + std::to_string(f.size()) + " fields: " + line);
    MetricRecord r;
    r.pe = f[0];
    r.metric = f[1];
    r.condition = f[2];
    try {
      r.duration_s = std::stod(f[3]);
      r.rate_hz = std::stod(f[4]);
      r.seed = std::stoull(f[5]);
      r.value_db = std::stod(f[6]);
    } catch (const std::exception&) {
      throw ConfigError("malformed CSV row: " + line);
    }
    out.push_back(r);
  }
  return out;
}

nlohmann::json report_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["version"] = report.version;
  j["wall_seconds"] = report.wall_seconds;
  j["config"] = report.config;
  j["records"] = nlohmann::json::array();
  for (const auto& r : report.records) j["records"].push_back(record_json(r));
  j["eval_checksums"] = report.eval_checksums;
  j["failures"] = nlohmann::json::array();
  for (const auto& f : report.failures) j["failures"].push_back({{"pe", f.pe}, {"seed", f.seed}, {"reason", f.reason}});
  return j;
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.version = j.value("version", "");
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.config = j.value("config", nlohmann::json::object());
  for (const auto& rec : j.at("records")) r.records.push_back(record_from_json(rec));
  if (j.contains("eval_checksums")) j.at("eval_checksums").get_to(r.eval_checksums);
  if (j.contains("failures")) {
    for (const auto& f : j.at("failures")) {
      r.failures.push_back({f.at("pe").get<std::string>(), f.at("seed").get<std::uint64_t>(),
                            f.at("reason").get<std::string>()});
    }
  }
  return r;
}

namespace {

std::string khz(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%gkHz", rate / 1000.0);
  return buf;
}

std::string seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%gs", s);
  return buf;
}

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

std::string report_table(const ExperimentReport& report) {
  double train_rate = 0.0, train_len = 0.0;
  if (report.config.contains("train")) {
    train_rate = report.config["train"].value("rate", 0.0);
    train_len = report.config["train"].value("chunk_seconds", 0.0);
  }
  std::vector<std::pair<std::string, std::uint64_t>> rows;
  std::vector<std::pair<double, double>> cols;  // (rate, duration)
  std::vector<std::string> conditions;
  for (const auto& r : report.records) {
    push_unique(rows, {r.pe, r.seed});
    push_unique(cols, {r.rate_hz, r.duration_s});
    push_unique(conditions, r.condition);
  }
  std::sort(cols.begin(), cols.end());
  auto lookup = [&](const std::pair<std::string, std::uint64_t>& row, double rate, double dur,
                    const std::string& cond) -> std::string {
    for (const auto& r : report.records) {
      if (r.pe == row.first && r.seed == row.second && r.rate_hz == rate && r.duration_s == dur &&
          r.condition == cond && r.metric == "sisdri") {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", r.value_db);
        return buf;
      }
    }
    return "-";
  };

  std::ostringstream md;
  md << "Average SI-SDRi [dB]. Columns are evaluation rate and input length; `matched` marks the training rate "
        "and length, the remaining lengths are extended.\n";
  for (const auto& cond : conditions) {
    md << "\n### " << (cond == condition_direct() ? "Direct inference" : "Chunked inference, " + cond) << "\n\n";
    md << "| ID | Train SF | Train len[s] | PE | seed |";
    for (const auto& [rate, dur] : cols) {
      md << ' ' << khz(rate) << ' ' << seconds(dur);
      if (rate == train_rate && dur == train_len) md << " (matched)";
      md << " |";
    }
    md << "\n|---|---|---|---|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) md << "---|";
    md << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
      md << "| A" << (i + 1) << " | " << khz(train_rate) << " | " << train_len << " | " << rows[i].first << " | "
         << rows[i].second << " |";
      for (const auto& [rate, dur] : cols) md << ' ' << lookup(rows[i], rate, dur, cond) << " |";
      md << '\n';
    }
  }
  if (!report.failures.empty()) {
    md << "\nFailed runs:\n\n";
    for (const auto& f : report.failures) md << "- " << f.pe << " seed " << f.seed << ": " << f.reason << '\n';
  }
  return md.str();
}

void emit_report(const ExperimentReport& report, const std::string& dir, const std::vector<std::string>& formats) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = fs::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << body;
    if (!out) throw ConfigError("write failed for " + path.string());
  };
  for (const auto& f : formats) {
    if (f == "csv") {
      write("results.csv", records_csv(report.records));
    } else if (f == "json") {
      write("results.json", report_json(report).dump(2) + "\n");
    } else if (f == "md") {
      write("table.md", report_table(report));
    } else {
      throw ConfigError("unknown report format '" + f + "' (csv, json, md)");
    }
  }
}

#define PELAB_INSTANTIATE(S)                                                                                       \
  template std::vector<MetricRecord> eval_length_extrapolation(const Locoformer<S>&, const ExperimentConfig&,     \
                                                               double, std::uint64_t,                              \
                                                               std::map<std::string, std::uint64_t>*);             \
  template std::vector<MetricRecord> eval_sfi(const Locoformer<S>&, const ExperimentConfig&, double, std::uint64_t);
PELAB_INSTANTIATE(float)
PELAB_INSTANTIATE(double)
#undef PELAB_INSTANTIATE

}  // namespace pelab
