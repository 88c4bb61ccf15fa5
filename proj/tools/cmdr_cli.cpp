// Copyright 2026 The CMDR Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// cmdr: command-line front end for preprocessing, synthesis, training,
// inference, evaluation, ablation and benchmarking.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "cmdr/pipeline.hpp"

namespace {

using namespace cmdr;
using Json = nlohmann::json;
namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> variant;
  std::optional<double> fpr_limit;
  std::optional<std::string> out;
  std::optional<std::string> dataset;
  std::string input;
  bool quiet = false;
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? config_from_json(Json::object()) : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.mode) cfg.mode = parse_mode(*f.mode);
  if (f.variant) cfg.fusion.variant = fusion::parse_variant(*f.variant);
  if (f.fpr_limit) cfg.fpr_limit = *f.fpr_limit;
  if (f.out) cfg.out_dir = *f.out;
  if (f.dataset) cfg.dataset = *f.dataset;
  cfg.validate();
  return cfg;
}

pipeline::Logger logger(const Flags& f) {
  if (f.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << "\n"; };
}

fs::path infer_dir(const RunConfig& cfg) {
  std::string name(mode_name(cfg.mode));
  if (cfg.mode == Mode::kJoint) name += "-" + std::string(fusion::variant_name(cfg.fusion.variant));
  return fs::path(cfg.out_dir) / "infer" / name;
}

class Ledger {
 public:
  Ledger(std::string command, const RunConfig& cfg)
      : command_(std::move(command)), cfg_(cfg), start_(std::chrono::steady_clock::now()) {}

  void commit(const Json& metrics, const Json& artifacts) const {
    io::LedgerEntry e;
    e.command = command_;
    e.config = to_json(cfg_);
    e.config_hash = config_hash(cfg_);
    e.metrics = metrics;
    e.seed = cfg_.seed;
    e.artifacts = artifacts;
    e.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::append_ledger(fs::path(cfg_.out_dir) / "ledger.jsonl", e);
    std::cout << Json{{"command", command_}, {"metrics", metrics}}.dump(2) << "\n";
  }

 private:
  std::string command_;
  RunConfig cfg_;
  std::chrono::steady_clock::time_point start_;
};

void run_synth(const Flags& f) {
  const RunConfig cfg = resolve(f);
  Ledger ledger("synth", cfg);
  const fs::path dir = cfg.dataset_dir();
  const bool with_2d = cfg.mode != Mode::k3D;
  const DatasetManifest m = pipeline::write_synthetic(cfg, dir, with_2d);
  ledger.commit({{"samples", m.samples.size()},
                 {"train", m.count(Split::kTrain)},
                 {"test_normal", m.count(Split::kTest, Label::kNormal)},
                 {"test_anomalous", m.count(Split::kTest, Label::kAnomalous)}},
                {(dir / pipeline::kManifestFile).string()});
}

void run_preprocess(const Flags& f) {
  const RunConfig cfg = resolve(f);
  if (f.input.empty()) throw ContractViolation("preprocess requires --input <scan file or directory>");
  Ledger ledger("preprocess", cfg);
  const fs::path dir = cfg.dataset_dir();
  const DatasetManifest m = pipeline::preprocess_scans(cfg, f.input, dir);
  ledger.commit({{"chunks", m.samples.size()},
                 {"train", m.count(Split::kTrain)},
                 {"test_normal", m.count(Split::kTest, Label::kNormal)},
                 {"test_anomalous", m.count(Split::kTest, Label::kAnomalous)},
                 {"grid", {m.grid_height, m.grid_width}}},
                {(dir / pipeline::kManifestFile).string()});
}

void run_train(const Flags& f) {
  const RunConfig cfg = resolve(f);
  Ledger ledger("train", cfg);
  const fs::path data = cfg.dataset_dir();
  const DatasetManifest m = pipeline::load_dataset(data, logger(f));
  io::SampleReader reader(m, data);
  const auto report = pipeline::train(cfg, reader, cfg.mode, logger(f));
  const fs::path models = fs::path(cfg.out_dir) / "models";
  pipeline::save_models(models, report.models, cfg.mode);
  Json finals;
  for (const auto& [name, v] : report.losses.items()) finals[name] = v.at("final");
  ledger.commit({{"final_loss", finals}, {"loss_trace", report.losses}}, {models.string()});
}

void run_infer(const Flags& f) {
  const RunConfig cfg = resolve(f);
  Ledger ledger("infer", cfg);
  const fs::path data = cfg.dataset_dir();
  const DatasetManifest m = pipeline::load_dataset(data, logger(f));
  pipeline::require_modalities(m, cfg.mode);
  const auto models = pipeline::load_models(fs::path(cfg.out_dir) / "models", cfg, m, cfg.mode);
  io::SampleReader reader(m, data);
  const fs::path dir = infer_dir(cfg);
  std::string lines;
  std::size_t n = 0;
  for (std::size_t i : reader.indices(Split::kTest)) {
    const auto item = pipeline::discrepancies(models, reader, i, cfg.mode);
    const auto scored = pipeline::score(item, cfg.fusion, cfg.mode);
    io::write_scores(dir / "maps" / (item.id + ".cmdr"), scored.map);
    io::write_mask(dir / "maps" / (item.id + ".valid.cmdr"), scored.map.height, scored.map.width,
                   scored.map.validity);
    lines += Json{{"id", item.id}, {"score", scored.score}}.dump() + "\n";
    ++n;
  }
  io::atomic_write(dir / "scores.jsonl", lines);
  ledger.commit({{"samples", n}, {"mode", mode_name(cfg.mode)},
                 {"variant", fusion::variant_name(cfg.fusion.variant)}},
                {dir.string()});
}

void run_evaluate(const Flags& f) {
  const RunConfig cfg = resolve(f);
  Ledger ledger("evaluate", cfg);
  const fs::path data = cfg.dataset_dir();
  const DatasetManifest m = pipeline::load_dataset(data, logger(f));
  io::SampleReader reader(m, data);
  const fs::path dir = infer_dir(cfg);
  std::map<std::string, double> scores;
  {
    std::istringstream in(io::read_text(dir / "scores.jsonl"));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) {
        const Json j = Json::parse(line);
        scores[j.at("id").get<std::string>()] = j.at("score").get<double>();
      }
  }
  std::vector<pipeline::TestItem> items;
  std::vector<fusion::ScoredMap> scored;
  for (std::size_t i : reader.indices(Split::kTest)) {
    const auto& r = m.samples[i];
    const auto it = scores.find(r.id);
    if (it == scores.end())
      throw Error("missing inference", "no score for test sample '" + r.id + "' in " + dir.string());
    pipeline::TestItem item;
    item.id = r.id;
    item.label = r.label;
    item.tag = r.tag;
    item.gt = reader.gt_mask(i);
    AnomalyMap map(m.grid_height, m.grid_width,
                   io::read_mask(dir / "maps" / (r.id + ".valid.cmdr"), m.grid_height, m.grid_width));
    map.scores = io::read_scores(dir / "maps" / (r.id + ".cmdr"), m.grid_height, m.grid_width);
    scored.push_back({std::move(map), it->second});
    items.push_back(std::move(item));
  }
  const auto e = pipeline::evaluate(scored, items, cfg.fpr_limit, cfg.pro);
  const Json metrics = e.to_json(cfg.fpr_limit);
  io::atomic_write(dir / "metrics.json", metrics.dump(2) + "\n");
  ledger.commit(metrics, {(dir / "metrics.json").string()});
}

void run_ablate(const Flags& f) {
  RunConfig cfg = resolve(f);
  cfg.mode = Mode::kJoint;
  Ledger ledger("ablate", cfg);
  const fs::path data = cfg.dataset_dir();
  const DatasetManifest m = pipeline::load_dataset(data, logger(f));
  const auto models = pipeline::load_models(fs::path(cfg.out_dir) / "models", cfg, m, Mode::kJoint);
  io::SampleReader reader(m, data);
  const auto items = pipeline::discrepancies(models, reader, Mode::kJoint);

  char limit_col[32];
  std::snprintf(limit_col, sizeof limit_col, "AUPRO@%g%%", 100.0 * cfg.fpr_limit);
  Json rows = Json::array();
  std::string table = std::string("| Variant | I-AUROC | P-AUROC | ") + limit_col +
                      " | AUPRO@1% |\n|---|---|---|---|---|\n";
  for (auto v : fusion::kAllVariants) {
    auto fc = cfg.fusion;
    fc.variant = v;
    std::vector<fusion::ScoredMap> scored;
    for (const auto& item : items) scored.push_back(pipeline::score(item, fc, Mode::kJoint));
    const auto e = pipeline::evaluate(scored, items, cfg.fpr_limit, cfg.pro);
    rows.push_back({{"variant", fusion::variant_name(v)},
                    {"title", fusion::variant_title(v)},
                    {"metrics", e.to_json(cfg.fpr_limit)}});
    char line[256];
    std::snprintf(line, sizeof line, "| %s | %.4f | %.4f | %.4f | %.4f |\n",
                  std::string(fusion::variant_title(v)).c_str(), e.i_auroc, e.p_auroc, e.aupro,
                  e.aupro_1);
    table += line;
  }
  const fs::path dir = fs::path(cfg.out_dir) / "ablate";
  io::atomic_write(dir / "ablation.json", rows.dump(2) + "\n");
  io::atomic_write(dir / "ablation.md", table);
  if (!f.quiet) std::cerr << table;
  ledger.commit({{"rows", rows}}, {(dir / "ablation.json").string(), (dir / "ablation.md").string()});
}

void run_bench(const Flags& f) {
  const RunConfig cfg = resolve(f);
  Ledger ledger("bench", cfg);
  const fs::path data = cfg.dataset_dir();
  const DatasetManifest m = pipeline::load_dataset(data, logger(f));
  const auto models = pipeline::load_models(fs::path(cfg.out_dir) / "models", cfg, m, cfg.mode);
  io::SampleReader reader(m, data);
  auto idx = reader.indices(Split::kTest);
  if (idx.empty()) throw Error("no test data", "the test split is empty");
  double sink = 0.0;
  const auto t = metrics::measure_throughput(
      [&](std::size_t k) {
        const auto item = pipeline::discrepancies(models, reader, idx[k % idx.size()], cfg.mode);
        sink += pipeline::score(item, cfg.fusion, cfg.mode).score;
      },
      static_cast<std::size_t>(cfg.bench_samples));
  (void)sink;
  ledger.commit({{"fps", t.fps},
                 {"mean_seconds", t.mean_seconds},
                 {"samples", t.samples},
                 {"peak_memory_bytes", t.peak_memory_bytes},
                 {"peak_memory_mb", static_cast<double>(t.peak_memory_bytes) / (1024.0 * 1024.0)},
                 {"mode", mode_name(cfg.mode)}},
                Json::array());
}

// Output directory for the error record: --out, else the config file's
// out_dir if the file is readable JSON. The config itself may be invalid.
std::optional<std::string> error_dir(const Flags& f) {
  if (f.out) return f.out;
  if (f.config.empty()) return std::nullopt;
  try {
    const Json j = Json::parse(io::read_text(f.config));
    if (j.contains("out_dir") && j["out_dir"].is_string()) return j["out_dir"].get<std::string>();
  } catch (...) {
  }
  return std::nullopt;
}

int fail(const std::string& command, const std::string& code, const std::string& message,
         const Flags& flags, int status) {
  const Json record{{"command", command}, {"error", code}, {"message", message}, {"status", status}};
  std::cerr << record.dump() << "\n";
  if (const auto out = error_dir(flags)) {
    try {
      io::atomic_write(fs::path(*out) / "error.json", record.dump(2) + "\n");
    } catch (...) {
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal anomaly detection toolkit"};
  app.require_subcommand(1);
  Flags flags;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Global seed");
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--dataset", flags.dataset, "Dataset directory (default <out>/data)");
    sub->add_option("--mode", flags.mode, "Modality mode")
        ->check(CLI::IsMember({"2d3d", "2d", "3d"}));
    sub->add_flag("--quiet", flags.quiet, "Suppress progress output");
  };
  auto scoring = [&](CLI::App* sub) {
    sub->add_option("--variant", flags.variant, "Fusion variant")
        ->check(CLI::IsMember({"full", "c1", "c2", "c3", "c4", "c5", "c6"}, CLI::ignore_case));
    sub->add_option("--fpr-limit", flags.fpr_limit, "AUPRO integration limit");
  };

  std::map<std::string, std::function<void(const Flags&)>> handlers{
      {"preprocess", run_preprocess}, {"synth", run_synth},       {"train", run_train},
      {"infer", run_infer},           {"evaluate", run_evaluate}, {"ablate", run_ablate},
      {"bench", run_bench}};
  const std::map<std::string, std::string> help{
      {"preprocess", "Detect outliers, chunk and split raw point-cloud scans"},
      {"synth", "Generate a synthetic dataset"},
      {"train", "Train mappers and decoders for the selected mode"},
      {"infer", "Write anomaly maps and image scores for the test split"},
      {"evaluate", "Compute I-AUROC, P-AUROC and AUPRO from inference output"},
      {"ablate", "Score every fusion variant and write a comparison table"},
      {"bench", "Measure inference throughput and peak memory"}};
  for (const auto& [name, h] : help) {
    CLI::App* sub = app.add_subcommand(name, h);
    common(sub);
    if (name == "infer" || name == "evaluate" || name == "ablate" || name == "bench") scoring(sub);
    if (name == "preprocess") sub->add_option("--input", flags.input, "Scan file or directory")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    handlers.at(command)(flags);
    return 0;
  } catch (const ContractViolation& e) {
    return fail(command, "invalid argument", e.what(), flags, 2);
  } catch (const Error& e) {
    return fail(command, e.code(), e.what(), flags, 1);
  } catch (const std::exception& e) {
    return fail(command, "internal error", e.what(), flags, 1);
  }
}
