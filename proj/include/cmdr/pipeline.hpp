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

// End-to-end stages shared by the command-line tool and the acceptance
// suite: dataset synthesis and ingestion, training, discrepancy computation,
// variant scoring and evaluation.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmdr/config.hpp"
#include "cmdr/io.hpp"

namespace cmdr::pipeline {

namespace fs = std::filesystem;
using Logger = std::function<void(const std::string&)>;

inline constexpr const char* kManifestFile = "manifest.jsonl";

// Writes a synthetic dataset (containers plus manifest) under `dir`. With
// `with_2d` false no 2D feature files are written and has_2d is false.
DatasetManifest write_synthetic(const RunConfig& cfg, const fs::path& dir, bool with_2d = true);

// Runs outlier detection, chunking and splitting over every scan in
// `input` (a directory of .xyz text files or .cmdr [N, 3] tensors, or a
// single such file) and writes a 3D-only dataset under `dir`.
DatasetManifest preprocess_scans(const RunConfig& cfg, const fs::path& input, const fs::path& dir);

// Reads `<dir>/manifest.jsonl`, validating protocol and files.
DatasetManifest load_dataset(const fs::path& dir, const Logger& log = {});

struct Models {
  std::optional<mapnet::MapperModel> map_2to3;
  std::optional<mapnet::MapperModel> map_3to2;
  std::optional<decoders::Decoder2DModel> dec2d;
  std::optional<decoders::Decoder3DModel> dec3d;
};

// Throws Error("modality unavailable") when the manifest lacks a modality
// the mode needs.
void require_modalities(const DatasetManifest& m, Mode mode);

struct TrainReport {
  Models models;
  nlohmann::json losses;  // per model: final loss and trace
};

// Trains the models a mode needs from the train split only.
TrainReport train(const RunConfig& cfg, const io::SampleReader& reader, Mode mode,
                  const Logger& log = {});

void save_models(const fs::path& dir, const Models& models, Mode mode);
Models load_models(const fs::path& dir, const RunConfig& cfg, const DatasetManifest& m, Mode mode);

struct TestItem {
  std::string id;
  Label label = Label::kNormal;
  std::string tag;
  std::vector<std::uint8_t> gt;
  std::vector<std::uint8_t> validity;
  // Joint mode: all four discrepancy maps. Single-modality modes: only the
  // corresponding reconstruction map is populated.
  fusion::DiscrepancyBundle bundle;
};

TestItem discrepancies(const Models& models, const io::SampleReader& reader, std::size_t index,
                       Mode mode);
std::vector<TestItem> discrepancies(const Models& models, const io::SampleReader& reader,
                                    Mode mode);

// Post-processed anomaly map and image score. Joint mode applies the fusion
// variant; single-modality modes use the single-branch rule.
fusion::ScoredMap score(const TestItem& item, const fusion::FusionConfig& cfg, Mode mode);

// Scores a joint-mode item from one reconstruction map alone.
fusion::ScoredMap score_reconstruction_only(const TestItem& item, const fusion::FusionConfig& cfg,
                                            bool use_2d);

struct Evaluation {
  double i_auroc = 0.0;
  double p_auroc = 0.0;
  double aupro = 0.0;
  double aupro_1 = 0.0;  // at FPR 0.01
  nlohmann::json to_json(double fpr_limit) const;
};

Evaluation evaluate(std::span<const fusion::ScoredMap> scored, std::span<const TestItem> items,
                    double fpr_limit, const metrics::ProOptions& pro);

// Image-level AUROC restricted to normal items plus anomalous items whose
// tag equals `tag`.
double subset_auroc(std::span<const double> scores, std::span<const TestItem> items,
                    const std::string& tag);

}  // namespace cmdr::pipeline
