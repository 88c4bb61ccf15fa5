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

// Run configuration shared by every CLI command.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "cmdr/decoders.hpp"
#include "cmdr/fusion.hpp"
#include "cmdr/mapnet.hpp"
#include "cmdr/metrics.hpp"
#include "cmdr/polyprep.hpp"
#include "cmdr/synthgen.hpp"

namespace cmdr {

enum class Mode { kJoint, k2D, k3D };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode m);

struct SynthCounts {
  int train = 64;
  int test_normal = 32;
  int test_anomalous = 32;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::string dataset;  // directory holding manifest.jsonl; empty selects <out_dir>/data
  Mode mode = Mode::kJoint;

  synthgen::SynthConfig synth{};
  SynthCounts counts{};
  mapnet::MapperConfig mapper{};  // in/out dims are taken from the dataset
  decoders::Decoder2DConfig decoder2d{};
  decoders::Decoder3DConfig decoder3d{};
  int epochs = 50;
  double learning_rate = 1e-3;
  fusion::FusionConfig fusion{};
  double fpr_limit = 0.3;
  metrics::ProOptions pro{};
  polyprep::PreprocessConfig polyprep{};
  int bench_samples = 16;

  void validate() const;
  std::filesystem::path dataset_dir() const;
};

nlohmann::json to_json(const RunConfig& c);
// Starts from defaults and applies `j`. Unknown keys raise ContractViolation
// naming the offending path.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

// Hex FNV-1a digest of the canonical JSON serialization.
std::string config_hash(const RunConfig& c);

}  // namespace cmdr
