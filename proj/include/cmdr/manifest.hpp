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

// Dataset manifest: the declarative listing of samples, their files and
// split membership shared by ingestion, synthesis, training and evaluation.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cmdr {

enum class Split { kTrain, kTest };
enum class Label { kNormal, kAnomalous };

struct SampleRecord {
  std::string id;
  Split split = Split::kTrain;
  Label label = Label::kNormal;
  // Modality or role name ("f2d", "f3d", "points", ...) -> relative path.
  std::map<std::string, std::string> features;
  std::optional<std::string> validity;
  std::optional<std::string> gt_mask;
  // Free-form tag, e.g. the synthetic defect mode.
  std::string tag;
};

struct DatasetManifest {
  static constexpr int kSchemaMajor = 1;
  static constexpr int kSchemaMinor = 0;

  int schema_major = kSchemaMajor;
  int schema_minor = kSchemaMinor;
  bool has_2d = false;
  bool has_3d = false;
  int grid_height = 0;
  int grid_width = 0;
  int dim_2d = 0;
  int dim_3d = 0;
  std::uint64_t seed = 0;
  std::string provenance;
  std::vector<SampleRecord> samples;

  std::size_t count(Split s) const;
  std::size_t count(Split s, Label l) const;
};

std::string_view to_string(Split s);
std::string_view to_string(Label l);

}  // namespace cmdr
