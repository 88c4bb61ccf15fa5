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

// Deterministic synthetic RGB/3D feature pairs with planted defects.
//
// Nominal samples share K smooth latent fields that drive both modalities
// through fixed dataset-level linear maps, so a cross-modal mapping is
// realizable. Anomalous samples start from the nominal twin drawn from the
// same stream prefix and perturb one to three elliptical regions.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmdr/numcore.hpp"

namespace cmdr::synthgen {

enum class DefectMode { kAppearance, kGeometry, kCrossModal };

DefectMode parse_defect_mode(std::string_view name);
std::string_view defect_mode_name(DefectMode m);

struct SynthConfig {
  int height = 64;
  int width = 64;
  int dim_2d = 16;
  int dim_3d = 16;
  int latent_factors = 8;
  double smoothing_sigma = 4.0;
  double noise = 0.05;
  double offset = 1.0;  // scale of the per-modality mean feature
  double dropout = 0.02;
  int defect_count_min = 1;
  int defect_count_max = 3;
  double radius_min = 4.0;
  double radius_max = 10.0;
  double intensity_min = 0.3;
  double intensity_max = 0.6;
  std::vector<DefectMode> modes{DefectMode::kAppearance, DefectMode::kGeometry,
                                DefectMode::kCrossModal};
  std::uint64_t seed = 0;

  void validate() const;
};

struct Ellipse {
  double cy, cx, a, b, angle;
  bool contains(int y, int x) const;
  // Normalized elliptical radius; 1 on the boundary.
  double radius(int y, int x) const;
};

struct Sample {
  DenseFeatureMap f2;
  DenseFeatureMap f3;  // validity marks pixels with a 3D measurement
  std::vector<std::uint8_t> gt_mask;
  std::vector<Ellipse> regions;  // defect regions; gt_mask is their raster
  DefectMode mode = DefectMode::kAppearance;
  bool anomalous = false;
};

// Gaussian-smoothed latent field generator shared by both generators.
std::vector<double> smooth_field(int height, int width, double sigma, Rng& rng);

Sample gen_nominal(const SynthConfig& cfg, Rng& rng);
Sample gen_anomalous(const SynthConfig& cfg, Rng& rng);

std::vector<std::uint8_t> rasterize(const std::vector<Ellipse>& ellipses, int height, int width);

}  // namespace cmdr::synthgen
