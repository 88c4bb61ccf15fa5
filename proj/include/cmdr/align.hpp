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

// Projection of sparse per-center point features onto a pixel grid.

#pragma once

#include <optional>
#include <vector>

#include "cmdr/numcore.hpp"
#include "cmdr/spatial.hpp"

namespace cmdr::align {

struct PixelIndex {
  int y = 0;
  int x = 0;
};

struct PointFeatureSet {
  std::vector<Point3> centers;
  // Row-major N_c x feature_dim.
  std::vector<double> center_features;
  int feature_dim = 0;
  std::vector<Point3> points;
  std::vector<std::optional<PixelIndex>> correspondence;
  // Row-major N x feature_dim; filled by interpolate_point_features.
  std::vector<double> point_features;
};

struct AlignConfig {
  int k_nearest = 3;
  int target_height = 224;
  int target_width = 224;
};

// Inverse-distance weighted average of the k nearest centers' features. A
// point within 1e-9 of a center copies that center's feature exactly.
std::vector<double> interpolate_point_features(const PointFeatureSet& set, int k);

// Per-pixel mean of the features of all points mapped to it. Pixels without
// a point are zero and invalid.
DenseFeatureMap project_to_grid(const PointFeatureSet& set, int height, int width);

// 3x3 valid average pooling followed by adaptive pooling to the target size.
DenseFeatureMap smooth_and_resize(const DenseFeatureMap& map, int target_h, int target_w);

// interpolate -> project -> smooth_and_resize.
DenseFeatureMap build_feature_grid(PointFeatureSet set, int grid_h, int grid_w,
                                   const AlignConfig& cfg);

}  // namespace cmdr::align
