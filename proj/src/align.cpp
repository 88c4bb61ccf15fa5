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

#include "cmdr/align.hpp"

#include <algorithm>

namespace cmdr::align {

namespace {
constexpr double kCoincident = 1e-9;
}

std::vector<double> interpolate_point_features(const PointFeatureSet& set, int k) {
  CMDR_REQUIRE(!set.centers.empty(), "interpolate_point_features: empty center set");
  CMDR_REQUIRE(set.feature_dim > 0, "interpolate_point_features: feature_dim must be positive");
  CMDR_REQUIRE(set.center_features.size() == set.centers.size() * set.feature_dim,
               "interpolate_point_features: center feature array size mismatch");
  CMDR_REQUIRE(k >= 1 && static_cast<std::size_t>(k) <= set.centers.size(),
               "interpolate_point_features: k must be in [1, N_c]");

  const std::size_t dim = static_cast<std::size_t>(set.feature_dim);
  const KdTree tree(set.centers);
  std::vector<double> out(set.points.size() * dim, 0.0);
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    const auto nn = tree.knn(set.points[i], static_cast<std::size_t>(k));
    double* dst = out.data() + i * dim;
    if (nn.front().distance < kCoincident) {
      const double* src = set.center_features.data() + nn.front().index * dim;
      std::copy(src, src + dim, dst);
      continue;
    }
    double total = 0.0;
    for (const auto& n : nn) {
      const double w = 1.0 / n.distance;
      total += w;
      const double* src = set.center_features.data() + n.index * dim;
      for (std::size_t c = 0; c < dim; ++c) dst[c] += w * src[c];
    }
    for (std::size_t c = 0; c < dim; ++c) dst[c] /= total;
  }
  return out;
}

DenseFeatureMap project_to_grid(const PointFeatureSet& set, int height, int width) {
  CMDR_REQUIRE(set.feature_dim > 0, "project_to_grid: feature_dim must be positive");
  CMDR_REQUIRE(set.correspondence.size() == set.points.size(),
               "project_to_grid: one correspondence entry per point is required");
  CMDR_REQUIRE(set.point_features.size() == set.points.size() * set.feature_dim,
               "project_to_grid: point features not computed");
  DenseFeatureMap grid(height, width, set.feature_dim, false);
  std::vector<int> count(grid.pixels(), 0);
  const std::size_t dim = static_cast<std::size_t>(set.feature_dim);
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    const auto& c = set.correspondence[i];
    if (!c) continue;
    CMDR_REQUIRE(c->y >= 0 && c->y < height && c->x >= 0 && c->x < width,
                 "project_to_grid: correspondence index outside grid");
    auto dst = grid.at(c->y, c->x);
    const double* src = set.point_features.data() + i * dim;
    for (std::size_t k = 0; k < dim; ++k) dst[k] += src[k];
    ++count[grid.index(c->y, c->x)];
  }
  for (std::size_t p = 0; p < grid.pixels(); ++p) {
    if (count[p] == 0) continue;
    grid.validity[p] = 1;
    for (double& v : grid.pixel(p)) v /= count[p];
  }
  return grid;
}

DenseFeatureMap smooth_and_resize(const DenseFeatureMap& map, int target_h, int target_w) {
  return adaptive_avg_pool(avg_pool_3x3_valid(map), target_h, target_w);
}

DenseFeatureMap build_feature_grid(PointFeatureSet set, int grid_h, int grid_w,
                                   const AlignConfig& cfg) {
  set.point_features = interpolate_point_features(
      set, std::min<int>(cfg.k_nearest, static_cast<int>(set.centers.size())));
  return smooth_and_resize(project_to_grid(set, grid_h, grid_w), cfg.target_height,
                           cfg.target_width);
}

}  // namespace cmdr::align
