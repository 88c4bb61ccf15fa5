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

// Shared helpers for the unit tests.

#pragma once

#include <cmath>
#include <vector>

#include "cmdr/nn.hpp"
#include "cmdr/numcore.hpp"

namespace cmdr::testing {

inline DenseFeatureMap random_map(int h, int w, int c, Rng& rng, double invalid_rate = 0.0) {
  DenseFeatureMap m(h, w, c);
  for (double& v : m.values) v = rng.normal();
  for (auto& v : m.validity) v = rng.uniform() < invalid_rate ? 0 : 1;
  return m;
}

inline AnomalyMap random_anomaly_map(int h, int w, Rng& rng, double invalid_rate = 0.0) {
  AnomalyMap m(h, w);
  for (std::size_t p = 0; p < m.pixels(); ++p) {
    m.validity[p] = rng.uniform() < invalid_rate ? 0 : 1;
    m.scores[p] = m.validity[p] ? rng.uniform() : 0.0;
  }
  return m;
}

inline nn::Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
  nn::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

}  // namespace cmdr::testing
