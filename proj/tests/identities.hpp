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

// Fusion identities shared by the unit tests and the acceptance binary. Each
// check draws a random instance and returns its violation (0 when exact).

#pragma once

#include <algorithm>
#include <cmath>

#include "cmdr/fusion.hpp"
#include "cmdr/numcore.hpp"

namespace cmdr::identities {

inline AnomalyMap random_scores(int h, int w, Rng& rng, const std::vector<std::uint8_t>& valid,
                                double hi = 2.0) {
  AnomalyMap m(h, w, valid);
  for (std::size_t p = 0; p < m.pixels(); ++p)
    if (valid[p]) m.scores[p] = hi * rng.uniform();
  return m;
}

inline std::vector<std::uint8_t> random_validity(std::size_t n, Rng& rng, double p_invalid) {
  std::vector<std::uint8_t> v(n);
  for (auto& x : v) x = rng.uniform() < p_invalid ? 0 : 1;
  v[rng.below(n)] = 1;
  return v;
}

inline fusion::DiscrepancyBundle random_bundle(int h, int w, Rng& rng, double p_invalid = 0.2) {
  const auto valid = random_validity(static_cast<std::size_t>(h) * w, rng, p_invalid);
  return {random_scores(h, w, rng, valid), random_scores(h, w, rng, valid),
          random_scores(h, w, rng, valid), random_scores(h, w, rng, valid)};
}

inline void random_size(Rng& rng, int& h, int& w) {
  h = 3 + static_cast<int>(rng.below(14));
  w = 3 + static_cast<int>(rng.below(14));
}

// Every variant of an all-zero bundle is zero, raw and finalized.
inline double zero_bundle(Rng& rng) {
  int h, w;
  random_size(rng, h, w);
  const auto valid = random_validity(static_cast<std::size_t>(h) * w, rng, 0.2);
  const AnomalyMap z(h, w, valid);
  double worst = 0.0;
  for (auto v : fusion::kAllVariants) {
    fusion::FusionConfig cfg;
    cfg.variant = v;
    const auto psi = fusion::fuse({z, z, z, z}, cfg);
    for (double s : psi.scores) worst = std::max(worst, std::abs(s));
    worst = std::max(worst, std::abs(fusion::finalize(psi, cfg).score));
  }
  return worst;
}

// Distance of the gate from [0, 1], plus any nonzero gate at invalid pixels.
inline double gate_range(Rng& rng) {
  int h, w;
  random_size(rng, h, w);
  const auto b = random_bundle(h, w, rng);
  fusion::FusionConfig cfg;
  cfg.gate_window = 2 * static_cast<int>(rng.below(6)) + 1;
  cfg.gate_steepness = 0.1 + 10.0 * rng.uniform();
  const auto alpha = fusion::reliability_gate(fusion::joint_mapping(b.d2d_map, b.d3d_map), cfg);
  double worst = 0.0;
  for (std::size_t p = 0; p < alpha.pixels(); ++p) {
    const double a = alpha.scores[p];
    if (!alpha.validity[p]) worst = std::max(worst, std::abs(a));
    worst = std::max({worst, -a, a - 1.0});
    if (std::isnan(a)) return INFINITY;
  }
  return worst;
}

// How far A_rec falls outside [min(d2, d3) - slack, max(d2, d3)], where
// slack = eps * max / (w2 + w3) bounds the stabilizer's shrinkage.
inline double rec_betweenness(Rng& rng) {
  int h, w;
  random_size(rng, h, w);
  const auto b = random_bundle(h, w, rng);
  const double temperature = 0.01 + 5.0 * rng.uniform();
  const double eps = 1e-8;
  const auto a = fusion::confidence_weighted_rec(b.d2d_rec, b.d3d_rec, temperature, eps);
  double worst = 0.0;
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    if (!a.validity[p]) continue;
    const double d2 = b.d2d_rec.scores[p], d3 = b.d3d_rec.scores[p];
    const double lo = std::min(d2, d3), hi = std::max(d2, d3);
    const double slack = eps * hi / (std::exp(-temperature * d2) + std::exp(-temperature * d3));
    worst = std::max({worst, lo - slack - a.scores[p], a.scores[p] - hi});
  }
  return worst;
}

// |S(lambda psi) - sqrt(lambda) S(psi)| / (sqrt(lambda) S(psi)), eps negligible.
inline double score_scaling(Rng& rng) {
  int h, w;
  random_size(rng, h, w);
  const auto valid = random_validity(static_cast<std::size_t>(h) * w, rng, 0.2);
  const auto psi = random_scores(h, w, rng, valid);
  fusion::FusionConfig cfg;
  cfg.epsilon = 1e-15;
  const double lambda = std::exp(rng.uniform(-4.0, 4.0));
  auto scaled = psi;
  for (double& s : scaled.scores) s *= lambda;
  const double ref = std::sqrt(lambda) * fusion::finalize(psi, cfg).score;
  return std::abs(fusion::finalize(scaled, cfg).score - ref) / ref;
}

// With alpha = 1 and B = 1e-9, full fusion approaches d_joint (d2 + d3) / 2.
// The weighted mean moves with slope -Var_B(d) <= ((d2 - d3) / 2)^2 in B, so
// the gap is at most B d_joint ((d2 - d3) / 2)^2; returns the excess over it.
inline double small_temperature(Rng& rng) {
  int h, w;
  random_size(rng, h, w);
  const auto b = random_bundle(h, w, rng);
  fusion::FusionConfig cfg;
  cfg.temperature = 1e-9;
  cfg.epsilon = 1e-15;
  AnomalyMap ones(h, w, b.d2d_map.validity);
  for (std::size_t p = 0; p < ones.pixels(); ++p) ones.scores[p] = ones.validity[p] ? 1.0 : 0.0;
  const auto psi = fusion::fuse_with_gate(b, ones, cfg);
  double worst = 0.0;
  for (std::size_t p = 0; p < psi.pixels(); ++p) {
    if (!psi.validity[p]) continue;
    const double joint = b.d2d_map.scores[p] * b.d3d_map.scores[p];
    const double d2 = b.d2d_rec.scores[p], d3 = b.d3d_rec.scores[p];
    const double ref = joint * (d2 + d3) / 2.0;
    const double bound = cfg.temperature * joint * (d2 - d3) * (d2 - d3) / 4.0;
    worst = std::max(worst, std::abs(psi.scores[p] - ref) - bound);
  }
  return worst;
}

struct Identity {
  const char* name;
  double (*run)(Rng&);
  double tolerance;
};

inline constexpr Identity kFusionIdentities[] = {
    {"zero bundle", zero_bundle, 0.0},
    {"gate range", gate_range, 0.0},
    {"rec betweenness", rec_betweenness, 0.0},
    {"score scaling", score_scaling, 1e-9},
    {"small temperature", small_temperature, 1e-12},
};

}  // namespace cmdr::identities
