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

// Anomaly scoring: discrepancy maps, the reliability gate, confidence
// weighted reconstruction error, the full fusion rule with its six ablation
// variants, and image-level scoring.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cmdr/numcore.hpp"

namespace cmdr::fusion {

enum class Variant { kFull, kC1, kC2, kC3, kC4, kC5, kC6 };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);
std::string_view variant_title(Variant v);
inline constexpr Variant kAllVariants[] = {Variant::kFull, Variant::kC1, Variant::kC2,
                                           Variant::kC3,   Variant::kC4, Variant::kC5,
                                           Variant::kC6};

struct FusionConfig {
  double temperature = 0.3;  // B
  double epsilon = 1e-8;
  int gate_window = 33;
  double gate_steepness = 1.0;
  std::vector<int> smoothing{3, 5};
  Variant variant = Variant::kFull;

  void validate() const;
};

struct DiscrepancyBundle {
  AnomalyMap d2d_map;
  AnomalyMap d3d_map;
  AnomalyMap d2d_rec;
  AnomalyMap d3d_rec;
};

// Pixelwise normalized distance for each (prediction, target) pair. The
// shared validity is the 3D validity mask; invalid pixels score 0.
DiscrepancyBundle discrepancy_maps(const DenseFeatureMap& f2, const DenseFeatureMap& f3,
                                   const DenseFeatureMap& f2_map, const DenseFeatureMap& f3_map,
                                   const DenseFeatureMap& f2_rec, const DenseFeatureMap& f3_rec);

// Normalized distance per pixel between two maps, restricted to `validity`.
AnomalyMap distance_map(const DenseFeatureMap& pred, const DenseFeatureMap& target,
                        const std::vector<std::uint8_t>& validity);

AnomalyMap joint_mapping(const AnomalyMap& d2d_map, const AnomalyMap& d3d_map);

// alpha = logistic(k * (d - mean_W) / (std_W + eps)) with mean and standard
// deviation over the clipped window of valid pixels; 0 at invalid pixels.
AnomalyMap reliability_gate(const AnomalyMap& d_joint, const FusionConfig& cfg);

AnomalyMap gated_mapping_anomaly(const AnomalyMap& alpha, const AnomalyMap& d_joint);

// (w2 d2 + w3 d3) / (w2 + w3 + eps) with w = exp(-B d).
AnomalyMap confidence_weighted_rec(const AnomalyMap& d2d_rec, const AnomalyMap& d3d_rec,
                                   double temperature, double epsilon);

// Raw (unsmoothed) anomaly map for cfg.variant; the gate is computed from
// the bundle's joint mapping discrepancy.
AnomalyMap fuse(const DiscrepancyBundle& bundle, const FusionConfig& cfg);
// Same with a caller-supplied gate.
AnomalyMap fuse_with_gate(const DiscrepancyBundle& bundle, const AnomalyMap& alpha,
                          const FusionConfig& cfg);

struct ScoredMap {
  AnomalyMap map;
  double score = 0.0;
};

// smooth -> divide by sqrt(mean over valid + eps) -> max over valid.
// Throws Error("empty image") without valid pixels.
ScoredMap finalize(const AnomalyMap& psi_raw, const FusionConfig& cfg);

// Smoothed map with the plain max over valid pixels as image score.
ScoredMap score_single(const AnomalyMap& raw, const FusionConfig& cfg);

// Single-branch scoring: distance between l2-normalized features and their
// reconstruction, smoothed, image score = plain max over valid pixels.
ScoredMap infer_single_branch(const DenseFeatureMap& features,
                              const DenseFeatureMap& reconstruction, const FusionConfig& cfg);

inline ScoredMap infer_3d_only(const DenseFeatureMap& f3, const DenseFeatureMap& f3_rec,
                               const FusionConfig& cfg) {
  return infer_single_branch(f3, f3_rec, cfg);
}

}  // namespace cmdr::fusion
