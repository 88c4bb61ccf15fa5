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

#include "cmdr/fusion.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

namespace cmdr::fusion {

namespace {

constexpr std::array<std::string_view, 7> kNames{"full", "c1", "c2", "c3", "c4", "c5", "c6"};
constexpr std::array<std::string_view, 7> kTitles{
    "Full (reliability-gated, confidence-weighted)",
    "Case 1: Gated Mapping Fusion",
    "Case 2: Pure Multiplicative",
    "Case 3: Soft Adaptive",
    "Case 4: Softmax + Gated Rec",
    "Case 5: Dual Gated Fusion",
    "Case 6: Uniform Avg."};

void require_same_grid(const AnomalyMap& a, const AnomalyMap& b, const char* what) {
  CMDR_REQUIRE(a.same_grid(b), std::string(what) + ": map shapes differ");
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// softmax(-a, -b) . (a, b)
double soft_pair(double a, double b) {
  const double m = std::max(-a, -b);
  const double wa = std::exp(-a - m), wb = std::exp(-b - m);
  return (wa * a + wb * b) / (wa + wb);
}

}  // namespace

Variant parse_variant(std::string_view name) {
  std::string lower(name);
  std::ranges::transform(lower, lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (lower == kNames[i]) return static_cast<Variant>(i);
  throw ContractViolation("unknown fusion variant '" + std::string(name) + "'");
}

std::string_view variant_name(Variant v) { return kNames[static_cast<std::size_t>(v)]; }
std::string_view variant_title(Variant v) { return kTitles[static_cast<std::size_t>(v)]; }

void FusionConfig::validate() const {
  CMDR_REQUIRE(temperature > 0, "fusion: temperature B must be > 0");
  CMDR_REQUIRE(epsilon > 0, "fusion: epsilon must be > 0");
  CMDR_REQUIRE(gate_window >= 1 && gate_window % 2 == 1, "fusion: gate window must be odd");
  for (int k : smoothing)
    CMDR_REQUIRE(k >= 1 && k % 2 == 1, "fusion: smoothing kernels must be odd");
  CMDR_REQUIRE(static_cast<int>(variant) >= 0 && static_cast<int>(variant) < 7,
               "fusion: unknown variant");
}

AnomalyMap distance_map(const DenseFeatureMap& pred, const DenseFeatureMap& target,
                        const std::vector<std::uint8_t>& validity) {
  CMDR_REQUIRE(pred.same_shape(target), "distance_map: feature map shapes differ");
  CMDR_REQUIRE(validity.size() == pred.pixels(), "distance_map: validity size mismatch");
  AnomalyMap out(pred.height, pred.width, validity);
  for (std::size_t p = 0; p < out.pixels(); ++p)
    if (validity[p]) out.scores[p] = normalized_distance(pred.pixel(p), target.pixel(p));
  return out;
}

DiscrepancyBundle discrepancy_maps(const DenseFeatureMap& f2, const DenseFeatureMap& f3,
                                   const DenseFeatureMap& f2_map, const DenseFeatureMap& f3_map,
                                   const DenseFeatureMap& f2_rec, const DenseFeatureMap& f3_rec) {
  CMDR_REQUIRE(f2.height == f3.height && f2.width == f3.width,
               "discrepancy_maps: 2D and 3D grids differ");
  const auto& valid = f3.validity;
  return {distance_map(f2_map, f2, valid), distance_map(f3_map, f3, valid),
          distance_map(f2_rec, f2, valid), distance_map(f3_rec, f3, valid)};
}

AnomalyMap joint_mapping(const AnomalyMap& d2d_map, const AnomalyMap& d3d_map) {
  require_same_grid(d2d_map, d3d_map, "joint_mapping");
  AnomalyMap out(d2d_map.height, d2d_map.width, d2d_map.validity);
  for (std::size_t p = 0; p < out.pixels(); ++p)
    if (out.validity[p]) out.scores[p] = d2d_map.scores[p] * d3d_map.scores[p];
  return out;
}

AnomalyMap reliability_gate(const AnomalyMap& d_joint, const FusionConfig& cfg) {
  const int h = d_joint.height, w = d_joint.width, r = cfg.gate_window / 2;
  AnomalyMap alpha(h, w, d_joint.validity);
  if (d_joint.valid_count() == 0) return alpha;
  // Window sums are taken separably and directly (rows, then columns) so
  // rounding stays local to the window; a running prefix sum would carry
  // error from the whole image into windows with near-zero variance. The
  // global valid mean is subtracted first to avoid cancellation in var.
  const double shift = d_joint.mean_valid();
  const std::size_t n = d_joint.pixels();
  std::vector<double> v1(n, 0.0), v2(n, 0.0), vc(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!d_joint.validity[p]) continue;
    v1[p] = d_joint.scores[p] - shift;
    v2[p] = v1[p] * v1[p];
    vc[p] = 1.0;
  }
  std::vector<double> h1(n), h2(n), hc(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double a = 0.0, b = 0.0, c = 0.0;
      for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
        const std::size_t q = static_cast<std::size_t>(y) * w + xx;
        a += v1[q];
        b += v2[q];
        c += vc[q];
      }
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      h1[p] = a;
      h2[p] = b;
      hc[p] = c;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!d_joint.valid(y, x)) continue;
      double s1 = 0.0, s2 = 0.0, cnt = 0.0;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
        const std::size_t q = static_cast<std::size_t>(yy) * w + x;
        s1 += h1[q];
        s2 += h2[q];
        cnt += hc[q];
      }
      const double mean = s1 / cnt;
      const double var = std::max(0.0, s2 / cnt - mean * mean);
      const double z = (d_joint(y, x) - shift - mean) / (std::sqrt(var) + cfg.epsilon);
      alpha(y, x) = logistic(cfg.gate_steepness * z);
    }
  }
  return alpha;
}

AnomalyMap gated_mapping_anomaly(const AnomalyMap& alpha, const AnomalyMap& d_joint) {
  require_same_grid(alpha, d_joint, "gated_mapping_anomaly");
  AnomalyMap out(d_joint.height, d_joint.width, d_joint.validity);
  for (std::size_t p = 0; p < out.pixels(); ++p)
    if (out.validity[p]) out.scores[p] = alpha.scores[p] * d_joint.scores[p];
  return out;
}

AnomalyMap confidence_weighted_rec(const AnomalyMap& d2d_rec, const AnomalyMap& d3d_rec,
                                   double temperature, double epsilon) {
  require_same_grid(d2d_rec, d3d_rec, "confidence_weighted_rec");
  CMDR_REQUIRE(temperature > 0, "confidence_weighted_rec: B must be > 0");
  AnomalyMap out(d2d_rec.height, d2d_rec.width, d2d_rec.validity);
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    if (!out.validity[p]) continue;
    const double d2 = d2d_rec.scores[p], d3 = d3d_rec.scores[p];
    const double w2 = std::exp(-temperature * d2), w3 = std::exp(-temperature * d3);
    out.scores[p] = (w2 * d2 + w3 * d3) / (w2 + w3 + epsilon);
  }
  return out;
}

AnomalyMap fuse_with_gate(const DiscrepancyBundle& b, const AnomalyMap& alpha,
                          const FusionConfig& cfg) {
  require_same_grid(b.d2d_map, b.d3d_map, "fuse");
  require_same_grid(b.d2d_map, b.d2d_rec, "fuse");
  require_same_grid(b.d2d_map, b.d3d_rec, "fuse");
  require_same_grid(b.d2d_map, alpha, "fuse");
  AnomalyMap out(b.d2d_map.height, b.d2d_map.width, b.d2d_map.validity);
  const AnomalyMap a_rec =
      cfg.variant == Variant::kFull
          ? confidence_weighted_rec(b.d2d_rec, b.d3d_rec, cfg.temperature, cfg.epsilon)
          : AnomalyMap();
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    if (!out.validity[p]) continue;
    const double m2 = b.d2d_map.scores[p], m3 = b.d3d_map.scores[p];
    const double r2 = b.d2d_rec.scores[p], r3 = b.d3d_rec.scores[p];
    const double a = alpha.scores[p];
    const double joint = m2 * m3;
    double v = 0.0;
    switch (cfg.variant) {
      case Variant::kFull: v = a * joint * a_rec.scores[p]; break;
      case Variant::kC1: v = a * joint * (r2 * r3); break;
      case Variant::kC2: v = m2 * m3 * r2 * r3; break;
      case Variant::kC3: v = soft_pair(m2, m3) * soft_pair(r2, r3); break;
      case Variant::kC4: v = soft_pair(m2, m3) * (a * r2 * r3); break;
      case Variant::kC5: v = (a * joint) * (a * r2 * r3); break;
      case Variant::kC6: v = (m2 + m3 + r2 + r3) / 4.0; break;
    }
    out.scores[p] = v;
  }
  return out;
}

AnomalyMap fuse(const DiscrepancyBundle& bundle, const FusionConfig& cfg) {
  cfg.validate();
  const AnomalyMap joint = joint_mapping(bundle.d2d_map, bundle.d3d_map);
  return fuse_with_gate(bundle, reliability_gate(joint, cfg), cfg);
}

ScoredMap finalize(const AnomalyMap& psi_raw, const FusionConfig& cfg) {
  if (psi_raw.valid_count() == 0) throw Error("empty image", "no valid pixels to score");
  ScoredMap out{smooth(psi_raw, cfg.smoothing), 0.0};
  const double denom = std::sqrt(out.map.mean_valid() + cfg.epsilon);
  for (std::size_t p = 0; p < out.map.pixels(); ++p)
    if (out.map.validity[p]) out.map.scores[p] /= denom;
  out.score = out.map.max_valid();
  return out;
}

ScoredMap score_single(const AnomalyMap& raw, const FusionConfig& cfg) {
  if (raw.valid_count() == 0) throw Error("empty image", "no valid pixels to score");
  ScoredMap out{smooth(raw, cfg.smoothing), 0.0};
  out.score = out.map.max_valid();
  return out;
}

ScoredMap infer_single_branch(const DenseFeatureMap& features,
                              const DenseFeatureMap& reconstruction, const FusionConfig& cfg) {
  return score_single(distance_map(reconstruction, features, features.validity), cfg);
}

}  // namespace cmdr::fusion
