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

// Evaluation metrics: ROC AUC, connected-component labeling, per-region
// overlap (PRO) curves and their normalized area, plus a throughput/memory
// harness.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cmdr/numcore.hpp"

namespace cmdr::metrics {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 1 = positive (anomalous)
};

// Probability that a random positive outscores a random negative, ties
// counting one half. Throws Error("degenerate labels") for single-class input.
double auroc(const ScoredSet& set);

struct RegionSet {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // -1 for background, else component id
  std::vector<std::vector<std::size_t>> components;
};

// Components are numbered in row-major order of their first pixel.
RegionSet connected_components(std::span<const std::uint8_t> mask, int height, int width,
                               int connectivity = 4);

struct ProOptions {
  std::size_t max_thresholds = 5000;
  int connectivity = 4;
};

struct CurvePoint {
  double fpr;
  double pro;
};

// PRO-vs-FPR curve over thresholds "score >= t", pooled across images and
// restricted to each map's valid pixels, starting at (0,0) and ending at (1,1).
std::vector<CurvePoint> pro_curve(std::span<const AnomalyMap> maps,
                                  std::span<const std::vector<std::uint8_t>> gts,
                                  const ProOptions& opts = {});

// Trapezoid area under the curve over FPR in [0, limit], interpolating at
// the limit. Not normalized.
double area_to_limit(std::span<const CurvePoint> curve, double limit);

// Area under the PRO curve up to `fpr_limit`, divided by `fpr_limit`.
double aupro(std::span<const AnomalyMap> maps, std::span<const std::vector<std::uint8_t>> gts,
             double fpr_limit, const ProOptions& opts = {});

// Pools valid pixels of all maps into one scored set.
ScoredSet pool_pixels(std::span<const AnomalyMap> maps,
                      std::span<const std::vector<std::uint8_t>> gts);

struct Throughput {
  double fps = 0.0;
  double mean_seconds = 0.0;
  std::size_t samples = 0;
  std::uint64_t peak_memory_bytes = 0;
};

// Times `pipeline(i)` for every sample index and samples the process's peak
// resident set size over the run.
Throughput measure_throughput(const std::function<void(std::size_t)>& pipeline,
                              std::size_t samples);

std::uint64_t peak_resident_bytes();

}  // namespace cmdr::metrics
