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

#include "cmdr/metrics.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <string>

namespace cmdr::metrics {

double auroc(const ScoredSet& set) {
  CMDR_REQUIRE(set.scores.size() == set.labels.size(), "auroc: scores and labels differ in length");
  const std::size_t n = set.scores.size();
  std::size_t n_pos = 0;
  for (auto l : set.labels) n_pos += l ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw Error("degenerate labels", "auroc needs at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::sort(order, [&](auto a, auto b) { return set.scores[a] < set.scores[b]; });
  // Mann-Whitney U with midranks for ties.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (set.labels[order[t]]) pos_rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

RegionSet connected_components(std::span<const std::uint8_t> mask, int height, int width,
                               int connectivity) {
  CMDR_REQUIRE(mask.size() == static_cast<std::size_t>(height) * width,
               "connected_components: mask size does not match grid");
  CMDR_REQUIRE(connectivity == 4 || connectivity == 8,
               "connected_components: connectivity must be 4 or 8");
  RegionSet rs;
  rs.height = height;
  rs.width = width;
  rs.labels.assign(mask.size(), -1);
  std::vector<std::size_t> queue;
  const int dy4[] = {-1, 1, 0, 0, -1, -1, 1, 1};
  const int dx4[] = {0, 0, -1, 1, -1, 1, -1, 1};
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || rs.labels[start] >= 0) continue;
    const int id = static_cast<int>(rs.components.size());
    std::vector<std::size_t> comp;
    queue.assign(1, start);
    rs.labels[start] = id;
    while (!queue.empty()) {
      const std::size_t p = queue.back();
      queue.pop_back();
      comp.push_back(p);
      const int y = static_cast<int>(p / width), x = static_cast<int>(p % width);
      for (int k = 0; k < connectivity; ++k) {
        const int ny = y + dy4[k], nx = x + dx4[k];
        if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
        const std::size_t q = static_cast<std::size_t>(ny) * width + nx;
        if (mask[q] && rs.labels[q] < 0) {
          rs.labels[q] = id;
          queue.push_back(q);
        }
      }
    }
    std::ranges::sort(comp);
    rs.components.push_back(std::move(comp));
  }
  return rs;
}

namespace {

void check_pairs(std::span<const AnomalyMap> maps,
                 std::span<const std::vector<std::uint8_t>> gts) {
  CMDR_REQUIRE(!maps.empty(), "metrics: map list is empty");
  CMDR_REQUIRE(maps.size() == gts.size(), "metrics: maps and masks differ in count");
  for (std::size_t i = 0; i < maps.size(); ++i)
    CMDR_REQUIRE(gts[i].size() == maps[i].pixels(),
                 "metrics: ground-truth mask shape does not match map " + std::to_string(i));
}

}  // namespace

ScoredSet pool_pixels(std::span<const AnomalyMap> maps,
                      std::span<const std::vector<std::uint8_t>> gts) {
  check_pairs(maps, gts);
  ScoredSet set;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    for (std::size_t p = 0; p < maps[i].pixels(); ++p) {
      if (!maps[i].validity[p]) continue;
      set.scores.push_back(maps[i].scores[p]);
      set.labels.push_back(gts[i][p] ? 1 : 0);
    }
  }
  return set;
}

std::vector<CurvePoint> pro_curve(std::span<const AnomalyMap> maps,
                                  std::span<const std::vector<std::uint8_t>> gts,
                                  const ProOptions& opts) {
  check_pairs(maps, gts);
  CMDR_REQUIRE(opts.max_thresholds >= 2, "pro_curve: need at least two thresholds");

  struct Pixel {
    double score;
    int region;  // global region id, -1 for negatives
  };
  std::vector<Pixel> pixels;
  std::vector<double> region_size;
  std::size_t negatives = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const AnomalyMap& m = maps[i];
    std::vector<std::uint8_t> region_mask(m.pixels());
    for (std::size_t p = 0; p < m.pixels(); ++p)
      region_mask[p] = (gts[i][p] && m.validity[p]) ? 1 : 0;
    const RegionSet rs = connected_components(region_mask, m.height, m.width, opts.connectivity);
    const int base = static_cast<int>(region_size.size());
    for (const auto& c : rs.components) region_size.push_back(static_cast<double>(c.size()));
    for (std::size_t p = 0; p < m.pixels(); ++p) {
      if (!m.validity[p]) continue;
      if (rs.labels[p] >= 0) {
        pixels.push_back({m.scores[p], base + rs.labels[p]});
      } else {
        pixels.push_back({m.scores[p], -1});
        ++negatives;
      }
    }
  }
  if (region_size.empty()) throw Error("no regions", "ground truth contains no defect region");
  if (negatives == 0) throw Error("FPR undefined", "ground truth contains no negative pixel");

  std::ranges::sort(pixels, [](const Pixel& a, const Pixel& b) { return a.score > b.score; });
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < pixels.size(); ++i)
    if (i == 0 || pixels[i].score != pixels[i - 1].score) ++distinct;

  // Distinct values are ranked from the lowest (rank 0); when there are too
  // many, only quantile-spaced ranks produce curve points.
  std::vector<std::uint8_t> keep(distinct, 1);
  if (distinct > opts.max_thresholds) {
    std::ranges::fill(keep, 0);
    const std::size_t m = opts.max_thresholds;
    for (std::size_t i = 0; i < m; ++i) keep[(i * (distinct - 1)) / (m - 1)] = 1;
  }

  const double n_regions = static_cast<double>(region_size.size());
  std::vector<double> hits(region_size.size(), 0.0);
  double overlap_sum = 0.0;
  std::size_t false_pos = 0;
  std::vector<CurvePoint> curve{{0.0, 0.0}};
  std::size_t rank = distinct;
  for (std::size_t i = 0; i < pixels.size();) {
    std::size_t j = i;
    while (j < pixels.size() && pixels[j].score == pixels[i].score) {
      if (pixels[j].region < 0) {
        ++false_pos;
      } else {
        overlap_sum += 1.0 / region_size[pixels[j].region];
      }
      ++j;
    }
    --rank;
    if (keep[rank]) {
      curve.push_back({static_cast<double>(false_pos) / static_cast<double>(negatives),
                       overlap_sum / n_regions});
    }
    i = j;
  }
  if (curve.back().fpr < 1.0 || curve.back().pro < 1.0) curve.push_back({1.0, 1.0});
  return curve;
}

double area_to_limit(std::span<const CurvePoint> curve, double limit) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const CurvePoint a = curve[i - 1], b = curve[i];
    if (a.fpr >= limit) break;
    if (b.fpr <= limit) {
      area += 0.5 * (b.fpr - a.fpr) * (a.pro + b.pro);
    } else {
      const double t = (limit - a.fpr) / (b.fpr - a.fpr);
      const double pro_at = a.pro + t * (b.pro - a.pro);
      area += 0.5 * (limit - a.fpr) * (a.pro + pro_at);
      break;
    }
  }
  return area;
}

double aupro(std::span<const AnomalyMap> maps, std::span<const std::vector<std::uint8_t>> gts,
             double fpr_limit, const ProOptions& opts) {
  CMDR_REQUIRE(fpr_limit > 0.0 && fpr_limit <= 1.0, "aupro: fpr_limit must lie in (0, 1]");
  const auto curve = pro_curve(maps, gts, opts);
  return area_to_limit(curve, fpr_limit) / fpr_limit;
}

std::uint64_t peak_resident_bytes() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      return std::stoull(line.substr(6)) * 1024ull;
    }
  }
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024ull;
}

Throughput measure_throughput(const std::function<void(std::size_t)>& pipeline,
                              std::size_t samples) {
  CMDR_REQUIRE(samples >= 1, "measure_throughput: need at least one sample");
  {
    // Resets the kernel's peak-RSS watermark where permitted.
    std::ofstream reset("/proc/self/clear_refs");
    if (reset) reset << "5";
  }
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  for (std::size_t i = 0; i < samples; ++i) pipeline(i);
  const double seconds = std::chrono::duration<double>(clock::now() - start).count();
  Throughput t;
  t.samples = samples;
  t.mean_seconds = seconds / static_cast<double>(samples);
  t.fps = static_cast<double>(samples) / std::max(seconds, 1e-9);
  t.peak_memory_bytes = peak_resident_bytes();
  return t;
}

}  // namespace cmdr::metrics
