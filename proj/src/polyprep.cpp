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

#include "cmdr/polyprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace cmdr::polyprep {

double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  constexpr double kEulerGamma = 0.5772156649015329;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + kEulerGamma) - 2.0 * m / static_cast<double>(n);
}

IsolationForest IsolationForest::fit(std::span<const Point3> points,
                                     const IsolationForestConfig& cfg, Rng& rng) {
  CMDR_REQUIRE(points.size() >= 2, "isolation forest needs at least two points");
  CMDR_REQUIRE(cfg.trees >= 1 && cfg.subsample >= 2, "isolation forest: invalid configuration");
  IsolationForest forest;
  forest.subsample_ = static_cast<int>(std::min<std::size_t>(cfg.subsample, points.size()));
  forest.height_limit_ =
      static_cast<int>(std::ceil(std::log2(static_cast<double>(forest.subsample_))));

  std::vector<std::size_t> pool(points.size());
  std::vector<std::size_t> sample(forest.subsample_);
  for (int t = 0; t < cfg.trees; ++t) {
    // Partial Fisher-Yates draw without replacement.
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (int i = 0; i < forest.subsample_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      sample[i] = pool[i];
    }

    struct Task {
      int node;
      std::size_t begin, end;
      int depth;
    };
    forest.roots_.push_back(static_cast<int>(forest.nodes_.size()));
    forest.nodes_.push_back({});
    std::vector<Task> stack{{forest.roots_.back(), 0, sample.size(), 0}};
    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      Node& node = forest.nodes_[task.node];
      node.size = static_cast<int>(task.end - task.begin);
      node.depth = task.depth;
      if (task.depth >= forest.height_limit_ || node.size <= 1) continue;

      Point3 lo = points[sample[task.begin]], hi = lo;
      for (std::size_t i = task.begin; i < task.end; ++i) {
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], points[sample[i]][a]);
          hi[a] = std::max(hi[a], points[sample[i]][a]);
        }
      }
      int dims[3], n_dims = 0;
      for (int a = 0; a < 3; ++a)
        if (hi[a] > lo[a]) dims[n_dims++] = a;
      if (n_dims == 0) continue;
      const int dim = dims[rng.below(static_cast<std::uint64_t>(n_dims))];
      const double split = rng.uniform(lo[dim], hi[dim]);
      auto mid = std::partition(sample.begin() + task.begin, sample.begin() + task.end,
                                [&](std::size_t i) { return points[i][dim] < split; });
      const std::size_t m = static_cast<std::size_t>(mid - sample.begin());
      const int left = static_cast<int>(forest.nodes_.size());
      forest.nodes_.push_back({});
      const int right = static_cast<int>(forest.nodes_.size());
      forest.nodes_.push_back({});
      Node& parent = forest.nodes_[task.node];
      parent.dim = dim;
      parent.split = split;
      parent.left = left;
      parent.right = right;
      stack.push_back({right, m, task.end, task.depth + 1});
      stack.push_back({left, task.begin, m, task.depth + 1});
    }
  }
  return forest;
}

double IsolationForest::path_length(const Point3& p, int root) const {
  int id = root;
  while (nodes_[id].dim >= 0) {
    const Node& n = nodes_[id];
    id = p[n.dim] < n.split ? n.left : n.right;
  }
  return nodes_[id].depth + average_path_length(static_cast<std::size_t>(nodes_[id].size));
}

int IsolationForest::max_depth() const {
  int d = 0;
  for (const Node& n : nodes_) d = std::max(d, n.depth);
  return d;
}

double IsolationForest::score(const Point3& p) const {
  double total = 0.0;
  for (int root : roots_) total += path_length(p, root);
  const double mean = total / static_cast<double>(roots_.size());
  return std::pow(2.0, -mean / average_path_length(static_cast<std::size_t>(subsample_)));
}

std::vector<double> IsolationForest::score(std::span<const Point3> points) const {
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = score(points[i]);
  return out;
}

std::vector<double> iso_fit_score(std::span<const Point3> points,
                                  const IsolationForestConfig& cfg, Rng& rng) {
  return IsolationForest::fit(points, cfg, rng).score(points);
}

std::size_t contamination_count(double gamma, std::size_t n) {
  CMDR_REQUIRE(gamma > 0.0 && gamma < 1.0, "contamination must lie in (0, 1)");
  const long double exact = static_cast<long double>(gamma) * static_cast<long double>(n);
  const long double nearest = std::round(exact);
  // Only the rounding of gamma to a double (~1e-16 relative) is absorbed; a
  // wider window would swallow genuine fractional parts at large n.
  if (std::fabs(exact - nearest) <= 1e-14L * std::max<long double>(1.0L, nearest))
    return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(exact));
}

std::vector<std::uint8_t> threshold_by_contamination(std::span<const double> scores,
                                                     double gamma) {
  const std::size_t k = std::min(contamination_count(gamma, scores.size()), scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  std::vector<std::uint8_t> mask(scores.size(), 0);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1;
  return mask;
}

std::vector<double> lof_fit_score(std::span<const Point3> points, int k_neighbors) {
  CMDR_REQUIRE(points.size() >= 2, "LOF needs at least two points");
  CMDR_REQUIRE(k_neighbors >= 1 && static_cast<std::size_t>(k_neighbors) < points.size(),
               "LOF: k_neighbors must be in [1, N)");
  const std::size_t n = points.size(), k = static_cast<std::size_t>(k_neighbors);
  const KdTree tree(points);
  std::vector<std::vector<Neighbor>> nbrs(n);
  std::vector<double> kdist(n);
  for (std::size_t i = 0; i < n; ++i) {
    nbrs[i] = tree.knn(points[i], k, i);
    kdist[i] = nbrs[i].back().distance;
  }
  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (const auto& nb : nbrs[i]) reach += std::max(kdist[nb.index], nb.distance);
    lrd[i] = 1.0 / (reach / static_cast<double>(k) + 1e-10);
  }
  std::vector<double> lof(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& nb : nbrs[i]) s += lrd[nb.index];
    lof[i] = (s / static_cast<double>(k)) / lrd[i];
  }
  return lof;
}

std::vector<std::uint8_t> hybrid_mask(std::span<const std::uint8_t> a,
                                      std::span<const std::uint8_t> b) {
  CMDR_REQUIRE(a.size() == b.size(), "hybrid_mask: mask lengths differ");
  std::vector<std::uint8_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

std::vector<PointCloudChunk> chunk_and_label(std::span<const Point3> points,
                                             std::span<const std::uint8_t> mask,
                                             int chunk_size, double tau, Remainder remainder,
                                             const std::string& scan_id) {
  CMDR_REQUIRE(chunk_size >= 1, "chunk_and_label: chunk_size must be >= 1");
  CMDR_REQUIRE(points.size() == mask.size(), "chunk_and_label: mask length mismatch");
  const std::size_t cs = static_cast<std::size_t>(chunk_size);
  std::vector<PointCloudChunk> chunks;
  for (std::size_t begin = 0; begin < points.size(); begin += cs) {
    const std::size_t end = std::min(points.size(), begin + cs);
    if (end - begin < cs && remainder == Remainder::kDrop) break;
    PointCloudChunk c;
    c.scan_id = scan_id;
    c.chunk_index = static_cast<int>(chunks.size());
    for (std::size_t i = 0; i < cs; ++i) {
      const std::size_t src = begin + (i % (end - begin));
      c.points.push_back(points[src]);
      c.outlier_mask.push_back(mask[src] ? 1 : 0);
    }
    const std::size_t flagged =
        static_cast<std::size_t>(std::count(c.outlier_mask.begin(), c.outlier_mask.end(), 1));
    c.abnormal_ratio = static_cast<double>(flagged) / static_cast<double>(cs);
    c.label = c.abnormal_ratio >= tau ? Label::kAnomalous : Label::kNormal;
    chunks.push_back(std::move(c));
  }
  return chunks;
}

PointCloudChunk minmax_normalize(PointCloudChunk chunk) {
  CMDR_REQUIRE(!chunk.points.empty(), "minmax_normalize: empty chunk");
  for (int a = 0; a < 3; ++a) {
    double lo = chunk.points[0][a], hi = lo;
    for (const auto& p : chunk.points) {
      lo = std::min(lo, p[a]);
      hi = std::max(hi, p[a]);
    }
    for (auto& p : chunk.points) {
      if (hi == lo) {
        p[a] = 0.0;
      } else {
        p[a] = std::clamp(2.0 * (p[a] - lo) / (hi - lo) - 1.0, -1.0, 1.0);
      }
    }
  }
  return chunk;
}

Detector parse_detector(std::string_view name) {
  if (name == "iso") return Detector::kIso;
  if (name == "lof") return Detector::kLof;
  if (name == "hybrid") return Detector::kHybrid;
  throw ContractViolation("unknown outlier detector '" + std::string(name) + "'");
}

std::vector<std::uint8_t> detect_outliers(std::span<const Point3> points,
                                          const PreprocessConfig& cfg, Rng& rng) {
  std::vector<std::uint8_t> iso, lof;
  if (cfg.detector != Detector::kLof)
    iso = threshold_by_contamination(iso_fit_score(points, cfg.iso, rng), cfg.contamination);
  if (cfg.detector != Detector::kIso)
    lof = threshold_by_contamination(lof_fit_score(points, cfg.lof_neighbors),
                                     cfg.contamination);
  switch (cfg.detector) {
    case Detector::kIso: return iso;
    case Detector::kLof: return lof;
    case Detector::kHybrid: return hybrid_mask(iso, lof);
  }
  return iso;
}

DatasetSplit split_chunks(std::span<const PointCloudChunk> chunks, double train_fraction,
                          Rng& rng) {
  CMDR_REQUIRE(train_fraction > 0.0 && train_fraction <= 1.0,
               "split_chunks: train fraction must lie in (0, 1]");
  std::vector<std::size_t> normal, anomalous;
  for (std::size_t i = 0; i < chunks.size(); ++i)
    (chunks[i].label == Label::kNormal ? normal : anomalous).push_back(i);
  if (normal.empty()) throw Error("no nominal data", "no normal chunk available for training");
  rng.shuffle(normal);
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(normal.size()) + 1e-9));
  DatasetSplit split;
  split.train.assign(normal.begin(), normal.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(normal.begin() + static_cast<std::ptrdiff_t>(n_train), normal.end());
  split.test.insert(split.test.end(), anomalous.begin(), anomalous.end());
  std::ranges::sort(split.train);
  std::ranges::sort(split.test);
  return split;
}

int pseudo_image_side(int chunk_size) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(chunk_size))));
  return side * side == chunk_size ? side : 0;
}

DatasetManifest build_dataset(std::span<const PointCloudChunk> chunks, double train_fraction,
                              Rng& rng) {
  const DatasetSplit split = split_chunks(chunks, train_fraction, rng);
  DatasetManifest m;
  m.has_3d = true;
  const int cs = static_cast<int>(chunks.front().points.size());
  const int side = pseudo_image_side(cs);
  m.grid_height = side > 0 ? side : 1;
  m.grid_width = side > 0 ? side : cs;
  m.dim_3d = 3;
  m.seed = rng.seed();
  m.provenance = "polyprep";
  auto add = [&](std::size_t i, Split s) {
    const auto& c = chunks[i];
    char idx[16];
    std::snprintf(idx, sizeof idx, "%05d", c.chunk_index);
    SampleRecord r;
    r.id = c.scan_id + "_" + idx;
    r.split = s;
    r.label = c.label;
    r.features["f3d"] = "chunks/" + r.id + ".cmdr";
    r.gt_mask = "masks/" + r.id + ".cmdr";
    m.samples.push_back(std::move(r));
  };
  for (std::size_t i : split.train) add(i, Split::kTrain);
  for (std::size_t i : split.test) add(i, Split::kTest);
  return m;
}

}  // namespace cmdr::polyprep
