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

// Point-cloud preprocessing: outlier detection (Isolation Forest, LOF and
// their union), contamination thresholding, sequential chunking with
// chunk-level labels, per-chunk min-max normalization and one-class dataset
// construction.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmdr/manifest.hpp"
#include "cmdr/numcore.hpp"
#include "cmdr/spatial.hpp"

namespace cmdr::polyprep {

inline constexpr double kContaminationLow = 0.0001;
inline constexpr double kContaminationHigh = 0.00015;
inline constexpr double kChunkThreshold = 0.0025;
inline constexpr int kChunkSize = 9216;

// Average path length of an unsuccessful binary-search-tree lookup among n
// points: 2 H(n-1) - 2 (n-1) / n with H(i) ~ ln(i) + Euler's constant, as in
// the reference isolation forest; c(1) = 0 and c(2) = 1.
double average_path_length(std::size_t n);

struct IsolationForestConfig {
  int trees = 100;
  int subsample = 256;
};

class IsolationForest {
 public:
  // The subsample size is clamped to the number of points.
  static IsolationForest fit(std::span<const Point3> points, const IsolationForestConfig& cfg,
                             Rng& rng);

  // 2^(-E[h(x)] / c(subsample)), in (0, 1).
  double score(const Point3& p) const;
  std::vector<double> score(std::span<const Point3> points) const;

  int subsample() const { return subsample_; }
  int height_limit() const { return height_limit_; }
  int max_depth() const;
  std::size_t tree_count() const { return roots_.size(); }

 private:
  struct Node {
    int dim = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
    int size = 0;
    int depth = 0;
  };

  double path_length(const Point3& p, int root) const;

  std::vector<Node> nodes_;
  std::vector<int> roots_;
  int subsample_ = 0;
  int height_limit_ = 0;
};

std::vector<double> iso_fit_score(std::span<const Point3> points,
                                  const IsolationForestConfig& cfg, Rng& rng);

// ceil(gamma * n), robust to the product landing a hair above an integer.
std::size_t contamination_count(double gamma, std::size_t n);

// Flags exactly contamination_count(gamma, N) highest-scoring points; ties
// at the cutoff go to the lower index.
std::vector<std::uint8_t> threshold_by_contamination(std::span<const double> scores,
                                                     double gamma);

// Local outlier factor with k nearest neighbors (self excluded).
std::vector<double> lof_fit_score(std::span<const Point3> points, int k_neighbors);

std::vector<std::uint8_t> hybrid_mask(std::span<const std::uint8_t> a,
                                      std::span<const std::uint8_t> b);

enum class Remainder { kDrop, kPadRepeat };

struct PointCloudChunk {
  std::vector<Point3> points;
  std::vector<std::uint8_t> outlier_mask;
  double abnormal_ratio = 0.0;
  Label label = Label::kNormal;
  std::string scan_id;
  int chunk_index = 0;
};

// Sequential partition in acquisition order. A trailing remainder shorter
// than chunk_size is dropped or padded by repeating its own points.
std::vector<PointCloudChunk> chunk_and_label(std::span<const Point3> points,
                                             std::span<const std::uint8_t> mask,
                                             int chunk_size, double tau,
                                             Remainder remainder = Remainder::kDrop,
                                             const std::string& scan_id = "scan");

// Per-axis x' = 2 (x - min) / (max - min) - 1; degenerate axes map to 0.
PointCloudChunk minmax_normalize(PointCloudChunk chunk);

enum class Detector { kIso, kLof, kHybrid };

Detector parse_detector(std::string_view name);

struct PreprocessConfig {
  Detector detector = Detector::kIso;
  double contamination = kContaminationLow;
  int chunk_size = kChunkSize;
  double tau = kChunkThreshold;
  Remainder remainder = Remainder::kDrop;
  double train_fraction = 0.9;
  IsolationForestConfig iso{};
  int lof_neighbors = 20;
};

// Outlier mask for one scan with the configured detector.
std::vector<std::uint8_t> detect_outliers(std::span<const Point3> points,
                                          const PreprocessConfig& cfg, Rng& rng);

struct DatasetSplit {
  std::vector<std::size_t> train;  // indices into the chunk list
  std::vector<std::size_t> test;
};

// Seeded shuffle of the normal chunks; floor(fraction * normals) go to
// training, the rest of the normals plus every anomalous chunk to test.
// Throws Error("no nominal data") without normal chunks.
DatasetSplit split_chunks(std::span<const PointCloudChunk> chunks, double train_fraction,
                          Rng& rng);

// Side length of the square pseudo-image for a chunk, or 0 when the chunk
// size is not a perfect square.
int pseudo_image_side(int chunk_size);

// Manifest listing each chunk as a 3D-only sample with relative paths
// "chunks/<id>.cmdr" (pseudo-image of coordinates) and "masks/<id>.cmdr".
DatasetManifest build_dataset(std::span<const PointCloudChunk> chunks, double train_fraction,
                              Rng& rng);

}  // namespace cmdr::polyprep
