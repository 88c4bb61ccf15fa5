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

// Dense numeric kernels shared by every stage: feature/score grids,
// normalized distances, pooling, box filtering and a portable seeded RNG.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cmdr/error.hpp"

namespace cmdr {

inline constexpr double kNormEpsilon = 1e-12;

// H x W x C grid stored row-major in (y, x, channel) order with one validity
// flag per pixel.
struct DenseFeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> validity;

  DenseFeatureMap() = default;
  DenseFeatureMap(int h, int w, int c, bool valid = true);

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::span<double> at(int y, int x) {
    return {values.data() + index(y, x) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const double> at(int y, int x) const {
    return {values.data() + index(y, x) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<double> pixel(std::size_t p) {
    return {values.data() + p * channels, static_cast<std::size_t>(channels)};
  }
  std::span<const double> pixel(std::size_t p) const {
    return {values.data() + p * channels, static_cast<std::size_t>(channels)};
  }
  bool valid(int y, int x) const { return validity[index(y, x)] != 0; }
  bool same_shape(const DenseFeatureMap& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::size_t valid_count() const;
  // Sets every invalid pixel's feature vector to zero.
  void zero_invalid();
};

// H x W score grid. Scores at invalid pixels are kept at exactly zero.
struct AnomalyMap {
  int height = 0;
  int width = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> validity;

  AnomalyMap() = default;
  AnomalyMap(int h, int w, bool valid = true);
  AnomalyMap(int h, int w, std::vector<std::uint8_t> valid_mask);

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  double& operator()(int y, int x) { return scores[index(y, x)]; }
  double operator()(int y, int x) const { return scores[index(y, x)]; }
  bool valid(int y, int x) const { return validity[index(y, x)] != 0; }
  bool same_grid(const AnomalyMap& o) const {
    return height == o.height && width == o.width;
  }
  std::size_t valid_count() const;
  double max_valid() const;
  double mean_valid() const;
};

// xoshiro256** seeded through splitmix64. The draw sequence depends only on
// the seed, so results are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream named by a purpose string.
  Rng derive(std::string_view purpose) const;

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);
std::uint64_t fnv1a64(std::string_view bytes);

std::vector<double> l2_normalize(std::span<const double> v);

// || a/|a| - b/|b| ||_2 with the zero-vector rule for |v| < kNormEpsilon.
double normalized_distance(std::span<const double> a, std::span<const double> b);

// 3x3 mean, stride 1, no padding. Output validity: any valid pixel in window.
DenseFeatureMap avg_pool_3x3_valid(const DenseFeatureMap& map);

// Bin i covers rows floor(i*H/out_h) .. ceil((i+1)*H/out_h)-1. Output
// validity: bin contained at least one valid input pixel.
DenseFeatureMap adaptive_avg_pool(const DenseFeatureMap& map, int out_h, int out_w);

// Mean over the clipped kernel x kernel window of valid pixels, repeated
// `passes` times. Invalid pixels stay at zero and do not contribute.
AnomalyMap box_filter(const AnomalyMap& map, int kernel, int passes = 1);

// Applies one single-pass box filter per kernel in order. Kernels larger
// than the map are clamped to the largest odd size that fits.
AnomalyMap smooth(const AnomalyMap& map, std::span<const int> kernels);

}  // namespace cmdr
