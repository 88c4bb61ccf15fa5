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

#include "cmdr/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cmdr {

DenseFeatureMap::DenseFeatureMap(int h, int w, int c, bool valid)
    : height(h), width(w), channels(c) {
  CMDR_REQUIRE(h > 0 && w > 0 && c > 0, "feature map dimensions must be positive");
  values.assign(static_cast<std::size_t>(h) * w * c, 0.0);
  validity.assign(static_cast<std::size_t>(h) * w, valid ? 1 : 0);
}

std::size_t DenseFeatureMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(validity.begin(), validity.end(), [](auto v) { return v != 0; }));
}

void DenseFeatureMap::zero_invalid() {
  for (std::size_t p = 0; p < pixels(); ++p)
    if (!validity[p]) std::ranges::fill(pixel(p), 0.0);
}

AnomalyMap::AnomalyMap(int h, int w, bool valid) : height(h), width(w) {
  CMDR_REQUIRE(h > 0 && w > 0, "anomaly map dimensions must be positive");
  scores.assign(static_cast<std::size_t>(h) * w, 0.0);
  validity.assign(static_cast<std::size_t>(h) * w, valid ? 1 : 0);
}

AnomalyMap::AnomalyMap(int h, int w, std::vector<std::uint8_t> valid_mask)
    : height(h), width(w), validity(std::move(valid_mask)) {
  CMDR_REQUIRE(h > 0 && w > 0, "anomaly map dimensions must be positive");
  CMDR_REQUIRE(validity.size() == static_cast<std::size_t>(h) * w,
               "validity mask size does not match grid");
  scores.assign(validity.size(), 0.0);
}

std::size_t AnomalyMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(validity.begin(), validity.end(), [](auto v) { return v != 0; }));
}

double AnomalyMap::max_valid() const {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < pixels(); ++p)
    if (validity[p]) best = std::max(best, scores[p]);
  return best;
}

double AnomalyMap::mean_valid() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < pixels(); ++p) {
    if (validity[p]) {
      sum += scores[p];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::uint64_t x = seed ^ fnv1a64(purpose);
  splitmix64(x);
  return splitmix64(x);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  ++position_;
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  CMDR_REQUIRE(n > 0, "Rng::below requires n > 0");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Rng Rng::derive(std::string_view purpose) const {
  return Rng(derive_seed(seed_, purpose));
}

std::vector<double> l2_normalize(std::span<const double> v) {
  CMDR_REQUIRE(!v.empty(), "l2_normalize requires a nonempty vector");
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  std::vector<double> out(v.size(), 0.0);
  if (norm < kNormEpsilon) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

double normalized_distance(std::span<const double> a, std::span<const double> b) {
  CMDR_REQUIRE(a.size() == b.size(), "normalized_distance: length mismatch");
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  const double ia = na < kNormEpsilon ? 0.0 : 1.0 / na;
  const double ib = nb < kNormEpsilon ? 0.0 : 1.0 / nb;
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] * ia - b[i] * ib;
    sq += d * d;
  }
  return std::min(std::sqrt(sq), 2.0);
}

DenseFeatureMap avg_pool_3x3_valid(const DenseFeatureMap& map) {
  CMDR_REQUIRE(map.height >= 3 && map.width >= 3,
               "avg_pool_3x3_valid requires at least a 3x3 map");
  DenseFeatureMap out(map.height - 2, map.width - 2, map.channels, false);
  const int c = map.channels;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      auto dst = out.at(y, x);
      bool any = false;
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          auto src = map.at(y + dy, x + dx);
          for (int k = 0; k < c; ++k) dst[k] += src[k];
          any = any || map.valid(y + dy, x + dx);
        }
      }
      for (int k = 0; k < c; ++k) dst[k] /= 9.0;
      out.validity[out.index(y, x)] = any ? 1 : 0;
    }
  }
  return out;
}

namespace {

struct Bin {
  int begin;
  int end;  // exclusive
};

Bin adaptive_bin(int i, int in, int out) {
  const int begin = static_cast<int>((static_cast<long long>(i) * in) / out);
  const int end = static_cast<int>(
      (static_cast<long long>(i + 1) * in + out - 1) / out);
  return {begin, end};
}

}  // namespace

DenseFeatureMap adaptive_avg_pool(const DenseFeatureMap& map, int out_h, int out_w) {
  CMDR_REQUIRE(out_h >= 1 && out_w >= 1, "adaptive_avg_pool: output size must be positive");
  DenseFeatureMap out(out_h, out_w, map.channels, false);
  const int c = map.channels;
  for (int i = 0; i < out_h; ++i) {
    const Bin rows = adaptive_bin(i, map.height, out_h);
    for (int j = 0; j < out_w; ++j) {
      const Bin cols = adaptive_bin(j, map.width, out_w);
      auto dst = out.at(i, j);
      bool any = false;
      for (int y = rows.begin; y < rows.end; ++y) {
        for (int x = cols.begin; x < cols.end; ++x) {
          auto src = map.at(y, x);
          for (int k = 0; k < c; ++k) dst[k] += src[k];
          any = any || map.valid(y, x);
        }
      }
      const double n = static_cast<double>((rows.end - rows.begin) * (cols.end - cols.begin));
      for (int k = 0; k < c; ++k) dst[k] /= n;
      out.validity[out.index(i, j)] = any ? 1 : 0;
    }
  }
  return out;
}

namespace {

AnomalyMap box_filter_pass(const AnomalyMap& map, int radius) {
  const int h = map.height, w = map.width;
  std::vector<double> row_sum(map.pixels(), 0.0);
  std::vector<int> row_cnt(map.pixels(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int n = 0;
      for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) {
        if (map.valid(y, xx)) {
          s += map(y, xx);
          ++n;
        }
      }
      row_sum[map.index(y, x)] = s;
      row_cnt[map.index(y, x)] = n;
    }
  }
  AnomalyMap out(h, w, map.validity);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!map.valid(y, x)) continue;
      double s = 0.0;
      int n = 0;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy) {
        s += row_sum[map.index(yy, x)];
        n += row_cnt[map.index(yy, x)];
      }
      out(y, x) = s / static_cast<double>(n);
    }
  }
  return out;
}

}  // namespace

AnomalyMap box_filter(const AnomalyMap& map, int kernel, int passes) {
  CMDR_REQUIRE(kernel >= 1 && kernel % 2 == 1, "box_filter: kernel must be odd and positive");
  CMDR_REQUIRE(kernel <= std::min(map.height, map.width),
               "box_filter: kernel exceeds map size");
  CMDR_REQUIRE(passes >= 1, "box_filter: passes must be positive");
  AnomalyMap out = map;
  for (std::size_t p = 0; p < out.pixels(); ++p)
    if (!out.validity[p]) out.scores[p] = 0.0;
  if (kernel == 1) return out;
  for (int i = 0; i < passes; ++i) out = box_filter_pass(out, kernel / 2);
  return out;
}

AnomalyMap smooth(const AnomalyMap& map, std::span<const int> kernels) {
  AnomalyMap out = map;
  for (std::size_t p = 0; p < out.pixels(); ++p)
    if (!out.validity[p]) out.scores[p] = 0.0;
  const int limit = std::min(map.height, map.width);
  for (int k : kernels) {
    int kk = std::min(k, limit % 2 == 1 ? limit : limit - 1);
    if (kk <= 1) continue;
    out = box_filter(out, kk, 1);
  }
  return out;
}

}  // namespace cmdr
