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

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace cmdr {

using Point3 = std::array<double, 3>;

struct Neighbor {
  std::size_t index;
  double distance;
};

// Static 3-d tree for exact k-nearest-neighbor queries. Results are sorted
// by (distance, index), so ties resolve deterministically.
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points);

  // k nearest points to `query`. When `exclude` names a stored index, that
  // point is skipped (self-exclusion for leave-one-out neighborhoods).
  std::vector<Neighbor> knn(const Point3& query, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis;                // -1 for leaves
    double split;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

double distance(const Point3& a, const Point3& b);

}  // namespace cmdr
