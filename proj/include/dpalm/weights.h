// Copyright 2026 The dpalm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPALM_WEIGHTS_H_
#define DPALM_WEIGHTS_H_

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dpalm {

// Flattened network parameters. Flattening is layer by layer, each weight
// matrix row-major (one row per output unit), weights before biases. The
// shape tag names the layout, e.g. "encoder:32x64:relu" or "head:64x10";
// vectors are only comparable when their tags agree.
struct WeightVector {
  std::vector<double> values;
  std::string shape_tag;

  std::size_t size() const { return values.size(); }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

inline void RequireSameShape(const WeightVector& a, const WeightVector& b) {
  if (a.shape_tag != b.shape_tag || a.size() != b.size()) {
    throw std::invalid_argument("weight vectors have different shapes: '" + a.shape_tag + "' vs '" + b.shape_tag + "'");
  }
}

struct DifferenceNorms {
  double l1 = 0.0;
  double l2 = 0.0;
};

// Both norms of a - b in one pass.
inline DifferenceNorms Difference(const WeightVector& a, const WeightVector& b) {
  RequireSameShape(a, b);
  DifferenceNorms n;
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    n.l1 += std::abs(d);
    sq += d * d;
  }
  n.l2 = std::sqrt(sq);
  return n;
}

}  // namespace dpalm

#endif  // DPALM_WEIGHTS_H_
