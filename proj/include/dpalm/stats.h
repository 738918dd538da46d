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

#ifndef DPALM_STATS_H_
#define DPALM_STATS_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dpalm {

inline double Mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("Mean: empty sample");
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

// Unbiased (n - 1) sample variance.
inline double Variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("Variance: need at least two values");
  const double m = Mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

// Two-sided Kolmogorov-Smirnov distance sup |F_n(x) - F(x)|.
template <class Cdf>
double KolmogorovSmirnovDistance(std::span<const double> sample, Cdf&& cdf) {
  if (sample.empty()) throw std::invalid_argument("KolmogorovSmirnovDistance: empty sample");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace dpalm

#endif  // DPALM_STATS_H_
