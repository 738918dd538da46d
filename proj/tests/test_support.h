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

#ifndef DPALM_TESTS_TEST_SUPPORT_H_
#define DPALM_TESTS_TEST_SUPPORT_H_

// Oracles and fixtures shared by the unit tests and the acceptance suite.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/model.h"
#include "dpalm/rng.h"
#include "dpalm/weights.h"

namespace dpalm::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dpalm_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

// Central-difference check of the head's analytic cross-entropy gradient
// at one random (weights, record) probe. Returns the largest relative error
// |a - n| / max(|a|, |n|) over all coordinates whose gradient magnitude
// exceeds `floor`; smaller coordinates are compared absolutely against it.
inline double HeadGradientProbe(std::size_t hidden, std::size_t classes, uint64_t seed, double h = 1e-5,
                                double floor = 1e-4) {
  UniformSource src(RngStream{seed, 0});
  const HeadShape shape{hidden, classes};
  WeightVector omega{std::vector<double>(shape.ParameterCount()), shape.Tag()};
  for (double& v : omega.values) v = src.NextUniform(-1.0, 1.0);
  Matrix reps(1, static_cast<Eigen::Index>(hidden));
  for (Eigen::Index k = 0; k < reps.cols(); ++k) reps(0, k) = src.NextUniform(0.0, 2.0);
  const std::vector<std::size_t> label{static_cast<std::size_t>(src.NextIndex(classes))};

  const HeadLoss analytic = HeadLossAndGradient(omega, reps, label);
  double worst = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    WeightVector plus = omega, minus = omega;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double numeric = (HeadLossValue(plus, reps, label) - HeadLossValue(minus, reps, label)) / (2 * h);
    const double a = analytic.gradient[i];
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double err = scale > floor ? std::abs(a - numeric) / scale : std::abs(a - numeric) / floor;
    worst = std::max(worst, err);
  }
  return worst;
}

// Stub fine-tuning algorithm: omega is the coordinate-wise mean of the
// feature vectors.
inline WeightVector MeanFeatures(const Dataset& d) {
  WeightVector w{std::vector<double>(d.feature_dim, 0.0), "mean:" + std::to_string(d.feature_dim)};
  for (const Record& r : d.records) {
    for (std::size_t f = 0; f < d.feature_dim; ++f) w.values[f] += r.features[f];
  }
  for (double& v : w.values) v /= static_cast<double>(d.size());
  return w;
}

// Closed form for the stub: removing record i from n records gives mean
// (S - x_i) / (n - 1), so the difference between removing i and removing j
// is (x_j - x_i) / (n - 1).
inline DifferenceNorms MeanLeaveOneOutDifference(const Dataset& d, std::size_t i, std::size_t j) {
  const double n1 = static_cast<double>(d.size() - 1);
  DifferenceNorms out;
  double sq = 0.0;
  for (std::size_t f = 0; f < d.feature_dim; ++f) {
    const double diff = (d.records[j].features[f] - d.records[i].features[f]) / n1;
    out.l1 += std::abs(diff);
    sq += diff * diff;
  }
  out.l2 = std::sqrt(sq);
  return out;
}

// Average confidence assigned to the true label.
inline double MeanTrueLabelConfidence(const ProbabilityRows& p, const Dataset& d) {
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) sum += p[i][d.records[i].label];
  return sum / static_cast<double>(d.size());
}

}  // namespace dpalm::testing

#endif  // DPALM_TESTS_TEST_SUPPORT_H_
