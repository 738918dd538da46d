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

#ifndef DPALM_SENSITIVITY_H_
#define DPALM_SENSITIVITY_H_

// Empirical sensitivity of the fine-tuning algorithm. Each sample draws two
// record indices i and j independently (i == j is kept), trains the head on
// d minus record i and on d minus record j with identical configuration and
// seed, and measures the weight difference. The estimate is the maximum over
// samples, which lower-bounds the true supremum over adjacent datasets.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/mechanisms.h"
#include "dpalm/model.h"
#include "dpalm/parallel.h"
#include "dpalm/rng.h"
#include "dpalm/weights.h"

namespace dpalm {

struct IndexPair {
  std::size_t i = 0;
  std::size_t j = 0;

  friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

struct PairNorms {
  double l1 = 0.0;
  double l2 = 0.0;

  friend bool operator==(const PairNorms&, const PairNorms&) = default;
};

struct SensitivityEstimate {
  double delta_l1 = 0.0;
  double delta_l2 = 0.0;
  std::size_t m = 0;
  uint64_t seed = 0;
  std::vector<PairNorms> per_pair_norms;
  std::vector<IndexPair> pairs;

  Sensitivity L1() const { return {SensitivityNorm::kL1, delta_l1}; }
  Sensitivity L2() const { return {SensitivityNorm::kL2, delta_l2}; }
  Sensitivity For(MechanismKind kind) const { return RequiredNorm(kind) == SensitivityNorm::kL1 ? L1() : L2(); }

  friend bool operator==(const SensitivityEstimate&, const SensitivityEstimate&) = default;
};

inline constexpr std::size_t kBruteForceMaxRecords = 12;

// The sampler's index stream: m pairs drawn sequentially, i before j. A
// longer draw with the same seed extends a shorter one.
inline std::vector<IndexPair> DrawIndexPairs(std::size_t n, std::size_t m, uint64_t seed) {
  if (n == 0) throw std::invalid_argument("DrawIndexPairs: empty dataset");
  UniformSource src(RngStream{seed, 0});
  std::vector<IndexPair> pairs(m);
  for (IndexPair& p : pairs) {
    p.i = static_cast<std::size_t>(src.NextIndex(n));
    p.j = static_cast<std::size_t>(src.NextIndex(n));
  }
  return pairs;
}

// Core of both estimators. `train_without(k)` returns the head trained on
// the dataset with record k removed; each distinct k is trained once.
template <class LeaveOneOutTrainer>
SensitivityEstimate SensitivityFromPairs(std::span<const IndexPair> pairs, LeaveOneOutTrainer&& train_without,
                                         uint64_t seed, unsigned threads = 1) {
  if (pairs.empty()) throw std::invalid_argument("sensitivity needs at least one sample (m >= 1)");
  std::map<std::size_t, std::size_t> slot;
  for (const IndexPair& p : pairs) {
    slot.emplace(p.i, 0);
    slot.emplace(p.j, 0);
  }
  std::vector<std::size_t> removed;
  removed.reserve(slot.size());
  for (auto& [k, s] : slot) {
    s = removed.size();
    removed.push_back(k);
  }
  std::vector<WeightVector> heads(removed.size());
  ParallelFor(removed.size(), threads, [&](std::size_t t) { heads[t] = train_without(removed[t]); });

  SensitivityEstimate est;
  est.m = pairs.size();
  est.seed = seed;
  est.pairs.assign(pairs.begin(), pairs.end());
  est.per_pair_norms.reserve(pairs.size());
  for (const IndexPair& p : pairs) {
    const DifferenceNorms d = Difference(heads[slot.at(p.i)], heads[slot.at(p.j)]);
    est.per_pair_norms.push_back({d.l1, d.l2});
    est.delta_l1 = std::max(est.delta_l1, d.l1);
    est.delta_l2 = std::max(est.delta_l2, d.l2);
  }
  return est;
}

// Sampler over an arbitrary fine-tuning algorithm `trainer(Dataset) ->
// WeightVector`, which must be deterministic.
template <class Trainer>
SensitivityEstimate SampleSensitivityWith(const Dataset& d, Trainer&& trainer, std::size_t m, uint64_t seed,
                                          unsigned threads = 1) {
  if (d.size() < 2) throw std::invalid_argument("SampleSensitivity: need at least two records");
  if (m == 0) throw std::invalid_argument("SampleSensitivity: m must be at least 1");
  const std::vector<IndexPair> pairs = DrawIndexPairs(d.size(), m, seed);
  return SensitivityFromPairs(pairs, [&](std::size_t k) { return trainer(d.Without(k)); }, seed, threads);
}

template <class Trainer>
SensitivityEstimate BruteForceSensitivityWith(const Dataset& d, Trainer&& trainer, unsigned threads = 1) {
  if (d.size() < 2) throw std::invalid_argument("BruteForceSensitivity: need at least two records");
  if (d.size() > kBruteForceMaxRecords) {
    throw std::invalid_argument("BruteForceSensitivity: at most " + std::to_string(kBruteForceMaxRecords) + " records");
  }
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) pairs.push_back({i, j});
  }
  return SensitivityFromPairs(pairs, [&](std::size_t k) { return trainer(d.Without(k)); }, 0, threads);
}

namespace internal {

// Head trainer over cached representations with one row left out.
struct CachedHeadTrainer {
  const Matrix* reps;
  const std::vector<std::size_t>* labels;
  std::size_t num_classes;
  const TrainConfig* cfg;

  WeightVector operator()(std::size_t removed) const {
    const auto n = reps->rows();
    Matrix sub(n - 1, reps->cols());
    std::vector<std::size_t> y;
    y.reserve(static_cast<std::size_t>(n - 1));
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (static_cast<std::size_t>(i) == removed) continue;
      sub.row(r++) = reps->row(i);
      y.push_back((*labels)[static_cast<std::size_t>(i)]);
    }
    return TrainHead(sub, y, num_classes, *cfg);
  }
};

}  // namespace internal

// Sampler for the real fine-tuning algorithm. The encoder is given, not
// trained here, and representations of d are computed once.
inline SensitivityEstimate SampleSensitivity(const WeightVector& theta, const Dataset& d, const TrainConfig& cfg,
                                             std::size_t m, uint64_t seed, unsigned threads = 1) {
  if (d.size() < 2) throw std::invalid_argument("SampleSensitivity: need at least two records");
  if (m == 0) throw std::invalid_argument("SampleSensitivity: m must be at least 1");
  d.Validate();
  cfg.Validate();
  const Matrix reps = EncodeDataset(theta, d);
  const std::vector<std::size_t> labels = d.Labels();
  const std::vector<IndexPair> pairs = DrawIndexPairs(d.size(), m, seed);
  return SensitivityFromPairs(pairs, internal::CachedHeadTrainer{&reps, &labels, d.num_classes, &cfg}, seed, threads);
}

inline SensitivityEstimate BruteForceSensitivity(const WeightVector& theta, const Dataset& d, const TrainConfig& cfg,
                                                 unsigned threads = 1) {
  if (d.size() > kBruteForceMaxRecords) {
    throw std::invalid_argument("BruteForceSensitivity: at most " + std::to_string(kBruteForceMaxRecords) + " records");
  }
  return BruteForceSensitivityWith(d, [&](const Dataset& sub) { return FinetuneHead(theta, sub, cfg); }, threads);
}

// JSON: {delta_l1, delta_l2, m, seed, per_pair_norms: [[l1, l2], ...],
// pairs: [[i, j], ...]}. `pairs` is optional on input so hand-written or
// reference estimates load too.
inline void to_json(nlohmann::json& j, const SensitivityEstimate& e) {
  nlohmann::json norms = nlohmann::json::array();
  for (const PairNorms& p : e.per_pair_norms) norms.push_back({p.l1, p.l2});
  nlohmann::json pairs = nlohmann::json::array();
  for (const IndexPair& p : e.pairs) pairs.push_back({p.i, p.j});
  j = nlohmann::json{{"delta_l1", e.delta_l1}, {"delta_l2", e.delta_l2},  {"m", e.m},
                     {"seed", e.seed},         {"per_pair_norms", norms}, {"pairs", pairs}};
}

inline void from_json(const nlohmann::json& j, SensitivityEstimate& e) {
  e = SensitivityEstimate{};
  j.at("delta_l1").get_to(e.delta_l1);
  j.at("delta_l2").get_to(e.delta_l2);
  e.m = j.value("m", std::size_t{0});
  e.seed = j.value("seed", uint64_t{0});
  if (j.contains("per_pair_norms")) {
    for (const auto& p : j.at("per_pair_norms"))
      e.per_pair_norms.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  if (j.contains("pairs")) {
    for (const auto& p : j.at("pairs")) e.pairs.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
  }
  if (e.delta_l1 < 0.0 || e.delta_l2 < 0.0) throw std::invalid_argument("sensitivity values must be nonnegative");
}

}  // namespace dpalm

#endif  // DPALM_SENSITIVITY_H_
