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

#ifndef DPALM_DATASET_H_
#define DPALM_DATASET_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpalm/rng.h"

namespace dpalm {

struct Record {
  std::vector<double> features;
  std::size_t label = 0;

  friend bool operator==(const Record&, const Record&) = default;
};

// An ordered list of labelled records. Order is part of a dataset's identity:
// trainers iterate in order and leave-one-out subsets keep it.
struct Dataset {
  std::vector<Record> records;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  void Validate() const {
    if (feature_dim == 0) throw std::invalid_argument("dataset feature_dim must be positive");
    if (num_classes == 0) throw std::invalid_argument("dataset num_classes must be positive");
    for (const Record& r : records) {
      if (r.features.size() != feature_dim) {
        throw std::invalid_argument("record has " + std::to_string(r.features.size()) + " features, expected " +
                                    std::to_string(feature_dim));
      }
      if (r.label >= num_classes) {
        throw std::invalid_argument("class index " + std::to_string(r.label) + " out of range [0, " +
                                    std::to_string(num_classes) + ")");
      }
      for (double v : r.features) {
        if (!std::isfinite(v)) throw std::invalid_argument("record features must be finite");
      }
    }
  }

  void RequireNonEmpty(const char* what) const {
    if (records.empty()) throw std::invalid_argument(std::string(what) + ": dataset is empty");
  }

  // Same schema, no records.
  Dataset EmptyLike() const { return Dataset{{}, feature_dim, num_classes}; }

  // The dataset minus record i, order preserved.
  Dataset Without(std::size_t i) const {
    if (i >= records.size()) throw std::out_of_range("Dataset::Without: index out of range");
    Dataset out = EmptyLike();
    out.records.reserve(records.size() - 1);
    for (std::size_t k = 0; k < records.size(); ++k) {
      if (k != i) out.records.push_back(records[k]);
    }
    return out;
  }

  Dataset Slice(std::size_t begin, std::size_t count) const {
    if (begin + count > records.size()) throw std::out_of_range("Dataset::Slice: range out of bounds");
    Dataset out = EmptyLike();
    out.records.assign(records.begin() + static_cast<std::ptrdiff_t>(begin),
                       records.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
  }

  Dataset Select(std::span<const std::size_t> indices) const {
    Dataset out = EmptyLike();
    out.records.reserve(indices.size());
    for (std::size_t i : indices) out.records.push_back(records.at(i));
    return out;
  }

  std::vector<std::size_t> Labels() const {
    std::vector<std::size_t> y(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) y[i] = records[i].label;
    return y;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// `count` distinct indices from [0, n), partial Fisher-Yates.
inline std::vector<std::size_t> SampleWithoutReplacement(std::size_t n, std::size_t count, UniformSource& src) {
  if (count > n) throw std::invalid_argument("cannot sample more indices than available");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(src.NextIndex(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

// Gaussian class clusters: class centers ~ N(0, I), records = center +
// cluster_spread * N(0, I). Records come out in a seeded shuffled order so
// that contiguous slices are class-mixed.
inline Dataset MakeSyntheticDataset(std::size_t num_classes, std::size_t per_class, std::size_t feature_dim,
                                    double cluster_spread, uint64_t seed) {
  if (num_classes == 0 || per_class == 0 || feature_dim == 0) {
    throw std::invalid_argument("MakeSyntheticDataset: counts must be positive");
  }
  if (!(cluster_spread > 0.0)) throw std::invalid_argument("MakeSyntheticDataset: spread must be positive");
  UniformSource center_src(RngStream{seed, 0});
  std::vector<std::vector<double>> centers(num_classes, std::vector<double>(feature_dim));
  for (auto& c : centers) {
    for (double& v : c) v = center_src.NextStandardNormal();
  }
  UniformSource point_src(RngStream{seed, 1});
  Dataset d{{}, feature_dim, num_classes};
  d.records.reserve(num_classes * per_class);
  for (std::size_t k = 0; k < per_class; ++k) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      Record r{std::vector<double>(feature_dim), c};
      for (std::size_t f = 0; f < feature_dim; ++f) {
        r.features[f] = centers[c][f] + cluster_spread * point_src.NextStandardNormal();
      }
      d.records.push_back(std::move(r));
    }
  }
  UniformSource shuffle_src(RngStream{seed, 2});
  for (std::size_t i = d.records.size(); i > 1; --i) {
    std::swap(d.records[i - 1], d.records[shuffle_src.NextIndex(i)]);
  }
  return d;
}

}  // namespace dpalm

#endif  // DPALM_DATASET_H_
