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

#ifndef DPALM_MIA_H_
#define DPALM_MIA_H_

// Black-box membership inference with one shadow model. The attacker trains
// a shadow head on its own "in" partition, queries it on "in" and "out"
// records, and fits a binary MLP on (output probabilities, one-hot label)
// to predict membership. The fitted classifier is then applied to the
// victim's answers.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/io.h"
#include "dpalm/model.h"
#include "dpalm/protection.h"
#include "dpalm/rng.h"
#include "dpalm/weights.h"

namespace dpalm {

// Where an attack record's output vector came from. Classifiers are only
// ever trained on shadow records.
enum class Provenance { kShadow, kVictim };

struct AttackRecord {
  std::vector<double> output;        // model probabilities, length C
  std::vector<double> label_onehot;  // ground truth, length C
  int membership = 0;                // 1 = in the model's training set
  Provenance provenance = Provenance::kShadow;

  void Validate() const {
    if (output.empty() || output.size() != label_onehot.size()) {
      throw std::invalid_argument("attack record: output and label must have the same nonzero length");
    }
    double sum = 0.0;
    for (double p : output) sum += p;
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("attack record: output must sum to 1");
    std::size_t ones = 0;
    for (double v : label_onehot) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw std::invalid_argument("attack record: label must be one-hot");
      }
    }
    if (ones != 1) throw std::invalid_argument("attack record: label must be one-hot");
    if (membership != 0 && membership != 1) throw std::invalid_argument("attack record: membership must be 0 or 1");
  }

  friend bool operator==(const AttackRecord&, const AttackRecord&) = default;
};

enum class AttackOptimizer { kGradientDescent, kAdam };

struct AttackClassifierConfig {
  std::size_t hidden_layers = 5;
  std::size_t hidden_width = 64;
  double learning_rate = 0.001;
  std::size_t epochs = 1000;
  uint64_t seed = 0;
  std::size_t train_pairs = 2000;
  AttackOptimizer optimizer = AttackOptimizer::kAdam;

  void Validate() const {
    if (hidden_layers == 0) throw std::invalid_argument("attack classifier needs at least one hidden layer");
    if (hidden_width == 0) throw std::invalid_argument("attack classifier hidden_width must be positive");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("attack classifier learning_rate must be nonnegative");
    if (train_pairs == 0 || train_pairs % 2 != 0) throw std::invalid_argument("train_pairs must be even and positive");
  }
};

inline std::vector<double> OneHot(std::size_t label, std::size_t num_classes) {
  std::vector<double> v(num_classes, 0.0);
  v.at(label) = 1.0;
  return v;
}

namespace internal {

inline std::vector<AttackRecord> MakeAttackRecords(const ProbabilityRows& outputs, const Dataset& d, int membership,
                                                   Provenance provenance) {
  std::vector<AttackRecord> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.push_back({outputs[i], OneHot(d.records[i].label, d.num_classes), membership, provenance});
  }
  return out;
}

inline Dataset SampleRecords(const Dataset& d, std::size_t count, UniformSource& src) {
  return d.Select(SampleWithoutReplacement(d.size(), count, src));
}

}  // namespace internal

// pairs/2 members from in_set and pairs/2 non-members from out_set, sampled
// without replacement, scored by the shadow model. Members come first.
inline std::vector<AttackRecord> BuildAttackDataset(const WeightVector& shadow_theta, const WeightVector& shadow_omega,
                                                    const Dataset& in_set, const Dataset& out_set, std::size_t pairs,
                                                    uint64_t seed) {
  in_set.RequireNonEmpty("BuildAttackDataset in_set");
  out_set.RequireNonEmpty("BuildAttackDataset out_set");
  if (pairs == 0 || pairs % 2 != 0) throw std::invalid_argument("BuildAttackDataset: pairs must be even and positive");
  const std::size_t half = pairs / 2;
  if (half > in_set.size() || half > out_set.size()) {
    throw std::invalid_argument("BuildAttackDataset: need " + std::to_string(half) + " records per partition, have " +
                                std::to_string(in_set.size()) + " in / " + std::to_string(out_set.size()) + " out");
  }
  UniformSource src(RngStream{seed, 0});
  const Dataset in = internal::SampleRecords(in_set, half, src);
  const Dataset out = internal::SampleRecords(out_set, half, src);
  std::vector<AttackRecord> records =
      internal::MakeAttackRecords(PredictBatch(shadow_theta, shadow_omega, in), in, 1, Provenance::kShadow);
  const auto out_records =
      internal::MakeAttackRecords(PredictBatch(shadow_theta, shadow_omega, out), out, 0, Provenance::kShadow);
  records.insert(records.end(), out_records.begin(), out_records.end());
  return records;
}

// ReLU MLP with a single sigmoid output.
class AttackClassifier {
 public:
  struct Layer {
    Matrix weight;  // out x in
    Vector bias;

    friend bool operator==(const Layer&, const Layer&) = default;
  };

  AttackClassifier() = default;

  // Glorot-uniform weights and zero biases, seeded.
  AttackClassifier(std::size_t input_dim, const AttackClassifierConfig& cfg) {
    cfg.Validate();
    UniformSource src(RngStream{DeriveSeed(cfg.seed, "attack-init"), 0});
    std::size_t in = input_dim;
    for (std::size_t l = 0; l <= cfg.hidden_layers; ++l) {
      const std::size_t out = l == cfg.hidden_layers ? 1 : cfg.hidden_width;
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      Layer layer{Matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                  Vector::Zero(static_cast<Eigen::Index>(out))};
      for (Eigen::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = src.NextUniform(-limit, limit);
      layers_.push_back(std::move(layer));
      in = out;
    }
  }

  std::size_t input_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
  }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  // Membership probability for each row of x.
  Vector ScoreBatch(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) throw std::invalid_argument("attack input width mismatch");
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = a * layers_[l].weight.transpose();
      z.rowwise() += layers_[l].bias.transpose();
      a = l + 1 < layers_.size() ? Matrix(z.cwiseMax(0.0)) : z;
    }
    return a.col(0).unaryExpr([](double z) { return Sigmoid(z); });
  }

  double operator()(const AttackRecord& r) const;

  static double Sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  friend bool operator==(const AttackClassifier&, const AttackClassifier&) = default;

 private:
  std::vector<Layer> layers_;
};

// Classifier input: the output vector followed by the one-hot label.
inline Matrix AttackFeatures(std::span<const AttackRecord> records) {
  if (records.empty()) return Matrix(0, 0);
  const std::size_t c = records.front().output.size();
  Matrix x(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(2 * c));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const AttackRecord& r = records[i];
    if (r.output.size() != c || r.label_onehot.size() != c)
      throw std::invalid_argument("attack records differ in width");
    for (std::size_t k = 0; k < c; ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r.output[k];
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + k)) = r.label_onehot[k];
    }
  }
  return x;
}

inline double AttackClassifier::operator()(const AttackRecord& r) const {
  return ScoreBatch(AttackFeatures(std::span<const AttackRecord>(&r, 1)))(0);
}

// Full-batch training on binary cross-entropy. Adam uses the usual
// defaults (beta1 0.9, beta2 0.999, epsilon 1e-7).
inline AttackClassifier TrainAttackClassifier(std::span<const AttackRecord> records,
                                              const AttackClassifierConfig& cfg) {
  cfg.Validate();
  if (records.empty()) throw std::invalid_argument("TrainAttackClassifier: no records");
  std::size_t members = 0;
  for (const AttackRecord& r : records) {
    r.Validate();
    if (r.provenance != Provenance::kShadow) {
      throw std::invalid_argument("TrainAttackClassifier: refusing to train on victim outputs");
    }
    members += static_cast<std::size_t>(r.membership);
  }
  if (members == 0 || members == records.size()) {
    throw std::invalid_argument("TrainAttackClassifier: both membership classes are required");
  }
  const Matrix x = AttackFeatures(records);
  Vector y(x.rows());
  for (std::size_t i = 0; i < records.size(); ++i) y(static_cast<Eigen::Index>(i)) = records[i].membership;

  AttackClassifier clf(static_cast<std::size_t>(x.cols()), cfg);
  auto& layers = clf.mutable_layers();
  const std::size_t depth = layers.size();
  struct Moments {
    Matrix mw, vw;
    Vector mb, vb;
  };
  std::vector<Moments> mom(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    mom[l] = {Matrix::Zero(layers[l].weight.rows(), layers[l].weight.cols()),
              Matrix::Zero(layers[l].weight.rows(), layers[l].weight.cols()), Vector::Zero(layers[l].bias.size()),
              Vector::Zero(layers[l].bias.size())};
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-7;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  std::vector<Matrix> acts(depth + 1);
  std::vector<Matrix> pre(depth);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    acts[0] = x;
    for (std::size_t l = 0; l < depth; ++l) {
      pre[l] = acts[l] * layers[l].weight.transpose();
      pre[l].rowwise() += layers[l].bias.transpose();
      acts[l + 1] = l + 1 < depth ? Matrix(pre[l].cwiseMax(0.0)) : pre[l];
    }
    // d(BCE)/dz for a sigmoid output is p - y.
    Matrix grad(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      grad(i, 0) = (AttackClassifier::Sigmoid(pre[depth - 1](i, 0)) - y(i)) * inv_n;
    const double t = static_cast<double>(epoch + 1);
    for (std::size_t l = depth; l-- > 0;) {
      const Matrix gw = grad.transpose() * acts[l];
      const Vector gb = grad.colwise().sum().transpose();
      if (l > 0) {
        grad = (grad * layers[l].weight).cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
      }
      if (cfg.optimizer == AttackOptimizer::kGradientDescent) {
        layers[l].weight -= cfg.learning_rate * gw;
        layers[l].bias -= cfg.learning_rate * gb;
        continue;
      }
      Moments& m = mom[l];
      m.mw = kBeta1 * m.mw + (1.0 - kBeta1) * gw;
      m.vw = kBeta2 * m.vw + (1.0 - kBeta2) * gw.cwiseProduct(gw);
      m.mb = kBeta1 * m.mb + (1.0 - kBeta1) * gb;
      m.vb = kBeta2 * m.vb + (1.0 - kBeta2) * gb.cwiseProduct(gb);
      const double c1 = 1.0 / (1.0 - std::pow(kBeta1, t));
      const double c2 = 1.0 / (1.0 - std::pow(kBeta2, t));
      layers[l].weight.array() -= cfg.learning_rate * (m.mw.array() * c1) / ((m.vw.array() * c2).sqrt() + kEps);
      layers[l].bias.array() -= cfg.learning_rate * (m.mb.array() * c1) / ((m.vb.array() * c2).sqrt() + kEps);
    }
  }
  return clf;
}

// Fraction of records whose membership is predicted correctly, predicting
// "member" when the score exceeds 0.5.
template <class Scorer>
double AttackRecordAccuracy(const Scorer& scorer, std::span<const AttackRecord> records) {
  if (records.empty()) throw std::invalid_argument("AttackRecordAccuracy: no records");
  std::size_t correct = 0;
  for (const AttackRecord& r : records) {
    const int guess = scorer(r) > 0.5 ? 1 : 0;
    if (guess == r.membership) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

inline double AttackRecordAccuracy(const AttackClassifier& clf, std::span<const AttackRecord> records) {
  if (records.empty()) throw std::invalid_argument("AttackRecordAccuracy: no records");
  const Vector scores = clf.ScoreBatch(AttackFeatures(records));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if ((scores(static_cast<Eigen::Index>(i)) > 0.5 ? 1 : 0) == records[i].membership) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

// Victim-side evaluation records: equal numbers of members and non-members
// (the smaller set's size), answered by the clean or the noisy head.
inline std::vector<AttackRecord> VictimAttackRecords(const ProtectedModel& victim, const Dataset& members,
                                                     const Dataset& nonmembers, bool use_protected_outputs,
                                                     uint64_t seed) {
  members.RequireNonEmpty("attack members");
  nonmembers.RequireNonEmpty("attack non-members");
  const std::size_t k = std::min(members.size(), nonmembers.size());
  UniformSource src(RngStream{seed, 0});
  const Dataset in = internal::SampleRecords(members, k, src);
  const Dataset out = internal::SampleRecords(nonmembers, k, src);
  const WeightVector& omega = use_protected_outputs ? victim.omega_noisy : victim.omega_clean;
  auto records = internal::MakeAttackRecords(PredictBatch(victim.theta, omega, in), in, 1, Provenance::kVictim);
  const auto rest = internal::MakeAttackRecords(PredictBatch(victim.theta, omega, out), out, 0, Provenance::kVictim);
  records.insert(records.end(), rest.begin(), rest.end());
  return records;
}

template <class Scorer>
double AttackAccuracy(const Scorer& scorer, const ProtectedModel& victim, const Dataset& members,
                      const Dataset& nonmembers, bool use_protected_outputs, uint64_t seed) {
  const auto records = VictimAttackRecords(victim, members, nonmembers, use_protected_outputs, seed);
  return AttackRecordAccuracy(scorer, std::span<const AttackRecord>(records));
}

// CSV: out0..out{C-1}, label0..label{C-1}, membership.
inline void SaveAttackDatasetCsv(std::span<const AttackRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const std::size_t c = records.empty() ? 0 : records.front().output.size();
  for (std::size_t k = 0; k < c; ++k) out << "out" << k << ',';
  for (std::size_t k = 0; k < c; ++k) out << "label" << k << ',';
  out << "membership\n";
  for (const AttackRecord& r : records) {
    for (double v : r.output) out << io_internal::FormatDouble(v) << ',';
    for (double v : r.label_onehot) out << io_internal::FormatDouble(v) << ',';
    out << r.membership << '\n';
  }
  if (!out) throw std::runtime_error("error writing '" + path.string() + "'");
}

inline std::vector<AttackRecord> LoadAttackDatasetCsv(const std::filesystem::path& path,
                                                      Provenance provenance = Provenance::kShadow) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path.string() + "' is empty");
  const auto header = io_internal::SplitCsv(io_internal::StripCr(line));
  if (header.size() < 3 || header.size() % 2 == 0 || header.back() != "membership") {
    throw std::runtime_error("'" + path.string() + "': malformed attack dataset header");
  }
  const std::size_t c = (header.size() - 1) / 2;
  std::vector<AttackRecord> records;
  while (std::getline(in, line)) {
    const std::string_view row = io_internal::StripCr(line);
    if (row.empty()) continue;
    const auto cells = io_internal::SplitCsv(row);
    if (cells.size() != header.size()) throw std::runtime_error("'" + path.string() + "': ragged row");
    AttackRecord r{std::vector<double>(c), std::vector<double>(c), 0, provenance};
    for (std::size_t k = 0; k < c; ++k) {
      r.output[k] = io_internal::ParseDouble(cells[k]);
      r.label_onehot[k] = io_internal::ParseDouble(cells[c + k]);
    }
    r.membership = static_cast<int>(io_internal::ParseCount(cells.back()));
    r.Validate();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace dpalm

#endif  // DPALM_MIA_H_
