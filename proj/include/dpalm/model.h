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

#ifndef DPALM_MODEL_H_
#define DPALM_MODEL_H_

// Desk-scale two-stage learner: a one-hidden-layer ReLU encoder pretrained on
// a pseudo-label task, and a linear softmax projection head fine-tuned on
// labelled data with the encoder frozen. Every trainer is full-batch
// gradient descent from a seeded initialization, so each is a deterministic
// function of its arguments.

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/rng.h"
#include "dpalm/weights.h"

namespace dpalm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct TrainConfig {
  // Encoder hidden widths; pretraining uses exactly one. The head trainer
  // ignores this field.
  std::vector<std::size_t> hidden_dims = {64};
  std::size_t epochs = 200;
  double learning_rate = 0.5;
  uint64_t seed = 0;
  // Initial weights are drawn uniformly from [-init_scale, init_scale];
  // biases start at zero.
  double init_scale = 0.1;
  // Number of input transformations in the pseudo-label task.
  std::size_t num_transforms = 4;

  void Validate() const {
    if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("TrainConfig: learning_rate must be finite and nonnegative");
    }
    if (!(init_scale > 0.0)) throw std::invalid_argument("TrainConfig: init_scale must be positive");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---------------------------------------------------------------------------
// Shape tags.
// ---------------------------------------------------------------------------

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  std::size_t ParameterCount() const { return hidden_dim * input_dim + hidden_dim; }
  std::string Tag() const {
    return "encoder:" + std::to_string(input_dim) + "x" + std::to_string(hidden_dim) + ":relu";
  }
};

struct HeadShape {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::size_t ParameterCount() const { return num_classes * input_dim + num_classes; }
  std::string Tag() const { return "head:" + std::to_string(input_dim) + "x" + std::to_string(num_classes); }
};

namespace internal {

inline std::pair<std::size_t, std::size_t> ParseDims(std::string_view text, const std::string& tag) {
  const auto x = text.find('x');
  if (x == std::string_view::npos) throw std::invalid_argument("malformed shape tag '" + tag + "'");
  std::size_t a = 0, b = 0;
  const auto r1 = std::from_chars(text.data(), text.data() + x, a);
  const auto r2 = std::from_chars(text.data() + x + 1, text.data() + text.size(), b);
  if (r1.ec != std::errc() || r1.ptr != text.data() + x || r2.ec != std::errc() ||
      r2.ptr != text.data() + text.size() || a == 0 || b == 0) {
    throw std::invalid_argument("malformed shape tag '" + tag + "'");
  }
  return {a, b};
}

}  // namespace internal

inline EncoderShape ParseEncoderShape(const WeightVector& theta) {
  const std::string& tag = theta.shape_tag;
  constexpr std::string_view kPrefix = "encoder:";
  constexpr std::string_view kSuffix = ":relu";
  std::string_view t(tag);
  if (!t.starts_with(kPrefix) || !t.ends_with(kSuffix)) {
    throw std::invalid_argument("not an encoder shape tag: '" + tag + "'");
  }
  t.remove_prefix(kPrefix.size());
  t.remove_suffix(kSuffix.size());
  const auto [in, hidden] = internal::ParseDims(t, tag);
  EncoderShape s{in, hidden};
  if (theta.size() != s.ParameterCount())
    throw std::invalid_argument("encoder weight count does not match '" + tag + "'");
  return s;
}

inline HeadShape ParseHeadShape(const WeightVector& omega) {
  const std::string& tag = omega.shape_tag;
  constexpr std::string_view kPrefix = "head:";
  std::string_view t(tag);
  if (!t.starts_with(kPrefix)) throw std::invalid_argument("not a head shape tag: '" + tag + "'");
  t.remove_prefix(kPrefix.size());
  const auto [in, classes] = internal::ParseDims(t, tag);
  HeadShape s{in, classes};
  if (omega.size() != s.ParameterCount()) throw std::invalid_argument("head weight count does not match '" + tag + "'");
  return s;
}

// ---------------------------------------------------------------------------
// Dense-layer helpers over flattened weights.
// ---------------------------------------------------------------------------

namespace internal {

using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstVectorMap = Eigen::Map<const Vector>;
using VectorMap = Eigen::Map<Vector>;

inline void FillUniform(std::span<double> out, double scale, UniformSource& src) {
  for (double& v : out) v = src.NextUniform(-scale, scale);
}

// Rows of `logits` become probabilities in place.
inline void SoftmaxRows(Matrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// Mean cross-entropy of row-softmax(logits) against labels.
inline double CrossEntropy(const Matrix& logits, std::span<const std::size_t> labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]));
  }
  return total / static_cast<double>(logits.rows());
}

inline Matrix ToMatrix(const Dataset& d) {
  Matrix x(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.feature_dim));
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t f = 0; f < d.feature_dim; ++f) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = d.records[i].features[f];
    }
  }
  return x;
}

// Random orthogonal matrix: Gram-Schmidt on a Gaussian matrix.
inline Matrix RandomOrthogonal(std::size_t n, UniformSource& src) {
  const auto dim = static_cast<Eigen::Index>(n);
  Matrix q(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) q(i, j) = src.NextStandardNormal();
  }
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) q.row(i) -= q.row(i).dot(q.row(j)) * q.row(j);
    q.row(i) /= q.row(i).norm();
  }
  return q;
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Encoder.
// ---------------------------------------------------------------------------

// Batch pre-activations X W^T + b for an encoder; rows follow `x`.
inline Matrix EncodePreActivationBatch(const WeightVector& theta, const Matrix& x) {
  const EncoderShape s = ParseEncoderShape(theta);
  if (static_cast<std::size_t>(x.cols()) != s.input_dim) {
    throw std::invalid_argument("encoder expects " + std::to_string(s.input_dim) + " features, got " +
                                std::to_string(x.cols()));
  }
  const auto h = static_cast<Eigen::Index>(s.hidden_dim);
  const auto f = static_cast<Eigen::Index>(s.input_dim);
  internal::ConstMatrixMap w(theta.values.data(), h, f);
  internal::ConstVectorMap b(theta.values.data() + h * f, h);
  Matrix z = x * w.transpose();
  z.rowwise() += b.transpose();
  return z;
}

inline Matrix EncodeBatch(const WeightVector& theta, const Matrix& x) {
  return EncodePreActivationBatch(theta, x).cwiseMax(0.0);
}

// Representations of every record, one row each.
inline Matrix EncodeDataset(const WeightVector& theta, const Dataset& d) {
  return EncodeBatch(theta, internal::ToMatrix(d));
}

inline std::vector<double> EncodePreActivation(const WeightVector& theta, std::span<const double> x) {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  const Matrix z = EncodePreActivationBatch(theta, row);
  return {z.data(), z.data() + z.size()};
}

inline std::vector<double> Encode(const WeightVector& theta, std::span<const double> x) {
  std::vector<double> z = EncodePreActivation(theta, x);
  for (double& v : z) v = std::max(v, 0.0);
  return z;
}

struct PretrainResult {
  WeightVector theta;
  // Weights of the throwaway pseudo-label classifier on top of the encoder.
  WeightVector pretext_head;
  double pretext_accuracy = 0.0;
};

// The pseudo-label inputs: every record under each of the k seeded
// orthogonal transforms, labelled by transform index. Record.label is never
// read.
inline std::pair<Matrix, std::vector<std::size_t>> BuildPretextTask(const Dataset& d, const TrainConfig& cfg) {
  if (cfg.num_transforms < 2) throw std::invalid_argument("pretraining needs at least two transforms");
  UniformSource src(RngStream{DeriveSeed(cfg.seed, "pretext-transforms"), 0});
  const Matrix x = internal::ToMatrix(d);
  const auto n = x.rows();
  Matrix inputs(n * static_cast<Eigen::Index>(cfg.num_transforms), x.cols());
  std::vector<std::size_t> labels(static_cast<std::size_t>(inputs.rows()));
  for (std::size_t k = 0; k < cfg.num_transforms; ++k) {
    const Matrix t = internal::RandomOrthogonal(d.feature_dim, src);
    inputs.middleRows(static_cast<Eigen::Index>(k) * n, n) = x * t.transpose();
    std::fill_n(labels.begin() + static_cast<std::ptrdiff_t>(k) * n, n, k);
  }
  return {std::move(inputs), std::move(labels)};
}

inline PretrainResult PretrainEncoderDetailed(const Dataset& d, const TrainConfig& cfg) {
  cfg.Validate();
  d.RequireNonEmpty("PretrainEncoder");
  d.Validate();
  if (cfg.hidden_dims.size() != 1 || cfg.hidden_dims[0] == 0) {
    throw std::invalid_argument("PretrainEncoder: expected exactly one positive hidden width");
  }
  const auto [x, labels] = BuildPretextTask(d, cfg);
  const auto f = static_cast<Eigen::Index>(d.feature_dim);
  const auto h = static_cast<Eigen::Index>(cfg.hidden_dims[0]);
  const auto k = static_cast<Eigen::Index>(cfg.num_transforms);
  const auto n = x.rows();

  UniformSource init(RngStream{DeriveSeed(cfg.seed, "pretrain-init"), 0});
  Matrix w1(h, f), w2(k, h);
  Vector b1 = Vector::Zero(h), b2 = Vector::Zero(k);
  internal::FillUniform({w1.data(), static_cast<std::size_t>(w1.size())}, cfg.init_scale, init);
  internal::FillUniform({w2.data(), static_cast<std::size_t>(w2.size())}, cfg.init_scale, init);

  Matrix onehot = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) = 1.0;

  Matrix z, a, p;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    z = x * w1.transpose();
    z.rowwise() += b1.transpose();
    a = z.cwiseMax(0.0);
    p = a * w2.transpose();
    p.rowwise() += b2.transpose();
    internal::SoftmaxRows(p);
    const Matrix g = (p - onehot) * inv_n;
    const Matrix ga = (g * w2).cwiseProduct((z.array() > 0.0).cast<double>().matrix());
    w2.noalias() -= cfg.learning_rate * (g.transpose() * a);
    b2 -= cfg.learning_rate * g.colwise().sum().transpose();
    w1.noalias() -= cfg.learning_rate * (ga.transpose() * x);
    b1 -= cfg.learning_rate * ga.colwise().sum().transpose();
  }

  PretrainResult out;
  const EncoderShape es{d.feature_dim, cfg.hidden_dims[0]};
  out.theta.shape_tag = es.Tag();
  out.theta.values.assign(w1.data(), w1.data() + w1.size());
  out.theta.values.insert(out.theta.values.end(), b1.data(), b1.data() + b1.size());
  const HeadShape ps{cfg.hidden_dims[0], cfg.num_transforms};
  out.pretext_head.shape_tag = ps.Tag();
  out.pretext_head.values.assign(w2.data(), w2.data() + w2.size());
  out.pretext_head.values.insert(out.pretext_head.values.end(), b2.data(), b2.data() + b2.size());

  // Accuracy of the final weights on the pseudo-label task itself.
  z = x * w1.transpose();
  z.rowwise() += b1.transpose();
  p = z.cwiseMax(0.0) * w2.transpose();
  p.rowwise() += b2.transpose();
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg;
    p.row(i).maxCoeff(&arg);
    if (static_cast<std::size_t>(arg) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  out.pretext_accuracy = static_cast<double>(correct) * inv_n;
  return out;
}

inline WeightVector PretrainEncoder(const Dataset& d, const TrainConfig& cfg) {
  return PretrainEncoderDetailed(d, cfg).theta;
}

// ---------------------------------------------------------------------------
// Projection head.
// ---------------------------------------------------------------------------

// logits = reps W^T + b for a head over the given representations.
inline Matrix HeadLogits(const WeightVector& omega, const Matrix& reps) {
  const HeadShape s = ParseHeadShape(omega);
  if (static_cast<std::size_t>(reps.cols()) != s.input_dim) {
    throw std::invalid_argument("head expects " + std::to_string(s.input_dim) + " inputs, got " +
                                std::to_string(reps.cols()));
  }
  const auto c = static_cast<Eigen::Index>(s.num_classes);
  const auto h = static_cast<Eigen::Index>(s.input_dim);
  internal::ConstMatrixMap w(omega.values.data(), c, h);
  internal::ConstVectorMap b(omega.values.data() + c * h, c);
  Matrix logits = reps * w.transpose();
  logits.rowwise() += b.transpose();
  return logits;
}

inline WeightVector InitialHead(std::size_t input_dim, std::size_t num_classes, const TrainConfig& cfg) {
  const HeadShape s{input_dim, num_classes};
  WeightVector omega{std::vector<double>(s.ParameterCount(), 0.0), s.Tag()};
  UniformSource init(RngStream{DeriveSeed(cfg.seed, "head-init"), 0});
  internal::FillUniform({omega.values.data(), num_classes * input_dim}, cfg.init_scale, init);
  return omega;
}

struct HeadLoss {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as the head weights
};

inline void RequireLabels(std::span<const std::size_t> labels, std::size_t rows, std::size_t num_classes) {
  if (labels.size() != rows) throw std::invalid_argument("label count does not match representation rows");
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw std::invalid_argument("class index " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

// Mean cross-entropy of the head on (reps, labels) and its analytic gradient.
inline HeadLoss HeadLossAndGradient(const WeightVector& omega, const Matrix& reps,
                                    std::span<const std::size_t> labels) {
  const HeadShape s = ParseHeadShape(omega);
  RequireLabels(labels, static_cast<std::size_t>(reps.rows()), s.num_classes);
  if (reps.rows() == 0) throw std::invalid_argument("HeadLossAndGradient: no records");
  Matrix logits = HeadLogits(omega, reps);
  HeadLoss out;
  out.loss = internal::CrossEntropy(logits, labels);
  internal::SoftmaxRows(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    logits(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) -= 1.0;
  }
  logits /= static_cast<double>(reps.rows());
  const auto c = static_cast<Eigen::Index>(s.num_classes);
  const auto h = static_cast<Eigen::Index>(s.input_dim);
  out.gradient.resize(omega.size());
  internal::MatrixMap gw(out.gradient.data(), c, h);
  internal::VectorMap gb(out.gradient.data() + c * h, c);
  gw.noalias() = logits.transpose() * reps;
  gb = logits.colwise().sum().transpose();
  return out;
}

inline double HeadLossValue(const WeightVector& omega, const Matrix& reps, std::span<const std::size_t> labels) {
  const HeadShape s = ParseHeadShape(omega);
  RequireLabels(labels, static_cast<std::size_t>(reps.rows()), s.num_classes);
  return internal::CrossEntropy(HeadLogits(omega, reps), labels);
}

// Full-batch gradient descent at any learning rate below this bound never
// increases the training loss: the softmax cross-entropy Hessian of a
// linear head is bounded by 0.5 * mean ||[r, 1]||^2, and gradient descent is
// monotone for rates under 2 / smoothness.
inline double HeadDescentLearningRateBound(const Matrix& reps) {
  if (reps.rows() == 0) throw std::invalid_argument("HeadDescentLearningRateBound: no records");
  const double mean_sq = reps.rowwise().squaredNorm().mean() + 1.0;
  return 4.0 / mean_sq;
}

// Trains the head on precomputed representations. `loss_trace`, when given,
// receives the loss before each step and after the last one.
inline WeightVector TrainHead(const Matrix& reps, std::span<const std::size_t> labels, std::size_t num_classes,
                              const TrainConfig& cfg, std::vector<double>* loss_trace = nullptr) {
  cfg.Validate();
  if (reps.rows() == 0) throw std::invalid_argument("TrainHead: no records");
  RequireLabels(labels, static_cast<std::size_t>(reps.rows()), num_classes);
  const auto n = reps.rows();
  const auto h = reps.cols();
  const auto c = static_cast<Eigen::Index>(num_classes);
  WeightVector omega = InitialHead(static_cast<std::size_t>(h), num_classes, cfg);
  if (cfg.learning_rate == 0.0 && loss_trace == nullptr) return omega;

  internal::MatrixMap w(omega.values.data(), c, h);
  internal::VectorMap b(omega.values.data() + c * h, c);
  Matrix onehot = Matrix::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) = 1.0;
  const double step = cfg.learning_rate / static_cast<double>(n);
  Matrix p(n, c);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    p.noalias() = reps * w.transpose();
    p.rowwise() += b.transpose();
    if (loss_trace) loss_trace->push_back(internal::CrossEntropy(p, labels));
    internal::SoftmaxRows(p);
    p -= onehot;
    w.noalias() -= step * (p.transpose() * reps);
    b -= step * p.colwise().sum().transpose();
  }
  if (loss_trace) loss_trace->push_back(HeadLossValue(omega, reps, labels));
  return omega;
}

// Fine-tunes a head on top of a frozen encoder.
inline WeightVector FinetuneHead(const WeightVector& theta, const Dataset& d, const TrainConfig& cfg) {
  d.RequireNonEmpty("FinetuneHead");
  d.Validate();
  const Matrix reps = EncodeDataset(theta, d);
  const std::vector<std::size_t> labels = d.Labels();
  return TrainHead(reps, labels, d.num_classes, cfg);
}

// ---------------------------------------------------------------------------
// Prediction.
// ---------------------------------------------------------------------------

inline std::vector<double> Softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("Softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(logits[i] - m));
  for (double& v : p) v /= sum;
  return p;
}

using ProbabilityRows = std::vector<std::vector<double>>;

inline ProbabilityRows ToRows(const Matrix& m) {
  ProbabilityRows rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    rows[static_cast<std::size_t>(i)].assign(m.row(i).begin(), m.row(i).end());
  return rows;
}

inline ProbabilityRows PredictFromRepresentations(const WeightVector& omega, const Matrix& reps) {
  Matrix logits = HeadLogits(omega, reps);
  internal::SoftmaxRows(logits);
  return ToRows(logits);
}

inline ProbabilityRows PredictBatch(const WeightVector& theta, const WeightVector& omega, const Dataset& d) {
  d.Validate();
  return PredictFromRepresentations(omega, EncodeDataset(theta, d));
}

inline std::vector<double> Predict(const WeightVector& theta, const WeightVector& omega, std::span<const double> x) {
  const std::vector<double> r = Encode(theta, x);
  Matrix row(1, static_cast<Eigen::Index>(r.size()));
  for (std::size_t i = 0; i < r.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = r[i];
  return PredictFromRepresentations(omega, row).front();
}

// Index of the largest entry; ties go to the lowest index.
inline std::size_t Argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("Argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline double Accuracy(const ProbabilityRows& predictions, std::span<const std::size_t> labels) {
  if (predictions.empty()) throw std::invalid_argument("Accuracy: no predictions");
  if (predictions.size() != labels.size()) throw std::invalid_argument("Accuracy: length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (Argmax(predictions[i]) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace dpalm

#endif  // DPALM_MODEL_H_
