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

#ifndef DPALM_MECHANISMS_H_
#define DPALM_MECHANISMS_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dpalm/distributions.h"
#include "dpalm/rng.h"
#include "dpalm/weights.h"

namespace dpalm {

enum class MechanismKind { kLogistic, kLaplace, kGaussian };

inline constexpr MechanismKind kAllMechanisms[] = {MechanismKind::kLogistic, MechanismKind::kLaplace,
                                                   MechanismKind::kGaussian};

inline std::string_view ToString(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::kLogistic:
      return "logistic";
    case MechanismKind::kLaplace:
      return "laplace";
    case MechanismKind::kGaussian:
      return "gaussian";
  }
  return "unknown";
}

inline MechanismKind ParseMechanismKind(std::string_view name) {
  for (MechanismKind k : kAllMechanisms) {
    if (ToString(k) == name) return k;
  }
  throw std::invalid_argument("unknown mechanism '" + std::string(name) + "'");
}

enum class SensitivityNorm { kL1, kL2 };

inline std::string_view ToString(SensitivityNorm norm) { return norm == SensitivityNorm::kL1 ? "L1" : "L2"; }

inline SensitivityNorm ParseSensitivityNorm(std::string_view name) {
  if (name == "L1" || name == "l1") return SensitivityNorm::kL1;
  if (name == "L2" || name == "l2") return SensitivityNorm::kL2;
  throw std::invalid_argument("unknown sensitivity norm '" + std::string(name) + "'");
}

// Logistic and Laplace are calibrated against the 1-norm sensitivity, the
// Gaussian mechanism against the 2-norm sensitivity.
constexpr SensitivityNorm RequiredNorm(MechanismKind kind) {
  return kind == MechanismKind::kGaussian ? SensitivityNorm::kL2 : SensitivityNorm::kL1;
}

struct Sensitivity {
  SensitivityNorm norm = SensitivityNorm::kL1;
  double value = 0.0;

  void Validate() const {
    if (!(value >= 0.0) || !std::isfinite(value)) {
      throw std::invalid_argument("sensitivity must be finite and nonnegative");
    }
  }

  friend bool operator==(const Sensitivity&, const Sensitivity&) = default;
};

struct PrivacyBudget {
  double epsilon = 1.0;
  double delta = 0.0;

  void Validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be positive");
    if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in [0, 1)");
  }

  friend bool operator==(const PrivacyBudget&, const PrivacyBudget&) = default;
};

inline constexpr double kDefaultGaussianDelta = 1e-5;

// Which additive mechanism, its scale (s, b or sigma) and delta.
struct MechanismSpec {
  MechanismKind kind = MechanismKind::kLogistic;
  double scale = 1.0;
  double delta = 0.0;

  void Validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("mechanism scale must be positive");
    if (kind == MechanismKind::kGaussian) {
      if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("gaussian mechanism needs 0 < delta < 1");
    } else if (delta != 0.0) {
      throw std::invalid_argument(std::string(ToString(kind)) + " mechanism requires delta = 0");
    }
  }

  friend bool operator==(const MechanismSpec&, const MechanismSpec&) = default;
};

// sqrt(2 ln(1.25 / delta)), the Gaussian calibration constant.
inline double GaussianCalibration(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("gaussian mechanism needs 0 < delta < 1");
  return std::sqrt(2.0 * std::log(1.25 / delta));
}

namespace internal {

inline void CheckPairing(MechanismKind kind, const Sensitivity& sens, double delta) {
  sens.Validate();
  if (sens.norm != RequiredNorm(kind)) {
    throw std::invalid_argument(std::string(ToString(kind)) + " mechanism requires " +
                                std::string(ToString(RequiredNorm(kind))) + " sensitivity, got " +
                                std::string(ToString(sens.norm)));
  }
  if (kind == MechanismKind::kGaussian) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("gaussian mechanism needs 0 < delta < 1");
  } else if (delta != 0.0) {
    throw std::invalid_argument(std::string(ToString(kind)) + " mechanism requires delta = 0");
  }
}

// The numerator shared by both directions of the conversion, so that
// scale = k / eps and eps = k / scale round through the same constant.
inline double CalibrationNumerator(MechanismKind kind, double sensitivity, double delta) {
  return kind == MechanismKind::kGaussian ? sensitivity * GaussianCalibration(delta) : sensitivity;
}

}  // namespace internal

// s = D1/eps (logistic), b = D1/eps (Laplace),
// sigma = D2 sqrt(2 ln(1.25/delta)) / eps (Gaussian).
inline MechanismSpec ScaleForBudget(MechanismKind kind, const PrivacyBudget& budget, const Sensitivity& sens) {
  budget.Validate();
  internal::CheckPairing(kind, sens, budget.delta);
  const double k = internal::CalibrationNumerator(kind, sens.value, budget.delta);
  MechanismSpec spec{kind, k / budget.epsilon, budget.delta};
  spec.Validate();
  return spec;
}

inline PrivacyBudget BudgetForScale(const MechanismSpec& spec, const Sensitivity& sens) {
  spec.Validate();
  internal::CheckPairing(spec.kind, sens, spec.delta);
  const double k = internal::CalibrationNumerator(spec.kind, sens.value, spec.delta);
  PrivacyBudget budget{k / spec.scale, spec.delta};
  if (!(budget.epsilon > 0.0)) throw std::invalid_argument("zero sensitivity yields no finite-scale budget");
  return budget;
}

// The classical Gaussian analysis only covers epsilon < 1. Budgets outside it
// are still computed with the same formula but should be flagged in reports.
inline bool OutsideClassicalGaussianRange(MechanismKind kind, const PrivacyBudget& budget) {
  return kind == MechanismKind::kGaussian && budget.epsilon >= 1.0;
}

inline std::vector<double> SampleNoise(const MechanismSpec& spec, const RngStream& rng, std::size_t n) {
  spec.Validate();
  switch (spec.kind) {
    case MechanismKind::kLogistic:
      return SampleLogistic(rng, {0.0, spec.scale}, n);
    case MechanismKind::kLaplace:
      return SampleLaplace(rng, {0.0, spec.scale}, n);
    case MechanismKind::kGaussian:
      return SampleGaussian(rng, {0.0, spec.scale}, n);
  }
  throw std::logic_error("unreachable");
}

// Log-density of the location-zero noise distribution.
inline double NoiseLogPdf(const MechanismSpec& spec, double x) {
  switch (spec.kind) {
    case MechanismKind::kLogistic:
      return LogisticLogPdf(x, {0.0, spec.scale});
    case MechanismKind::kLaplace:
      return LaplaceLogPdf(x, {0.0, spec.scale});
    case MechanismKind::kGaussian:
      return GaussianLogPdf(x, {0.0, spec.scale});
  }
  throw std::logic_error("unreachable");
}

// Adds independent location-zero noise to every coordinate, biases included.
inline WeightVector Perturb(const WeightVector& w, const MechanismSpec& spec, const RngStream& rng) {
  for (double v : w.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("Perturb: weights must be finite");
  }
  const std::vector<double> noise = SampleNoise(spec, rng, w.size());
  WeightVector out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += noise[i];
  return out;
}

// max over z of log p(z - gamma) - log p(z): the privacy loss at output z
// between two inputs whose query answers differ by gamma. For the logistic
// and Laplace mechanisms this never exceeds |gamma| / scale.
inline double LogRatioBoundCheck(const MechanismSpec& spec, double gamma, std::span<const double> z_grid) {
  spec.Validate();
  if (z_grid.empty()) throw std::invalid_argument("LogRatioBoundCheck: empty grid");
  if (!std::isfinite(gamma)) throw std::invalid_argument("LogRatioBoundCheck: gamma must be finite");
  double best = -std::numeric_limits<double>::infinity();
  for (double z : z_grid) best = std::max(best, NoiseLogPdf(spec, z - gamma) - NoiseLogPdf(spec, z));
  return best;
}

// Vector version: log-ratios of independent coordinates add. Draws
// `num_samples` output vectors z with each coordinate uniform on a window
// of +-40 scales around both candidate locations (0 and gamma_i), and
// returns the largest summed log-ratio seen. An all-zero gamma returns 0.
inline double MultivariateLogRatioCheck(const MechanismSpec& spec, std::span<const double> gamma,
                                        std::size_t num_samples, const RngStream& rng) {
  spec.Validate();
  for (double g : gamma) {
    if (!std::isfinite(g)) throw std::invalid_argument("MultivariateLogRatioCheck: gamma must be finite");
  }
  if (gamma.empty() || num_samples == 0) return 0.0;
  UniformSource src(rng);
  const double half_width = 40.0 * spec.scale;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < num_samples; ++k) {
    double total = 0.0;
    for (double g : gamma) {
      const double z = src.NextUniform(std::min(0.0, g) - half_width, std::max(0.0, g) + half_width);
      total += NoiseLogPdf(spec, z - g) - NoiseLogPdf(spec, z);
    }
    best = std::max(best, total);
  }
  return best;
}

// n evenly spaced points on [lo, hi], endpoints included.
inline std::vector<double> LinearGrid(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("LinearGrid: need n >= 2 and hi > lo");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

}  // namespace dpalm

#endif  // DPALM_MECHANISMS_H_
