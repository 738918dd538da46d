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

#ifndef DPALM_DISTRIBUTIONS_H_
#define DPALM_DISTRIBUTIONS_H_

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpalm/rng.h"

namespace dpalm {

namespace internal {

inline void RequireFinite(double x, const char* what) {
  if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": argument must be finite");
}

inline void RequirePositive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::invalid_argument(std::string(what) + ": scale must be positive and finite");
  }
}

}  // namespace internal

struct LogisticParams {
  double mu = 0.0;
  double s = 1.0;

  void Validate() const {
    internal::RequireFinite(mu, "LogisticParams.mu");
    internal::RequirePositive(s, "LogisticParams.s");
  }
};

struct LaplaceParams {
  double mu = 0.0;
  double b = 1.0;

  void Validate() const {
    internal::RequireFinite(mu, "LaplaceParams.mu");
    internal::RequirePositive(b, "LaplaceParams.b");
  }
};

struct GaussianParams {
  double mu = 0.0;
  double sigma = 1.0;

  void Validate() const {
    internal::RequireFinite(mu, "GaussianParams.mu");
    internal::RequirePositive(sigma, "GaussianParams.sigma");
  }
};

// ---------------------------------------------------------------------------
// Logistic distribution.
//
// The density exp(-t)/(s (1 + exp(-t))^2), t = (x - mu)/s, is symmetric in t,
// so it is evaluated at -|t| where exp never overflows.
// ---------------------------------------------------------------------------

inline double LogisticLogPdf(double x, const LogisticParams& p) {
  p.Validate();
  internal::RequireFinite(x, "LogisticLogPdf");
  const double a = -std::abs((x - p.mu) / p.s);
  return a - std::log(p.s) - 2.0 * std::log1p(std::exp(a));
}

inline double LogisticPdf(double x, const LogisticParams& p) {
  p.Validate();
  internal::RequireFinite(x, "LogisticPdf");
  const double e = std::exp(-std::abs((x - p.mu) / p.s));
  const double denom = 1.0 + e;
  return e / (p.s * denom * denom);
}

inline double LogisticCdf(double x, const LogisticParams& p) {
  p.Validate();
  internal::RequireFinite(x, "LogisticCdf");
  const double t = (x - p.mu) / p.s;
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double LogisticQuantile(double u, const LogisticParams& p) {
  p.Validate();
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("LogisticQuantile: u must lie in (0, 1)");
  return p.mu + p.s * std::log(u / (1.0 - u));
}

inline std::vector<double> SampleLogistic(const RngStream& rng, const LogisticParams& p, std::size_t n) {
  p.Validate();
  std::vector<double> out(n);
  UniformSource src(rng);
  for (double& v : out) {
    const double u = src.NextOpen01();
    v = p.mu + p.s * std::log(u / (1.0 - u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Laplace distribution.
// ---------------------------------------------------------------------------

inline double LaplaceLogPdf(double x, const LaplaceParams& p) {
  p.Validate();
  internal::RequireFinite(x, "LaplaceLogPdf");
  return -std::abs(x - p.mu) / p.b - std::log(2.0 * p.b);
}

inline double LaplacePdf(double x, const LaplaceParams& p) { return std::exp(LaplaceLogPdf(x, p)); }

inline double LaplaceCdf(double x, const LaplaceParams& p) {
  p.Validate();
  if (std::isnan(x)) throw std::invalid_argument("LaplaceCdf: argument is NaN");
  const double t = (x - p.mu) / p.b;
  return t < 0.0 ? 0.5 * std::exp(t) : 1.0 - 0.5 * std::exp(-t);
}

inline std::vector<double> SampleLaplace(const RngStream& rng, const LaplaceParams& p, std::size_t n) {
  p.Validate();
  std::vector<double> out(n);
  UniformSource src(rng);
  for (double& v : out) {
    const double d = src.NextOpen01() - 0.5;
    const double sgn = d < 0.0 ? -1.0 : 1.0;
    v = p.mu - p.b * sgn * std::log1p(-2.0 * std::abs(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian distribution.
// ---------------------------------------------------------------------------

inline double GaussianLogPdf(double x, const GaussianParams& p) {
  p.Validate();
  internal::RequireFinite(x, "GaussianLogPdf");
  const double z = (x - p.mu) / p.sigma;
  return -0.5 * z * z - std::log(p.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double GaussianPdf(double x, const GaussianParams& p) { return std::exp(GaussianLogPdf(x, p)); }

inline double GaussianCdf(double x, const GaussianParams& p) {
  p.Validate();
  if (std::isnan(x)) throw std::invalid_argument("GaussianCdf: argument is NaN");
  return 0.5 * std::erfc(-(x - p.mu) / (p.sigma * std::numbers::sqrt2));
}

inline std::vector<double> SampleGaussian(const RngStream& rng, const GaussianParams& p, std::size_t n) {
  p.Validate();
  std::vector<double> out(n);
  UniformSource src(rng);
  for (double& v : out) v = p.mu + p.sigma * src.NextStandardNormal();
  return out;
}

}  // namespace dpalm

#endif  // DPALM_DISTRIBUTIONS_H_
