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

#include "dpalm/mechanisms.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dpalm/rng.h"
#include "dpalm/stats.h"
#include "dpalm/weights.h"
#include "gtest/gtest.h"

namespace dpalm {
namespace {

const Sensitivity kL1One{SensitivityNorm::kL1, 1.0};
const Sensitivity kL2One{SensitivityNorm::kL2, 1.0};

// Distance in units in the last place.
double UlpDistance(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / (std::nextafter(std::max(a, b), INFINITY) - std::max(a, b));
}

TEST(NamesTest, RoundTrip) {
  for (MechanismKind k : kAllMechanisms) EXPECT_EQ(ParseMechanismKind(ToString(k)), k);
  EXPECT_THROW(ParseMechanismKind("cauchy"), std::invalid_argument);
  EXPECT_EQ(ParseSensitivityNorm("L2"), SensitivityNorm::kL2);
}

TEST(ScaleForBudgetTest, LogisticReferenceGrid) {
  // Empirical L1 sensitivity 0.017492 and the largest plotted budget 3.4984
  // correspond to s = 0.005.
  const MechanismSpec spec = ScaleForBudget(MechanismKind::kLogistic, {3.4984, 0.0}, {SensitivityNorm::kL1, 0.017492});
  EXPECT_NEAR(spec.scale, 0.005, 1e-15);
  EXPECT_EQ(spec.delta, 0.0);
}

TEST(ScaleForBudgetTest, Laplace) {
  EXPECT_DOUBLE_EQ(ScaleForBudget(MechanismKind::kLaplace, {2.0, 0.0}, {SensitivityNorm::kL1, 2.0}).scale, 1.0);
}

TEST(ScaleForBudgetTest, Gaussian) {
  const double expected = std::sqrt(2.0 * std::log(1.25 / 1e-5));
  const MechanismSpec spec = ScaleForBudget(MechanismKind::kGaussian, {1.0, 1e-5}, kL2One);
  EXPECT_NEAR(spec.scale, expected, 1e-12);
  EXPECT_NEAR(spec.scale, 4.84480, 1e-5);
}

TEST(ScaleForBudgetTest, PairingErrors) {
  EXPECT_THROW(ScaleForBudget(MechanismKind::kLogistic, {1.0, 0.0}, kL2One), std::invalid_argument);
  EXPECT_THROW(ScaleForBudget(MechanismKind::kGaussian, {1.0, 1e-5}, kL1One), std::invalid_argument);
  EXPECT_THROW(ScaleForBudget(MechanismKind::kLaplace, {1.0, 1e-5}, kL1One), std::invalid_argument);
  EXPECT_THROW(ScaleForBudget(MechanismKind::kGaussian, {1.0, 0.0}, kL2One), std::invalid_argument);
  EXPECT_THROW(ScaleForBudget(MechanismKind::kLogistic, {0.0, 0.0}, kL1One), std::invalid_argument);
  EXPECT_THROW(ScaleForBudget(MechanismKind::kLogistic, {-1.0, 0.0}, kL1One), std::invalid_argument);
}

TEST(BudgetForScaleTest, Examples) {
  EXPECT_NEAR(BudgetForScale({MechanismKind::kLogistic, 0.005, 0.0}, {SensitivityNorm::kL1, 0.020738}).epsilon, 4.1476,
              1e-12);
  EXPECT_DOUBLE_EQ(BudgetForScale({MechanismKind::kLogistic, 0.3, 0.0}, {SensitivityNorm::kL1, 0.3}).epsilon, 1.0);
  EXPECT_NEAR(BudgetForScale({MechanismKind::kGaussian, 4.84480, 1e-5}, kL2One).epsilon, 1.0, 1e-5);
}

TEST(BudgetForScaleTest, RoundTripWithinOneUlp) {
  UniformSource src(RngStream{77, 0});
  for (int i = 0; i < 1000; ++i) {
    const MechanismKind kind = kAllMechanisms[src.NextIndex(3)];
    const double eps = std::exp(src.NextUniform(std::log(1e-3), std::log(100.0)));
    const double delta =
        kind == MechanismKind::kGaussian ? std::exp(src.NextUniform(std::log(1e-10), std::log(0.5))) : 0.0;
    const Sensitivity sens{RequiredNorm(kind), std::exp(src.NextUniform(std::log(1e-4), std::log(10.0)))};
    const MechanismSpec spec = ScaleForBudget(kind, {eps, delta}, sens);
    const PrivacyBudget back = BudgetForScale(spec, sens);
    ASSERT_LE(UlpDistance(back.epsilon, eps), 1.0) << ToString(kind) << " eps=" << eps;
    ASSERT_EQ(back.delta, delta);
  }
}

TEST(BudgetForScaleTest, LargerBudgetSmallerScale) {
  for (MechanismKind kind : kAllMechanisms) {
    const double delta = kind == MechanismKind::kGaussian ? 1e-5 : 0.0;
    const Sensitivity sens{RequiredNorm(kind), 0.5};
    double prev = std::numeric_limits<double>::infinity();
    for (double eps = 0.01; eps < 50; eps *= 1.7) {
      const double s = ScaleForBudget(kind, {eps, delta}, sens).scale;
      ASSERT_LT(s, prev);
      prev = s;
    }
  }
}

TEST(BudgetForScaleTest, ClassicalGaussianRangeFlag) {
  EXPECT_TRUE(OutsideClassicalGaussianRange(MechanismKind::kGaussian, {1.0, 1e-5}));
  EXPECT_FALSE(OutsideClassicalGaussianRange(MechanismKind::kGaussian, {0.5, 1e-5}));
  EXPECT_FALSE(OutsideClassicalGaussianRange(MechanismKind::kLogistic, {5.0, 0.0}));
}

TEST(MechanismSpecTest, Validation) {
  EXPECT_NO_THROW((MechanismSpec{MechanismKind::kLogistic, 1.0, 0.0}.Validate()));
  EXPECT_THROW((MechanismSpec{MechanismKind::kLogistic, 0.0, 0.0}.Validate()), std::invalid_argument);
  EXPECT_THROW((MechanismSpec{MechanismKind::kLaplace, 1.0, 0.1}.Validate()), std::invalid_argument);
  EXPECT_THROW((MechanismSpec{MechanismKind::kGaussian, 1.0, 0.0}.Validate()), std::invalid_argument);
  EXPECT_THROW((MechanismSpec{MechanismKind::kGaussian, 1.0, 1.0}.Validate()), std::invalid_argument);
}

TEST(PerturbTest, EmptyAndDeterministic) {
  const MechanismSpec spec{MechanismKind::kLogistic, 0.1, 0.0};
  EXPECT_TRUE(Perturb(WeightVector{{}, "t"}, spec, RngStream{1, 0}).values.empty());
  const WeightVector w{{1.0, 2.0, 3.0}, "t"};
  const WeightVector a = Perturb(w, spec, RngStream{5, 0});
  EXPECT_EQ(a, Perturb(w, spec, RngStream{5, 0}));
  EXPECT_EQ(a.shape_tag, "t");
  EXPECT_EQ(a.size(), 3u);
  EXPECT_NE(a, w);
  EXPECT_EQ(w.values, (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(PerturbTest, TinyScaleIsNearIdentity) {
  // P(|X| > 1e-9) = 2 / (1 + exp(1e3)) for s = 1e-12: effectively zero.
  const WeightVector w{{1.0, 2.0, 3.0}, "t"};
  const WeightVector out = Perturb(w, {MechanismKind::kLogistic, 1e-12, 0.0}, RngStream{9, 0});
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(out.values[i], w.values[i], 1e-9);
}

TEST(PerturbTest, AddsExactlyTheSampledNoise) {
  const WeightVector w{{0.5, -1.0, 2.5, 0.0}, "t"};
  for (MechanismKind kind : kAllMechanisms) {
    const MechanismSpec spec{kind, 0.7, kind == MechanismKind::kGaussian ? 1e-5 : 0.0};
    const WeightVector out = Perturb(w, spec, RngStream{3, 4});
    const std::vector<double> noise = SampleNoise(spec, RngStream{3, 4}, w.size());
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(out.values[i], w.values[i] + noise[i]);
  }
}

TEST(PerturbTest, NoiseIsCentered) {
  // Per coordinate, 10,000 independent draws average within 5 standard
  // errors of zero.
  const WeightVector w{{1.0, -2.0, 0.25}, "t"};
  for (MechanismKind kind : kAllMechanisms) {
    const MechanismSpec spec{kind, 0.5, kind == MechanismKind::kGaussian ? 1e-5 : 0.0};
    const double sd = kind == MechanismKind::kLogistic  ? 0.5 * std::numbers::pi / std::sqrt(3.0)
                      : kind == MechanismKind::kLaplace ? 0.5 * std::sqrt(2.0)
                                                        : 0.5;
    std::vector<std::vector<double>> diffs(w.size());
    for (uint64_t r = 0; r < 10000; ++r) {
      const WeightVector out = Perturb(w, spec, RngStream{r, 0});
      for (std::size_t i = 0; i < w.size(); ++i) diffs[i].push_back(out.values[i] - w.values[i]);
    }
    for (const auto& d : diffs) EXPECT_LT(std::abs(Mean(d)), 5.0 * sd / 100.0) << ToString(kind);
  }
}

TEST(PerturbTest, RejectsNonFiniteWeights) {
  EXPECT_THROW(Perturb(WeightVector{{1.0, NAN}, "t"}, {MechanismKind::kLaplace, 1.0, 0.0}, RngStream{}),
               std::invalid_argument);
}

TEST(LogRatioTest, ZeroShiftIsZero) {
  const auto grid = LinearGrid(-10, 10, 101);
  for (MechanismKind kind : kAllMechanisms) {
    const MechanismSpec spec{kind, 1.0, kind == MechanismKind::kGaussian ? 1e-5 : 0.0};
    EXPECT_EQ(LogRatioBoundCheck(spec, 0.0, grid), 0.0);
  }
}

TEST(LogRatioTest, UnitShiftStaysWithinBound) {
  const auto grid = LinearGrid(-50, 50, 10001);
  const double logistic = LogRatioBoundCheck({MechanismKind::kLogistic, 1.0, 0.0}, 1.0, grid);
  const double laplace = LogRatioBoundCheck({MechanismKind::kLaplace, 1.0, 0.0}, 1.0, grid);
  EXPECT_LE(logistic, 1.0 + 1e-12);
  EXPECT_LE(laplace, 1.0 + 1e-12);
  // Both bounds are approached in the tails.
  EXPECT_GT(logistic, 0.999);
  EXPECT_NEAR(laplace, 1.0, 1e-12);
}

TEST(LogRatioTest, GaussianIsUnbounded) {
  // No pure-epsilon bound: the ratio grows linearly in z.
  const double wide = LogRatioBoundCheck({MechanismKind::kGaussian, 1.0, 1e-5}, 1.0, LinearGrid(-50, 50, 1001));
  EXPECT_NEAR(wide, 49.5, 1e-9);
}

TEST(LogRatioTest, EmptyGridThrows) {
  EXPECT_THROW(LogRatioBoundCheck({MechanismKind::kLogistic, 1.0, 0.0}, 1.0, std::vector<double>{}),
               std::invalid_argument);
}

TEST(MultivariateLogRatioTest, ZeroVector) {
  const std::vector<double> zeros(5, 0.0);
  EXPECT_EQ(MultivariateLogRatioCheck({MechanismKind::kLogistic, 1.0, 0.0}, zeros, 1000, RngStream{1, 0}), 0.0);
}

TEST(MultivariateLogRatioTest, BoundedByL1Norm) {
  const std::vector<double> gamma{0.3, 0.4, 0.3};
  const double v = MultivariateLogRatioCheck({MechanismKind::kLogistic, 1.0, 0.0}, gamma, 100000, RngStream{2, 0});
  EXPECT_LE(v, 1.0 + 1e-12);
  EXPECT_GT(v, 0.5);
}

TEST(MultivariateLogRatioTest, SingleCoordinateMatchesScalarCheck) {
  // With one coordinate, the sampled maximum is a scalar check over the
  // sampled z values.
  const MechanismSpec spec{MechanismKind::kLogistic, 0.5, 0.0};
  const std::vector<double> gamma{0.7};
  const double v = MultivariateLogRatioCheck(spec, gamma, 500, RngStream{4, 0});
  UniformSource src(RngStream{4, 0});
  std::vector<double> zs;
  for (int i = 0; i < 500; ++i) zs.push_back(src.NextUniform(-20.0, 0.7 + 20.0));
  EXPECT_EQ(v, LogRatioBoundCheck(spec, 0.7, zs));
}

}  // namespace
}  // namespace dpalm
