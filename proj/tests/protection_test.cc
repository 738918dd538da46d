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

#include "dpalm/protection.h"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/mechanisms.h"
#include "dpalm/model.h"
#include "gtest/gtest.h"
#include "test_support.h"

namespace dpalm {
namespace {

using ::dpalm::testing::TempDir;

class ProtectionTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const Dataset all = MakeSyntheticDataset(3, 30, 6, 1.0, 31);
    pretrain_ = all.Slice(0, 60);
    finetune_ = all.Slice(60, 30);
    cfg_.hidden_dims = {8};
    cfg_.epochs = 80;
    cfg_.seed = 4;
    theta_ = PretrainEncoder(pretrain_, cfg_);
    omega_ = FinetuneHead(theta_, finetune_, cfg_);
    for (const Record& r : finetune_.records) queries_.push_back(r.features);
  }

  Dataset pretrain_, finetune_;
  TrainConfig cfg_;
  WeightVector theta_, omega_;
  std::vector<std::vector<double>> queries_;
};

TEST_F(ProtectionTest, EmptyQueries) {
  const auto r = RunQueryHandler(pretrain_, finetune_, cfg_, cfg_, {MechanismKind::kLogistic, 0.1, 0.0}, 5, {});
  EXPECT_TRUE(r.outputs.empty());
  EXPECT_EQ(r.model.theta, theta_);
  EXPECT_EQ(r.model.omega_clean, omega_);
}

TEST_F(ProtectionTest, TinyScaleMatchesUnprotected) {
  const auto r = RunQueryHandler(pretrain_, finetune_, cfg_, cfg_, {MechanismKind::kLogistic, 1e-12, 0.0}, 5, queries_);
  ASSERT_EQ(r.outputs.size(), queries_.size());
  for (std::size_t q = 0; q < queries_.size(); ++q) {
    const auto clean = Predict(theta_, omega_, queries_[q]);
    for (std::size_t k = 0; k < clean.size(); ++k) EXPECT_NEAR(r.outputs[q][k], clean[k], 1e-6);
  }
}

TEST_F(ProtectionTest, HandlerDeterministic) {
  const MechanismSpec spec{MechanismKind::kLaplace, 0.2, 0.0};
  const auto a = RunQueryHandler(pretrain_, finetune_, cfg_, cfg_, spec, 8, queries_);
  const auto b = RunQueryHandler(pretrain_, finetune_, cfg_, cfg_, spec, 8, queries_);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.outputs, b.outputs);
}

TEST_F(ProtectionTest, NoiseSeedsDiffer) {
  const MechanismSpec spec{MechanismKind::kLogistic, 0.05, 0.0};
  const ProtectedModel a = ProtectExisting(theta_, omega_, spec, 1);
  const ProtectedModel b = ProtectExisting(theta_, omega_, spec, 2);
  EXPECT_NE(a.omega_noisy, b.omega_noisy);
  EXPECT_EQ(a.omega_clean, b.omega_clean);
  EXPECT_EQ(a.theta, theta_);
}

TEST_F(ProtectionTest, NoiseIsReproducibleFromSeed) {
  for (MechanismKind kind : kAllMechanisms) {
    const MechanismSpec spec{kind, 0.3, kind == MechanismKind::kGaussian ? 1e-5 : 0.0};
    const ProtectedModel p = ProtectExisting(theta_, omega_, spec, 77);
    const std::vector<double> noise = SampleNoise(spec, NoiseStream(77), omega_.size());
    ASSERT_EQ(p.omega_noisy.shape_tag, p.omega_clean.shape_tag);
    for (std::size_t i = 0; i < noise.size(); ++i) {
      // Exact in the forward direction; the subtraction only to rounding.
      EXPECT_EQ(p.omega_noisy.values[i], p.omega_clean.values[i] + noise[i]);
      EXPECT_NEAR(p.omega_noisy.values[i] - p.omega_clean.values[i], noise[i],
                  1e-15 * (1 + std::abs(omega_.values[i])));
    }
  }
}

TEST_F(ProtectionTest, AllKindsWithBudgetBookkeeping) {
  const double d1 = 0.02, d2 = 0.015;
  for (MechanismKind kind : kAllMechanisms) {
    const Sensitivity sens = RequiredNorm(kind) == SensitivityNorm::kL1 ? Sensitivity{SensitivityNorm::kL1, d1}
                                                                        : Sensitivity{SensitivityNorm::kL2, d2};
    const double delta = kind == MechanismKind::kGaussian ? 1e-5 : 0.0;
    const MechanismSpec spec = ScaleForBudget(kind, {2.0, delta}, sens);
    const ReleasedModel r = ProtectExisting(theta_, omega_, spec, 3).Release(sens);
    ASSERT_TRUE(r.budget.has_value());
    EXPECT_NEAR(r.budget->epsilon, 2.0, 1e-12);
    EXPECT_EQ(r.sensitivity->norm, RequiredNorm(kind));
  }
  // Pairing a Gaussian release with an L1 record is refused.
  const ProtectedModel g = ProtectExisting(theta_, omega_, {MechanismKind::kGaussian, 1.0, 1e-5}, 3);
  EXPECT_THROW(g.Release(Sensitivity{SensitivityNorm::kL1, d1}), std::invalid_argument);
}

TEST_F(ProtectionTest, ReprotectStartsFromClean) {
  const ProtectedModel first = ProtectExisting(theta_, omega_, {MechanismKind::kLogistic, 0.5, 0.0}, 1);
  const ProtectedModel second = Reprotect(first, {MechanismKind::kLaplace, 0.1, 0.0}, 2);
  EXPECT_EQ(second.omega_clean, omega_);
  EXPECT_EQ(second, ProtectExisting(theta_, omega_, {MechanismKind::kLaplace, 0.1, 0.0}, 2));
}

TEST_F(ProtectionTest, QueriesReadOnlyNoisyWeights) {
  ProtectedModel p = ProtectExisting(theta_, omega_, {MechanismKind::kLogistic, 0.1, 0.0}, 6);
  const auto before = AnswerQueries(p.Release(), queries_);
  // Corrupting the clean weights must not change any released answer.
  for (double& v : p.omega_clean.values) v = std::nan("");
  const auto after = AnswerQueries(p.Release(), queries_);
  EXPECT_EQ(before, after);
  for (std::size_t q = 0; q < queries_.size(); ++q) EXPECT_EQ(after[q], Predict(theta_, p.omega_noisy, queries_[q]));
  const auto batch = AnswerDataset(p.Release(), finetune_);
  for (std::size_t q = 0; q < batch.size(); ++q) {
    for (std::size_t k = 0; k < batch[q].size(); ++k) EXPECT_NEAR(batch[q][k], before[q][k], 1e-14);
  }
}

TEST_F(ProtectionTest, ShapeMismatch) {
  const HeadShape wrong{5, 3};
  const WeightVector bad{std::vector<double>(wrong.ParameterCount(), 0.0), wrong.Tag()};
  EXPECT_THROW(ProtectExisting(theta_, bad, {MechanismKind::kLogistic, 1.0, 0.0}, 0), std::invalid_argument);
  EXPECT_THROW(ProtectExisting(theta_, omega_, {MechanismKind::kGaussian, 1.0, 0.0}, 0), std::invalid_argument);
}

TEST_F(ProtectionTest, ExportOmitsCleanWeightsAndSeed) {
  TempDir dir("release");
  const Sensitivity sens{SensitivityNorm::kL2, 0.01};
  const ProtectedModel p = ProtectExisting(theta_, omega_, {MechanismKind::kGaussian, 0.02, 1e-5}, 12345);
  ExportRelease(p.Release(sens), dir.path());

  std::ifstream in(dir / "release.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_FALSE(j.contains("noise_seed"));
  EXPECT_FALSE(j.contains("omega_clean"));
  EXPECT_EQ(j.at("mechanism"), "gaussian");
  EXPECT_TRUE(j.at("outside_classical_gaussian_range").get<bool>());
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    const std::string name = entry.path().filename().string();
    EXPECT_TRUE(name == "theta.bin" || name == "omega.bin" || name == "release.json") << name;
  }

  const ReleasedModel back = LoadRelease(dir.path());
  EXPECT_EQ(back, p.Release(sens));
  EXPECT_NE(back.omega, omega_);
}

}  // namespace
}  // namespace dpalm
