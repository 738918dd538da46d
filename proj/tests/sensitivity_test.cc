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

#include "dpalm/sensitivity.h"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/model.h"
#include "gtest/gtest.h"
#include "test_support.h"

namespace dpalm {
namespace {

using ::dpalm::testing::MeanFeatures;
using ::dpalm::testing::MeanLeaveOneOutDifference;

Dataset KnownRecords() {
  Dataset d{{}, 2, 2};
  d.records = {{{0.0, 0.0}, 0}, {{1.0, 2.0}, 1}, {{-3.0, 0.5}, 0}, {{4.0, -1.0}, 1}};
  return d;
}

TrainConfig HeadConfig() {
  TrainConfig cfg;
  cfg.hidden_dims = {8};
  cfg.epochs = 60;
  cfg.learning_rate = 0.5;
  cfg.seed = 3;
  return cfg;
}

TEST(DrawIndexPairsTest, PrefixProperty) {
  const auto a = DrawIndexPairs(10, 5, 42);
  const auto b = DrawIndexPairs(10, 1, 42);
  EXPECT_EQ(a.front(), b.front());
  for (const IndexPair& p : a) {
    EXPECT_LT(p.i, 10u);
    EXPECT_LT(p.j, 10u);
  }
}

TEST(StubSensitivityTest, MatchesClosedFormOverSampledPairs) {
  const Dataset d = KnownRecords();
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const SensitivityEstimate est = SampleSensitivityWith(d, MeanFeatures, 6, seed);
    ASSERT_EQ(est.pairs.size(), 6u);
    double l1 = 0.0, l2 = 0.0;
    for (std::size_t k = 0; k < est.pairs.size(); ++k) {
      const DifferenceNorms want = MeanLeaveOneOutDifference(d, est.pairs[k].i, est.pairs[k].j);
      EXPECT_NEAR(est.per_pair_norms[k].l1, want.l1, 1e-15);
      EXPECT_NEAR(est.per_pair_norms[k].l2, want.l2, 1e-15);
      l1 = std::max(l1, want.l1);
      l2 = std::max(l2, want.l2);
    }
    EXPECT_NEAR(est.delta_l1, l1, 1e-15);
    EXPECT_NEAR(est.delta_l2, l2, 1e-15);
  }
}

TEST(StubSensitivityTest, BruteForceHandComputed) {
  // Extreme pair is records 2 and 3: |4 - (-3)| + |-1 - 0.5| = 8.5 over 3.
  const SensitivityEstimate est = BruteForceSensitivityWith(KnownRecords(), MeanFeatures);
  EXPECT_EQ(est.m, 16u);
  EXPECT_NEAR(est.delta_l1, 8.5 / 3.0, 1e-15);
  EXPECT_NEAR(est.delta_l2, std::sqrt(49.0 + 2.25) / 3.0, 1e-15);
}

TEST(StubSensitivityTest, TwoRecordsBruteForce) {
  Dataset d{{{{1.0}, 0}, {{3.0}, 0}}, 1, 1};
  const SensitivityEstimate est = BruteForceSensitivityWith(d, MeanFeatures);
  ASSERT_EQ(est.per_pair_norms.size(), 4u);
  int zeros = 0;
  for (const PairNorms& p : est.per_pair_norms) zeros += p.l1 == 0.0 ? 1 : 0;
  EXPECT_EQ(zeros, 2);
  EXPECT_DOUBLE_EQ(est.delta_l1, 2.0);
}

TEST(StubSensitivityTest, IdenticalIndicesGiveZero) {
  const std::vector<IndexPair> pairs{{1, 1}, {0, 0}, {3, 3}};
  const Dataset d = KnownRecords();
  const SensitivityEstimate est =
      SensitivityFromPairs(pairs, [&](std::size_t k) { return MeanFeatures(d.Without(k)); }, 0);
  EXPECT_EQ(est.delta_l1, 0.0);
  EXPECT_EQ(est.delta_l2, 0.0);
}

TEST(StubSensitivityTest, NondecreasingInM) {
  const Dataset d = MakeSyntheticDataset(3, 4, 3, 1.0, 4);
  double prev = 0.0;
  for (std::size_t m : {1u, 2u, 5u, 10u, 40u}) {
    const double v = SampleSensitivityWith(d, MeanFeatures, m, 7).delta_l1;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(StubSensitivityTest, SampledNeverExceedsBruteForce) {
  const Dataset d = MakeSyntheticDataset(2, 4, 3, 1.0, 4);
  const SensitivityEstimate brute = BruteForceSensitivityWith(d, MeanFeatures);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const SensitivityEstimate s = SampleSensitivityWith(d, MeanFeatures, 5, seed);
    EXPECT_LE(s.delta_l1, brute.delta_l1);
    EXPECT_LE(s.delta_l2, brute.delta_l2);
  }
}

TEST(SensitivityTest, Preconditions) {
  const Dataset d = KnownRecords();
  EXPECT_THROW(SampleSensitivityWith(d.Slice(0, 1), MeanFeatures, 3, 0), std::invalid_argument);
  EXPECT_THROW(SampleSensitivityWith(d, MeanFeatures, 0, 0), std::invalid_argument);
  const Dataset big = MakeSyntheticDataset(13, 1, 2, 1.0, 0);
  EXPECT_THROW(BruteForceSensitivityWith(big, MeanFeatures), std::invalid_argument);
}

class RealTrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const Dataset all = MakeSyntheticDataset(3, 20, 6, 1.0, 17);
    theta_ = PretrainEncoder(all.Slice(0, 52), HeadConfig());
    d_ = all.Slice(52, 8);
  }
  WeightVector theta_;
  Dataset d_;
};

TEST_F(RealTrainerTest, SampledBelowBruteForce) {
  const SensitivityEstimate brute = BruteForceSensitivity(theta_, d_, HeadConfig());
  EXPECT_GT(brute.delta_l1, 0.0);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const SensitivityEstimate s = SampleSensitivity(theta_, d_, HeadConfig(), 10, seed);
    EXPECT_LE(s.delta_l1, brute.delta_l1);
    EXPECT_LE(s.delta_l2, brute.delta_l2);
  }
}

TEST_F(RealTrainerTest, MatchesDirectRetraining) {
  // The cached-representation trainer agrees with calling FinetuneHead on
  // each leave-one-out dataset.
  const SensitivityEstimate s = SampleSensitivity(theta_, d_, HeadConfig(), 4, 5);
  for (std::size_t k = 0; k < s.pairs.size(); ++k) {
    const DifferenceNorms want = Difference(FinetuneHead(theta_, d_.Without(s.pairs[k].i), HeadConfig()),
                                            FinetuneHead(theta_, d_.Without(s.pairs[k].j), HeadConfig()));
    EXPECT_NEAR(s.per_pair_norms[k].l1, want.l1, 1e-12);
    EXPECT_NEAR(s.per_pair_norms[k].l2, want.l2, 1e-12);
  }
}

TEST_F(RealTrainerTest, DeterministicAndThreadIndependent) {
  const SensitivityEstimate a = SampleSensitivity(theta_, d_, HeadConfig(), 12, 9, 1);
  EXPECT_EQ(a, SampleSensitivity(theta_, d_, HeadConfig(), 12, 9, 1));
  EXPECT_EQ(a, SampleSensitivity(theta_, d_, HeadConfig(), 12, 9, 4));
}

TEST_F(RealTrainerTest, NormOrdering) {
  const SensitivityEstimate s = SampleSensitivity(theta_, d_, HeadConfig(), 15, 2);
  const double dim = static_cast<double>(HeadShape{8, 3}.ParameterCount());
  EXPECT_LE(s.delta_l2, s.delta_l1);
  EXPECT_LE(s.delta_l1, std::sqrt(dim) * s.delta_l2 + 1e-15);
  double l1 = 0.0;
  for (const PairNorms& p : s.per_pair_norms) l1 = std::max(l1, p.l1);
  EXPECT_EQ(l1, s.delta_l1);
}

TEST(SensitivityJsonTest, RoundTrip) {
  const SensitivityEstimate est = SampleSensitivityWith(KnownRecords(), MeanFeatures, 5, 3);
  const nlohmann::json j = est;
  EXPECT_EQ(j.get<SensitivityEstimate>(), est);
  EXPECT_TRUE(j.contains("per_pair_norms"));
  EXPECT_EQ(j.at("m").get<std::size_t>(), 5u);
}

TEST(SensitivityJsonTest, AcceptsReferenceRecordWithoutPairs) {
  const auto j = nlohmann::json::parse(
      R"({"delta_l1": 0.017492, "delta_l2": 0.013842, "m": 500, "seed": 0, "per_pair_norms": []})");
  const SensitivityEstimate est = j.get<SensitivityEstimate>();
  EXPECT_EQ(est.delta_l1, 0.017492);
  EXPECT_EQ(est.For(MechanismKind::kGaussian).value, 0.013842);
  EXPECT_EQ(est.For(MechanismKind::kLaplace).norm, SensitivityNorm::kL1);
}

}  // namespace
}  // namespace dpalm
