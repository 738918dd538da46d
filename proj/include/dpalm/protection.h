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

#ifndef DPALM_PROTECTION_H_
#define DPALM_PROTECTION_H_

// Post-training protection: train the encoder, train the head, add noise
// to the head weights once, and answer queries from the noisy head only.
// Changing the noise level re-protects the clean head; nothing is retrained.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/io.h"
#include "dpalm/mechanisms.h"
#include "dpalm/model.h"
#include "dpalm/rng.h"
#include "dpalm/weights.h"

namespace dpalm {

// What leaves the trust boundary: the encoder, the noisy head, and the
// mechanism. No clean weights, no noise seed.
struct ReleasedModel {
  WeightVector theta;
  WeightVector omega;
  MechanismSpec spec;
  std::optional<PrivacyBudget> budget;
  std::optional<Sensitivity> sensitivity;

  friend bool operator==(const ReleasedModel&, const ReleasedModel&) = default;
};

struct ProtectedModel {
  WeightVector theta;
  WeightVector omega_clean;  // kept for utility evaluation only
  WeightVector omega_noisy;
  MechanismSpec spec;
  uint64_t noise_seed = 0;

  ReleasedModel Release(std::optional<Sensitivity> sensitivity = std::nullopt) const {
    ReleasedModel r{theta, omega_noisy, spec, std::nullopt, sensitivity};
    if (sensitivity) r.budget = BudgetForScale(spec, *sensitivity);
    return r;
  }

  friend bool operator==(const ProtectedModel&, const ProtectedModel&) = default;
};

// The noise stream for a protection seed.
inline RngStream NoiseStream(uint64_t noise_seed) { return RngStream{noise_seed, 0}; }

inline void RequireCompatible(const WeightVector& theta, const WeightVector& omega) {
  const EncoderShape e = ParseEncoderShape(theta);
  const HeadShape h = ParseHeadShape(omega);
  if (e.hidden_dim != h.input_dim) {
    throw std::invalid_argument("head '" + omega.shape_tag + "' does not fit encoder '" + theta.shape_tag + "'");
  }
}

inline ProtectedModel ProtectExisting(const WeightVector& theta, const WeightVector& omega, const MechanismSpec& spec,
                                      uint64_t noise_seed) {
  RequireCompatible(theta, omega);
  spec.Validate();
  return ProtectedModel{theta, omega, Perturb(omega, spec, NoiseStream(noise_seed)), spec, noise_seed};
}

// Re-protection at another mechanism or scale always starts from the clean
// head, so a model never carries more than one perturbation.
inline ProtectedModel Reprotect(const ProtectedModel& model, const MechanismSpec& spec, uint64_t noise_seed) {
  return ProtectExisting(model.theta, model.omega_clean, spec, noise_seed);
}

inline ProbabilityRows AnswerQueries(const ReleasedModel& model, std::span<const std::vector<double>> queries) {
  ProbabilityRows out;
  out.reserve(queries.size());
  for (const auto& x : queries) out.push_back(Predict(model.theta, model.omega, x));
  return out;
}

inline ProbabilityRows AnswerDataset(const ReleasedModel& model, const Dataset& d) {
  return PredictBatch(model.theta, model.omega, d);
}

struct QueryHandlerResult {
  ProtectedModel model;
  ProbabilityRows outputs;
};

// Pretrain, fine-tune, perturb, answer, in that order.
inline QueryHandlerResult RunQueryHandler(const Dataset& pretrain_set, const Dataset& finetune_set,
                                          const TrainConfig& pretrain_cfg, const TrainConfig& finetune_cfg,
                                          const MechanismSpec& spec, uint64_t noise_seed,
                                          std::span<const std::vector<double>> queries) {
  spec.Validate();
  const WeightVector theta = PretrainEncoder(pretrain_set, pretrain_cfg);
  const WeightVector omega = FinetuneHead(theta, finetune_set, finetune_cfg);
  QueryHandlerResult result{ProtectExisting(theta, omega, spec, noise_seed), {}};
  result.outputs = AnswerQueries(result.model.Release(), queries);
  return result;
}

// ---------------------------------------------------------------------------
// Release export: <dir>/theta.bin, <dir>/omega.bin and <dir>/release.json.
// ---------------------------------------------------------------------------

inline nlohmann::json ReleaseSidecar(const ReleasedModel& r) {
  nlohmann::json j{
      {"mechanism", ToString(r.spec.kind)}, {"scale", r.spec.scale},     {"delta", r.spec.delta},
      {"theta_file", "theta.bin"},          {"omega_file", "omega.bin"}, {"theta_shape", r.theta.shape_tag},
      {"omega_shape", r.omega.shape_tag}};
  if (r.budget) {
    j["epsilon"] = r.budget->epsilon;
    // The classical Gaussian analysis does not cover epsilon >= 1.
    if (OutsideClassicalGaussianRange(r.spec.kind, *r.budget)) j["outside_classical_gaussian_range"] = true;
  }
  if (r.sensitivity) {
    j["sensitivity_norm"] = ToString(r.sensitivity->norm);
    j["sensitivity"] = r.sensitivity->value;
  }
  return j;
}

inline void ExportRelease(const ReleasedModel& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SaveWeights(r.theta, dir / "theta.bin");
  SaveWeights(r.omega, dir / "omega.bin");
  std::ofstream out(dir / "release.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + (dir / "release.json").string() + "'");
  out << ReleaseSidecar(r).dump(2) << '\n';
  if (!out) throw std::runtime_error("error writing release sidecar");
}

inline ReleasedModel LoadRelease(const std::filesystem::path& dir) {
  std::ifstream in(dir / "release.json");
  if (!in) throw std::runtime_error("cannot read '" + (dir / "release.json").string() + "'");
  const nlohmann::json j = nlohmann::json::parse(in);
  ReleasedModel r;
  r.spec = MechanismSpec{ParseMechanismKind(j.at("mechanism").get<std::string>()), j.at("scale").get<double>(),
                         j.at("delta").get<double>()};
  r.spec.Validate();
  r.theta = LoadWeights(dir / j.at("theta_file").get<std::string>());
  r.omega = LoadWeights(dir / j.at("omega_file").get<std::string>());
  RequireCompatible(r.theta, r.omega);
  if (j.contains("sensitivity")) {
    r.sensitivity = Sensitivity{ParseSensitivityNorm(j.at("sensitivity_norm").get<std::string>()),
                                j.at("sensitivity").get<double>()};
    r.budget = BudgetForScale(r.spec, *r.sensitivity);
  }
  return r;
}

}  // namespace dpalm

#endif  // DPALM_PROTECTION_H_
