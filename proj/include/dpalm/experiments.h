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

#ifndef DPALM_EXPERIMENTS_H_
#define DPALM_EXPERIMENTS_H_

// Privacy/utility sweeps: train once, perturb the head at every point of an
// epsilon grid for each mechanism, and measure utility loss and membership
// inference accuracy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpalm/dataset.h"
#include "dpalm/io.h"
#include "dpalm/mechanisms.h"
#include "dpalm/mia.h"
#include "dpalm/model.h"
#include "dpalm/parallel.h"
#include "dpalm/protection.h"
#include "dpalm/rng.h"
#include "dpalm/sensitivity.h"

namespace dpalm {

// 1 - protected / unprotected. Negative when the noise happens to help.
inline double UtilityLoss(double protected_metric, double unprotected_metric) {
  if (!(unprotected_metric > 0.0)) throw std::invalid_argument("UtilityLoss: unprotected metric must be positive");
  return 1.0 - protected_metric / unprotected_metric;
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct DatasetSpec {
  enum class Kind { kSynthetic, kCsv };
  Kind kind = Kind::kSynthetic;
  // Synthetic generator.
  std::size_t num_classes = 10;
  std::size_t feature_dim = 32;
  double spread = 2.0;
  // CSV source; num_classes = 0 infers the class count.
  std::string path;
  // Split sizes, taken in this order from a seeded shuffle.
  std::size_t pretrain = 2000;
  std::size_t finetune = 500;
  std::size_t holdout = 500;
  std::size_t shadow_in = 1000;
  std::size_t shadow_out = 1000;

  std::size_t Total() const { return pretrain + finetune + holdout + shadow_in + shadow_out; }

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct GridSpec {
  enum class Kind { kEpsilon, kScale, kHalving };
  Kind kind = Kind::kHalving;
  std::vector<double> values;  // epsilons or scales
  // Halving grid: epsilon_k = delta_l1 / (anchor_scale * 2^k).
  double anchor_scale = 0.005;
  std::size_t points = 7;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct SensitivitySource {
  enum class Kind { kSampled, kFixed };
  Kind kind = Kind::kSampled;
  std::size_t m = 50;
  std::optional<uint64_t> seed;  // derived from the master seed if absent
  double l1 = 0.0;
  double l2 = 0.0;

  friend bool operator==(const SensitivitySource&, const SensitivitySource&) = default;
};

struct SweepConfig {
  DatasetSpec dataset;
  TrainConfig pretrain{{64}, 200, 0.5, 0, 0.1, 4};
  TrainConfig finetune{{64}, 1000, 1.0, 0, 0.01, 4};
  AttackClassifierConfig attack;
  std::vector<MechanismKind> mechanisms{std::begin(kAllMechanisms), std::end(kAllMechanisms)};
  GridSpec grid;
  SensitivitySource sensitivity;
  double delta = kDefaultGaussianDelta;
  std::size_t repeats_per_point = 5;
  uint64_t master_seed = 0;
  unsigned threads = 1;  // does not affect results

  void Validate() const {
    if (mechanisms.empty()) throw std::invalid_argument("sweep: mechanisms must be nonempty");
    if (repeats_per_point == 0) throw std::invalid_argument("sweep: repeats_per_point must be at least 1");
    switch (grid.kind) {
      case GridSpec::Kind::kEpsilon:
      case GridSpec::Kind::kScale:
        if (grid.values.empty()) throw std::invalid_argument("sweep: grid must be nonempty");
        for (double v : grid.values) {
          if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("sweep: grid values must be positive");
        }
        break;
      case GridSpec::Kind::kHalving:
        if (grid.points == 0) throw std::invalid_argument("sweep: halving grid needs at least one point");
        if (!(grid.anchor_scale > 0.0)) throw std::invalid_argument("sweep: anchor_scale must be positive");
        break;
    }
    for (MechanismKind k : mechanisms) {
      if (k == MechanismKind::kGaussian && !(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("sweep: the gaussian mechanism needs 0 < delta < 1");
      }
    }
    if (sensitivity.kind == SensitivitySource::Kind::kSampled && sensitivity.m == 0) {
      throw std::invalid_argument("sweep: sampled sensitivity needs m >= 1");
    }
    if (sensitivity.kind == SensitivitySource::Kind::kFixed && !(sensitivity.l1 > 0.0 && sensitivity.l2 > 0.0)) {
      throw std::invalid_argument("sweep: fixed sensitivity needs positive l1 and l2");
    }
    if (dataset.kind == DatasetSpec::Kind::kCsv && dataset.path.empty()) {
      throw std::invalid_argument("sweep: csv dataset needs a path");
    }
    if (dataset.pretrain == 0 || dataset.finetune < 2 || dataset.holdout == 0) {
      throw std::invalid_argument("sweep: pretrain, finetune and holdout splits must be nonempty");
    }
    if (attack.train_pairs / 2 > dataset.shadow_in || attack.train_pairs / 2 > dataset.shadow_out) {
      throw std::invalid_argument("sweep: shadow splits are smaller than train_pairs / 2");
    }
    pretrain.Validate();
    finetune.Validate();
    attack.Validate();
  }
};

// ---------------------------------------------------------------------------
// JSON for configuration types.
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"hidden_dims", c.hidden_dims},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"init_scale", c.init_scale},
       {"num_transforms", c.num_transforms}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d = c;
  c.hidden_dims = j.value("hidden_dims", d.hidden_dims);
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.init_scale = j.value("init_scale", d.init_scale);
  c.num_transforms = j.value("num_transforms", d.num_transforms);
}

inline void to_json(nlohmann::json& j, const AttackClassifierConfig& c) {
  j = {{"hidden_layers", c.hidden_layers}, {"hidden_width", c.hidden_width},
       {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
       {"train_pairs", c.train_pairs},     {"optimizer", c.optimizer == AttackOptimizer::kAdam ? "adam" : "gd"}};
}

inline void from_json(const nlohmann::json& j, AttackClassifierConfig& c) {
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.train_pairs = j.value("train_pairs", c.train_pairs);
  const std::string opt = j.value("optimizer", std::string(c.optimizer == AttackOptimizer::kAdam ? "adam" : "gd"));
  if (opt == "adam") {
    c.optimizer = AttackOptimizer::kAdam;
  } else if (opt == "gd") {
    c.optimizer = AttackOptimizer::kGradientDescent;
  } else {
    throw std::invalid_argument("unknown attack optimizer '" + opt + "'");
  }
}

inline void to_json(nlohmann::json& j, const DatasetSpec& d) {
  if (d.kind == DatasetSpec::Kind::kSynthetic) {
    j = {{"kind", "synthetic"}, {"num_classes", d.num_classes}, {"feature_dim", d.feature_dim}, {"spread", d.spread}};
  } else {
    j = {{"kind", "csv"}, {"path", d.path}, {"num_classes", d.num_classes}};
  }
  j["splits"] = {{"pretrain", d.pretrain},
                 {"finetune", d.finetune},
                 {"holdout", d.holdout},
                 {"shadow_in", d.shadow_in},
                 {"shadow_out", d.shadow_out}};
}

inline void from_json(const nlohmann::json& j, DatasetSpec& d) {
  const std::string kind = j.value("kind", std::string("synthetic"));
  if (kind == "synthetic") {
    d.kind = DatasetSpec::Kind::kSynthetic;
    d.feature_dim = j.value("feature_dim", d.feature_dim);
    d.spread = j.value("spread", d.spread);
  } else if (kind == "csv") {
    d.kind = DatasetSpec::Kind::kCsv;
    d.path = j.at("path").get<std::string>();
    d.num_classes = 0;
  } else {
    throw std::invalid_argument("unknown dataset kind '" + kind + "'");
  }
  d.num_classes = j.value("num_classes", d.num_classes);
  if (j.contains("splits")) {
    const auto& s = j.at("splits");
    d.pretrain = s.value("pretrain", d.pretrain);
    d.finetune = s.value("finetune", d.finetune);
    d.holdout = s.value("holdout", d.holdout);
    d.shadow_in = s.value("shadow_in", d.shadow_in);
    d.shadow_out = s.value("shadow_out", d.shadow_out);
  }
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  switch (g.kind) {
    case GridSpec::Kind::kEpsilon:
      j = {{"epsilon_grid", g.values}};
      break;
    case GridSpec::Kind::kScale:
      j = {{"scale_grid", g.values}};
      break;
    case GridSpec::Kind::kHalving:
      j = {{"halving_grid", {{"anchor_scale", g.anchor_scale}, {"points", g.points}}}};
      break;
  }
}

inline void to_json(nlohmann::json& j, const SensitivitySource& s) {
  if (s.kind == SensitivitySource::Kind::kFixed) {
    j = {{"fixed", {{"l1", s.l1}, {"l2", s.l2}}}};
  } else {
    j = {{"sampled", {{"m", s.m}}}};
    if (s.seed) j["sampled"]["seed"] = *s.seed;
  }
}

inline void from_json(const nlohmann::json& j, SensitivitySource& s) {
  if (j.contains("fixed")) {
    s.kind = SensitivitySource::Kind::kFixed;
    s.l1 = j.at("fixed").at("l1").get<double>();
    s.l2 = j.at("fixed").at("l2").get<double>();
  } else if (j.contains("sampled")) {
    s.kind = SensitivitySource::Kind::kSampled;
    s.m = j.at("sampled").value("m", s.m);
    if (j.at("sampled").contains("seed")) s.seed = j.at("sampled").at("seed").get<uint64_t>();
  } else {
    throw std::invalid_argument("sensitivity must be {\"sampled\": ...} or {\"fixed\": ...}");
  }
}

// The echo omits `threads`, which never changes results.
inline void to_json(nlohmann::json& j, const SweepConfig& c) {
  std::vector<std::string> mechs;
  for (MechanismKind k : c.mechanisms) mechs.emplace_back(ToString(k));
  j = {{"dataset", c.dataset},
       {"pretrain", c.pretrain},
       {"finetune", c.finetune},
       {"attack", c.attack},
       {"mechanisms", mechs},
       {"sensitivity", c.sensitivity},
       {"delta", c.delta},
       {"repeats_per_point", c.repeats_per_point},
       {"master_seed", c.master_seed}};
  j.update(nlohmann::json(c.grid));
}

inline void from_json(const nlohmann::json& j, SweepConfig& c) {
  c = SweepConfig{};
  if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
  if (j.contains("pretrain")) j.at("pretrain").get_to(c.pretrain);
  if (j.contains("finetune")) j.at("finetune").get_to(c.finetune);
  if (j.contains("attack")) j.at("attack").get_to(c.attack);
  if (j.contains("mechanisms")) {
    c.mechanisms.clear();
    for (const auto& m : j.at("mechanisms")) c.mechanisms.push_back(ParseMechanismKind(m.get<std::string>()));
  }
  const int grids = static_cast<int>(j.contains("epsilon_grid")) + static_cast<int>(j.contains("scale_grid")) +
                    static_cast<int>(j.contains("halving_grid"));
  if (grids > 1)
    throw std::invalid_argument("sweep config: give exactly one of epsilon_grid, scale_grid, halving_grid");
  if (j.contains("epsilon_grid")) {
    c.grid.kind = GridSpec::Kind::kEpsilon;
    c.grid.values = j.at("epsilon_grid").get<std::vector<double>>();
  } else if (j.contains("scale_grid")) {
    c.grid.kind = GridSpec::Kind::kScale;
    c.grid.values = j.at("scale_grid").get<std::vector<double>>();
  } else if (j.contains("halving_grid")) {
    c.grid.kind = GridSpec::Kind::kHalving;
    c.grid.anchor_scale = j.at("halving_grid").value("anchor_scale", c.grid.anchor_scale);
    c.grid.points = j.at("halving_grid").value("points", c.grid.points);
  }
  if (j.contains("sensitivity")) j.at("sensitivity").get_to(c.sensitivity);
  c.delta = j.value("delta", c.delta);
  c.repeats_per_point = j.value("repeats_per_point", c.repeats_per_point);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.threads = j.value("threads", c.threads);
}

inline SweepConfig LoadSweepConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("'" + path.string() + "': " + e.what());
  }
  SweepConfig c = j.get<SweepConfig>();
  c.Validate();
  return c;
}

// Mechanism specs in config files: {kind, scale, delta} or
// {kind, epsilon, delta}. The epsilon form needs a sensitivity record.
inline MechanismSpec MechanismSpecFromJson(const nlohmann::json& j,
                                           const std::optional<SensitivityEstimate>& sensitivity = std::nullopt) {
  const MechanismKind kind = ParseMechanismKind(j.at("kind").get<std::string>());
  const double delta = j.value("delta", kind == MechanismKind::kGaussian ? kDefaultGaussianDelta : 0.0);
  if (j.contains("scale") == j.contains("epsilon")) {
    throw std::invalid_argument("mechanism spec needs exactly one of scale and epsilon");
  }
  MechanismSpec spec;
  if (j.contains("scale")) {
    spec = MechanismSpec{kind, j.at("scale").get<double>(), delta};
  } else {
    if (!sensitivity) throw std::invalid_argument("mechanism spec given by epsilon needs a sensitivity record");
    spec = ScaleForBudget(kind, PrivacyBudget{j.at("epsilon").get<double>(), delta}, sensitivity->For(kind));
  }
  spec.Validate();
  return spec;
}

inline nlohmann::json MechanismSpecToJson(const MechanismSpec& spec) {
  return {{"kind", ToString(spec.kind)}, {"scale", spec.scale}, {"delta", spec.delta}};
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

struct SweepRow {
  MechanismKind mechanism = MechanismKind::kLogistic;
  std::size_t epsilon_index = 0;
  double epsilon = 0.0;
  double scale = 0.0;
  double utility_loss = 0.0;
  double mia_accuracy = 0.0;
  std::size_t repeat_index = 0;
  // Provenance: the norm and value the scale was calibrated against.
  SensitivityNorm norm = SensitivityNorm::kL1;
  double sensitivity = 0.0;
  double protected_accuracy = 0.0;
  uint64_t noise_seed = 0;
  // Gaussian rows at epsilon >= 1, outside the classical analysis.
  bool outside_classical_range = false;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// Repeat-averaged point.
struct SweepPoint {
  MechanismKind mechanism = MechanismKind::kLogistic;
  std::size_t epsilon_index = 0;
  double epsilon = 0.0;
  double scale = 0.0;
  double utility_loss = 0.0;
  double mia_accuracy = 0.0;
  std::size_t repeats = 0;

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

struct Baseline {
  double accuracy = 0.0;
  double mia_accuracy = 0.0;
  double train_accuracy = 0.0;

  friend bool operator==(const Baseline&, const Baseline&) = default;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<SweepPoint> averaged;
  SensitivityEstimate sensitivity;
  bool sensitivity_fixed = false;
  nlohmann::json config;
  Baseline unprotected_baseline;

  friend bool operator==(const SweepReport&, const SweepReport&) = default;
};

// Mechanism (enum order), then epsilon descending, then repeat.
inline bool RowOrder(const SweepRow& a, const SweepRow& b) {
  if (a.mechanism != b.mechanism) return static_cast<int>(a.mechanism) < static_cast<int>(b.mechanism);
  if (a.epsilon != b.epsilon) return a.epsilon > b.epsilon;
  return a.repeat_index < b.repeat_index;
}

inline std::vector<SweepPoint> AverageRows(std::span<const SweepRow> rows) {
  std::map<std::pair<int, std::size_t>, SweepPoint> acc;
  for (const SweepRow& r : rows) {
    SweepPoint& p = acc[{static_cast<int>(r.mechanism), r.epsilon_index}];
    p.mechanism = r.mechanism;
    p.epsilon_index = r.epsilon_index;
    p.epsilon = r.epsilon;
    p.scale = r.scale;
    p.utility_loss += r.utility_loss;
    p.mia_accuracy += r.mia_accuracy;
    ++p.repeats;
  }
  std::vector<SweepPoint> out;
  for (auto& [key, p] : acc) {
    p.utility_loss /= static_cast<double>(p.repeats);
    p.mia_accuracy /= static_cast<double>(p.repeats);
    out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(), [](const SweepPoint& a, const SweepPoint& b) {
    if (a.mechanism != b.mechanism) return static_cast<int>(a.mechanism) < static_cast<int>(b.mechanism);
    return a.epsilon > b.epsilon;
  });
  return out;
}

inline void to_json(nlohmann::json& j, const SweepRow& r) {
  j = {{"mechanism", ToString(r.mechanism)},
       {"epsilon_index", r.epsilon_index},
       {"epsilon", r.epsilon},
       {"scale", r.scale},
       {"utility_loss", r.utility_loss},
       {"mia_accuracy", r.mia_accuracy},
       {"repeat_index", r.repeat_index},
       {"norm", ToString(r.norm)},
       {"sensitivity", r.sensitivity},
       {"protected_accuracy", r.protected_accuracy},
       {"noise_seed", r.noise_seed},
       {"outside_classical_range", r.outside_classical_range}};
}

inline void from_json(const nlohmann::json& j, SweepRow& r) {
  r.mechanism = ParseMechanismKind(j.at("mechanism").get<std::string>());
  r.epsilon_index = j.at("epsilon_index").get<std::size_t>();
  r.epsilon = j.at("epsilon").get<double>();
  r.scale = j.at("scale").get<double>();
  r.utility_loss = j.at("utility_loss").get<double>();
  r.mia_accuracy = j.at("mia_accuracy").get<double>();
  r.repeat_index = j.at("repeat_index").get<std::size_t>();
  r.norm = ParseSensitivityNorm(j.at("norm").get<std::string>());
  r.sensitivity = j.at("sensitivity").get<double>();
  r.protected_accuracy = j.at("protected_accuracy").get<double>();
  r.noise_seed = j.at("noise_seed").get<uint64_t>();
  r.outside_classical_range = j.value("outside_classical_range", false);
}

inline void to_json(nlohmann::json& j, const SweepPoint& p) {
  j = {{"mechanism", ToString(p.mechanism)},
       {"epsilon_index", p.epsilon_index},
       {"epsilon", p.epsilon},
       {"scale", p.scale},
       {"utility_loss", p.utility_loss},
       {"mia_accuracy", p.mia_accuracy},
       {"repeats", p.repeats}};
}

inline void from_json(const nlohmann::json& j, SweepPoint& p) {
  p.mechanism = ParseMechanismKind(j.at("mechanism").get<std::string>());
  p.epsilon_index = j.at("epsilon_index").get<std::size_t>();
  p.epsilon = j.at("epsilon").get<double>();
  p.scale = j.at("scale").get<double>();
  p.utility_loss = j.at("utility_loss").get<double>();
  p.mia_accuracy = j.at("mia_accuracy").get<double>();
  p.repeats = j.at("repeats").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const SweepReport& r) {
  j = {{"config", r.config},
       {"sensitivity", r.sensitivity},
       {"sensitivity_fixed", r.sensitivity_fixed},
       {"unprotected_baseline",
        {{"accuracy", r.unprotected_baseline.accuracy},
         {"mia_accuracy", r.unprotected_baseline.mia_accuracy},
         {"train_accuracy", r.unprotected_baseline.train_accuracy}}},
       {"rows", r.rows},
       {"averaged", r.averaged}};
}

inline void from_json(const nlohmann::json& j, SweepReport& r) {
  r.config = j.at("config");
  r.sensitivity = j.at("sensitivity").get<SensitivityEstimate>();
  r.sensitivity_fixed = j.at("sensitivity_fixed").get<bool>();
  const auto& b = j.at("unprotected_baseline");
  r.unprotected_baseline = {b.at("accuracy").get<double>(), b.at("mia_accuracy").get<double>(),
                            b.at("train_accuracy").get<double>()};
  r.rows = j.at("rows").get<std::vector<SweepRow>>();
  r.averaged = j.at("averaged").get<std::vector<SweepPoint>>();
}

enum class ReportFormat { kCsv, kJson };

inline ReportFormat ParseReportFormat(std::string_view name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  throw std::invalid_argument("unknown report format '" + std::string(name) + "'");
}

inline constexpr char kReportCsvHeader[] =
    "mechanism,epsilon_index,epsilon,scale,repeat_index,utility_loss,mia_accuracy,protected_accuracy,norm,"
    "sensitivity,noise_seed,outside_classical_range";

inline void EmitReport(const SweepReport& report, const std::filesystem::path& path, ReportFormat format) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  if (format == ReportFormat::kJson) {
    out << nlohmann::json(report).dump(2) << '\n';
  } else {
    std::vector<SweepRow> rows = report.rows;
    std::stable_sort(rows.begin(), rows.end(), RowOrder);
    out << kReportCsvHeader << '\n';
    using io_internal::FormatDouble;
    for (const SweepRow& r : rows) {
      out << ToString(r.mechanism) << ',' << r.epsilon_index << ',' << FormatDouble(r.epsilon) << ','
          << FormatDouble(r.scale) << ',' << r.repeat_index << ',' << FormatDouble(r.utility_loss) << ','
          << FormatDouble(r.mia_accuracy) << ',' << FormatDouble(r.protected_accuracy) << ',' << ToString(r.norm) << ','
          << FormatDouble(r.sensitivity) << ',' << r.noise_seed << ',' << (r.outside_classical_range ? 1 : 0) << '\n';
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("error writing '" + path.string() + "'");
}

inline SweepReport LoadReport(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
    return j.get<SweepReport>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("'" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trend statistics.
// ---------------------------------------------------------------------------

// Ranks starting at 1; ties share their average rank.
inline std::vector<double> AverageRanks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t k = i;
    while (k + 1 < order.size() && v[order[k + 1]] == v[order[i]]) ++k;
    const double avg = 0.5 * static_cast<double>(i + k) + 1.0;
    for (std::size_t t = i; t <= k; ++t) ranks[order[t]] = avg;
    i = k + 1;
  }
  return ranks;
}

struct Correlation {
  double value = 0.0;
  bool degenerate = false;
};

// Pearson correlation of average ranks. A constant series gives 0 with the
// degenerate flag set.
inline Correlation Spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("Spearman: series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("Spearman: need at least two points");
  const std::vector<double> rx = AverageRanks(x), ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {sxy / std::sqrt(sxx * syy), false};
}

struct MechanismTrend {
  MechanismKind mechanism = MechanismKind::kLogistic;
  Correlation eps_vs_utility;
  Correlation eps_vs_mia;
};

// Per-mechanism rank correlations over repeat-averaged points.
inline std::vector<MechanismTrend> TrendStatistics(const SweepReport& report) {
  const std::vector<SweepPoint> points = report.averaged.empty() ? AverageRows(report.rows) : report.averaged;
  std::vector<MechanismTrend> out;
  for (MechanismKind kind : kAllMechanisms) {
    std::vector<double> eps, util, mia;
    for (const SweepPoint& p : points) {
      if (p.mechanism != kind) continue;
      eps.push_back(p.epsilon);
      util.push_back(p.utility_loss);
      mia.push_back(p.mia_accuracy);
    }
    if (eps.empty()) continue;
    std::vector<double> distinct = eps;
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 3) {
      throw std::invalid_argument("TrendStatistics: " + std::string(ToString(kind)) +
                                  " has fewer than 3 distinct epsilons");
    }
    out.push_back({kind, Spearman(eps, util), Spearman(eps, mia)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep.
// ---------------------------------------------------------------------------

struct SweepSplits {
  Dataset pretrain, finetune, holdout, shadow_in, shadow_out;
};

inline SweepSplits MakeSweepSplits(const DatasetSpec& spec, uint64_t master_seed) {
  const uint64_t seed = DeriveSeed(master_seed, "dataset");
  Dataset all;
  if (spec.kind == DatasetSpec::Kind::kSynthetic) {
    const std::size_t per_class = (spec.Total() + spec.num_classes - 1) / std::max<std::size_t>(spec.num_classes, 1);
    all = MakeSyntheticDataset(spec.num_classes, per_class, spec.feature_dim, spec.spread, seed);
  } else {
    all = LoadDatasetCsv(spec.path, spec.num_classes);
    UniformSource src(RngStream{seed, 0});
    for (std::size_t i = all.records.size(); i > 1; --i) std::swap(all.records[i - 1], all.records[src.NextIndex(i)]);
  }
  if (all.size() < spec.Total()) {
    throw std::invalid_argument("dataset has " + std::to_string(all.size()) + " records, splits need " +
                                std::to_string(spec.Total()));
  }
  SweepSplits s;
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    Dataset d = all.Slice(at, n);
    at += n;
    return d;
  };
  s.pretrain = take(spec.pretrain);
  s.finetune = take(spec.finetune);
  s.holdout = take(spec.holdout);
  s.shadow_in = take(spec.shadow_in);
  s.shadow_out = take(spec.shadow_out);
  return s;
}

// Epsilons per mechanism, largest first for halving grids. Every mechanism
// shares the epsilon grid except under a scale grid.
inline std::vector<MechanismSpec> ResolveGrid(const GridSpec& grid, MechanismKind kind, const SensitivityEstimate& sens,
                                              double delta, std::vector<double>* epsilons) {
  const double kind_delta = kind == MechanismKind::kGaussian ? delta : 0.0;
  std::vector<double> eps;
  switch (grid.kind) {
    case GridSpec::Kind::kEpsilon:
      eps = grid.values;
      break;
    case GridSpec::Kind::kHalving:
      for (std::size_t k = 0; k < grid.points; ++k) {
        eps.push_back(sens.delta_l1 / (grid.anchor_scale * std::ldexp(1.0, static_cast<int>(k))));
      }
      break;
    case GridSpec::Kind::kScale:
      break;
  }
  std::vector<MechanismSpec> specs;
  if (grid.kind == GridSpec::Kind::kScale) {
    for (double s : grid.values) {
      const MechanismSpec spec{kind, s, kind_delta};
      specs.push_back(spec);
      eps.push_back(BudgetForScale(spec, sens.For(kind)).epsilon);
    }
  } else {
    for (double e : eps) specs.push_back(ScaleForBudget(kind, PrivacyBudget{e, kind_delta}, sens.For(kind)));
  }
  *epsilons = std::move(eps);
  return specs;
}

// Seeds for every sweep stage, all derived from the master seed.
struct SweepSeeds {
  uint64_t pretrain, finetune, shadow, sensitivity, attack_init, attack_pairs, mia_eval;

  static SweepSeeds From(const SweepConfig& cfg) {
    const uint64_t m = cfg.master_seed;
    return {DeriveSeed(m, "pretrain"),    DeriveSeed(m, "finetune"),
            DeriveSeed(m, "shadow"),      cfg.sensitivity.seed.value_or(DeriveSeed(m, "sensitivity")),
            DeriveSeed(m, "attack-init"), DeriveSeed(m, "attack-pairs"),
            DeriveSeed(m, "mia-eval")};
  }
};

inline uint64_t RowNoiseSeed(uint64_t master_seed, MechanismKind kind, std::size_t epsilon_index, std::size_t repeat) {
  return DeriveSeed(master_seed, {static_cast<uint64_t>(kind), epsilon_index, repeat});
}

// The stages every sweep shares: data splits, the victim's encoder and
// head, and the attacker's shadow head and classifier.
struct SweepModels {
  SweepSplits splits;
  TrainConfig finetune_cfg;  // with the derived victim seed
  WeightVector theta;
  WeightVector omega;
};

inline SweepModels TrainSweepModels(const SweepConfig& cfg) {
  cfg.Validate();
  const SweepSeeds seeds = SweepSeeds::From(cfg);
  SweepModels m;
  m.splits = MakeSweepSplits(cfg.dataset, cfg.master_seed);
  TrainConfig pretrain_cfg = cfg.pretrain;
  pretrain_cfg.seed = seeds.pretrain;
  m.finetune_cfg = cfg.finetune;
  m.finetune_cfg.seed = seeds.finetune;
  m.theta = PretrainEncoder(m.splits.pretrain, pretrain_cfg);
  m.omega = FinetuneHead(m.theta, m.splits.finetune, m.finetune_cfg);
  return m;
}

// Fixed values from the config, or leave-one-out pair sampling on the
// victim's fine-tuning split.
inline SensitivityEstimate SweepSensitivity(const SweepConfig& cfg, const SweepModels& m) {
  if (cfg.sensitivity.kind == SensitivitySource::Kind::kFixed) {
    SensitivityEstimate e;
    e.delta_l1 = cfg.sensitivity.l1;
    e.delta_l2 = cfg.sensitivity.l2;
    return e;
  }
  return SampleSensitivity(m.theta, m.splits.finetune, m.finetune_cfg, cfg.sensitivity.m,
                           SweepSeeds::From(cfg).sensitivity, cfg.threads);
}

// The attacker: a shadow head on the public encoder, trained on data
// disjoint from the victim's, and a classifier fit to its outputs.
struct Attacker {
  std::vector<AttackRecord> records;
  AttackClassifier classifier;
};

inline Attacker TrainSweepAttacker(const SweepConfig& cfg, const SweepModels& m) {
  const SweepSeeds seeds = SweepSeeds::From(cfg);
  TrainConfig shadow_cfg = cfg.finetune;
  shadow_cfg.seed = seeds.shadow;
  const WeightVector shadow_omega = FinetuneHead(m.theta, m.splits.shadow_in, shadow_cfg);
  Attacker a;
  a.records = BuildAttackDataset(m.theta, shadow_omega, m.splits.shadow_in, m.splits.shadow_out, cfg.attack.train_pairs,
                                 seeds.attack_pairs);
  AttackClassifierConfig attack_cfg = cfg.attack;
  attack_cfg.seed = seeds.attack_init;
  a.classifier = TrainAttackClassifier(a.records, attack_cfg);
  return a;
}

// Attack accuracy against a victim on the sweep's evaluation sets: the
// fine-tuning split (members) and the held-out split (non-members).
inline double SweepAttackAccuracy(const SweepConfig& cfg, const SweepModels& m, const AttackClassifier& clf,
                                  const ProtectedModel& victim, bool use_protected_outputs) {
  return AttackAccuracy(clf, victim, m.splits.finetune, m.splits.holdout, use_protected_outputs,
                        SweepSeeds::From(cfg).mia_eval);
}

inline SweepReport RunSweep(const SweepConfig& cfg) {
  const SweepModels models = TrainSweepModels(cfg);
  const WeightVector& theta = models.theta;
  const WeightVector& omega = models.omega;
  const SweepSplits& splits = models.splits;

  SweepReport report;
  report.config = cfg;
  report.sensitivity = SweepSensitivity(cfg, models);
  report.sensitivity_fixed = cfg.sensitivity.kind == SensitivitySource::Kind::kFixed;
  const AttackClassifier classifier = TrainSweepAttacker(cfg, models).classifier;

  const Matrix holdout_reps = EncodeDataset(theta, splits.holdout);
  const std::vector<std::size_t> holdout_labels = splits.holdout.Labels();
  const double clean_accuracy = Accuracy(PredictFromRepresentations(omega, holdout_reps), holdout_labels);
  report.unprotected_baseline.accuracy = clean_accuracy;
  report.unprotected_baseline.train_accuracy =
      Accuracy(PredictBatch(theta, omega, splits.finetune), splits.finetune.Labels());
  const ProtectedModel clean{theta, omega, omega, MechanismSpec{}, 0};
  report.unprotected_baseline.mia_accuracy = SweepAttackAccuracy(cfg, models, classifier, clean, false);

  struct Task {
    MechanismSpec spec;
    SweepRow row;
  };
  std::vector<Task> tasks;
  for (MechanismKind kind : cfg.mechanisms) {
    std::vector<double> eps;
    const std::vector<MechanismSpec> specs = ResolveGrid(cfg.grid, kind, report.sensitivity, cfg.delta, &eps);
    const Sensitivity sens = report.sensitivity.For(kind);
    for (std::size_t e = 0; e < specs.size(); ++e) {
      for (std::size_t r = 0; r < cfg.repeats_per_point; ++r) {
        SweepRow row;
        row.mechanism = kind;
        row.epsilon_index = e;
        row.epsilon = eps[e];
        row.scale = specs[e].scale;
        row.repeat_index = r;
        row.norm = sens.norm;
        row.sensitivity = sens.value;
        row.noise_seed = RowNoiseSeed(cfg.master_seed, kind, e, r);
        row.outside_classical_range = OutsideClassicalGaussianRange(kind, {eps[e], specs[e].delta});
        tasks.push_back({specs[e], row});
      }
    }
  }
  ParallelFor(tasks.size(), cfg.threads, [&](std::size_t t) {
    Task& task = tasks[t];
    const ProtectedModel victim = ProtectExisting(theta, omega, task.spec, task.row.noise_seed);
    task.row.protected_accuracy =
        Accuracy(PredictFromRepresentations(victim.omega_noisy, holdout_reps), holdout_labels);
    task.row.utility_loss = UtilityLoss(task.row.protected_accuracy, clean_accuracy);
    task.row.mia_accuracy = SweepAttackAccuracy(cfg, models, classifier, victim, true);
  });
  for (Task& t : tasks) report.rows.push_back(t.row);
  std::stable_sort(report.rows.begin(), report.rows.end(), RowOrder);
  report.averaged = AverageRows(report.rows);
  return report;
}

}  // namespace dpalm

#endif  // DPALM_EXPERIMENTS_H_
