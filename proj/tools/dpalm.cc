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

// dpalm command-line tool: sample, sensitivity, protect, attack, sweep and
// report. Every subcommand exits nonzero on error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dpalm/experiments.h"
#include "dpalm/io.h"
#include "dpalm/mechanisms.h"
#include "dpalm/mia.h"
#include "dpalm/protection.h"
#include "dpalm/sensitivity.h"

namespace {

using dpalm::MechanismSpec;
using dpalm::SensitivityEstimate;
using dpalm::SweepConfig;

void WriteText(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("error writing '" + path + "'");
}

void WriteJson(const nlohmann::json& j, const std::string& path) { WriteText(j.dump(2) + "\n", path); }

SensitivityEstimate LoadSensitivity(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return nlohmann::json::parse(in).get<SensitivityEstimate>();
}

SweepConfig LoadConfig(const std::string& path, std::optional<uint64_t> seed) {
  SweepConfig cfg = dpalm::LoadSweepConfig(path);
  if (seed) cfg.master_seed = *seed;
  return cfg;
}

// --- sample ----------------------------------------------------------------

struct SampleArgs {
  std::string mechanism = "logistic";
  std::optional<double> scale;
  std::optional<double> epsilon;
  double sensitivity = 1.0;
  std::optional<double> delta;
  std::size_t n = 1000;
  uint64_t seed = 0;
  std::string out;
};

void RunSample(const SampleArgs& a) {
  nlohmann::json j{{"kind", a.mechanism}};
  if (a.delta) j["delta"] = *a.delta;
  std::optional<SensitivityEstimate> sens;
  if (a.scale) {
    j["scale"] = *a.scale;
  } else {
    j["epsilon"] = a.epsilon.value_or(1.0);
    SensitivityEstimate e;
    e.delta_l1 = e.delta_l2 = a.sensitivity;
    sens = e;
  }
  const MechanismSpec spec = dpalm::MechanismSpecFromJson(j, sens);
  const std::vector<double> xs = dpalm::SampleNoise(spec, dpalm::NoiseStream(a.seed), a.n);
  std::string text = "x\n";
  for (double x : xs) text += dpalm::io_internal::FormatDouble(x) + "\n";
  WriteText(text, a.out);
}

// --- sensitivity -----------------------------------------------------------

struct SensitivityArgs {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::size_t> m;
  bool brute_force = false;
  std::string out;
};

void RunSensitivityCommand(const SensitivityArgs& a) {
  SweepConfig cfg = LoadConfig(a.config, a.seed);
  if (a.m) {
    cfg.sensitivity.kind = dpalm::SensitivitySource::Kind::kSampled;
    cfg.sensitivity.m = *a.m;
  }
  const dpalm::SweepModels models = dpalm::TrainSweepModels(cfg);
  SensitivityEstimate e;
  if (a.brute_force) {
    e = dpalm::BruteForceSensitivity(models.theta, models.splits.finetune, models.finetune_cfg, cfg.threads);
  } else {
    if (cfg.sensitivity.kind != dpalm::SensitivitySource::Kind::kSampled) {
      throw std::invalid_argument("config holds a fixed sensitivity; pass --m to sample one");
    }
    e = dpalm::SweepSensitivity(cfg, models);
  }
  WriteJson(e, a.out);
}

// --- protect ---------------------------------------------------------------

struct ProtectArgs {
  std::string config;
  std::string mechanism = "logistic";
  std::optional<double> scale;
  std::optional<double> epsilon;
  std::optional<double> delta;
  std::string sensitivity_file;
  std::optional<uint64_t> master_seed;
  uint64_t seed = 0;
  std::string out;
};

void RunProtect(const ProtectArgs& a) {
  if (a.out.empty()) throw std::invalid_argument("protect needs --out <dir>");
  const SweepConfig cfg = LoadConfig(a.config, a.master_seed);
  const dpalm::SweepModels models = dpalm::TrainSweepModels(cfg);
  std::optional<SensitivityEstimate> sens;
  if (!a.sensitivity_file.empty()) {
    sens = LoadSensitivity(a.sensitivity_file);
  } else if (a.epsilon) {
    sens = dpalm::SweepSensitivity(cfg, models);
  }
  nlohmann::json j{{"kind", a.mechanism}};
  if (a.delta) j["delta"] = *a.delta;
  if (a.scale.has_value() == a.epsilon.has_value())
    throw std::invalid_argument("give exactly one of --scale and --epsilon");
  if (a.scale) j["scale"] = *a.scale;
  if (a.epsilon) j["epsilon"] = *a.epsilon;
  const MechanismSpec spec = dpalm::MechanismSpecFromJson(j, sens);
  const dpalm::ProtectedModel victim = dpalm::ProtectExisting(models.theta, models.omega, spec, a.seed);
  std::optional<dpalm::Sensitivity> s;
  if (sens) s = sens->For(spec.kind);
  dpalm::ExportRelease(victim.Release(s), a.out);
}

// --- attack ----------------------------------------------------------------

struct AttackArgs {
  std::string config;
  std::string release;
  std::optional<uint64_t> seed;
  std::string attack_csv;
  std::string out;
};

void RunAttack(const AttackArgs& a) {
  const SweepConfig cfg = LoadConfig(a.config, a.seed);
  const dpalm::SweepModels models = dpalm::TrainSweepModels(cfg);
  const dpalm::Attacker attacker = dpalm::TrainSweepAttacker(cfg, models);
  if (!a.attack_csv.empty()) dpalm::SaveAttackDatasetCsv(attacker.records, a.attack_csv);
  nlohmann::json j;
  if (a.release.empty()) {
    const dpalm::ProtectedModel clean{models.theta, models.omega, models.omega, MechanismSpec{}, 0};
    j["target"] = "unprotected";
    j["mia_accuracy"] = dpalm::SweepAttackAccuracy(cfg, models, attacker.classifier, clean, false);
  } else {
    const dpalm::ReleasedModel r = dpalm::LoadRelease(a.release);
    const dpalm::ProtectedModel victim{r.theta, r.omega, r.omega, r.spec, 0};
    j["target"] = a.release;
    j["mechanism"] = dpalm::MechanismSpecToJson(r.spec);
    if (r.budget) j["epsilon"] = r.budget->epsilon;
    j["mia_accuracy"] = dpalm::SweepAttackAccuracy(cfg, models, attacker.classifier, victim, true);
  }
  WriteJson(j, a.out);
}

// --- sweep and report ------------------------------------------------------

struct SweepArgs {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<unsigned> threads;
  std::string format = "json";
  std::string out;
};

void RunSweepCommand(const SweepArgs& a) {
  if (a.out.empty()) throw std::invalid_argument("sweep needs --out <path>");
  SweepConfig cfg = LoadConfig(a.config, a.seed);
  if (a.threads) cfg.threads = *a.threads;
  const dpalm::ReportFormat format = dpalm::ParseReportFormat(a.format);
  dpalm::EmitReport(dpalm::RunSweep(cfg), a.out, format);
}

std::string Summary(const dpalm::SweepReport& r) {
  using dpalm::io_internal::FormatDouble;
  std::string s;
  s += "baseline accuracy " + FormatDouble(r.unprotected_baseline.accuracy) + ", train accuracy " +
       FormatDouble(r.unprotected_baseline.train_accuracy) + ", unprotected mia " +
       FormatDouble(r.unprotected_baseline.mia_accuracy) + "\n";
  s += "sensitivity l1 " + FormatDouble(r.sensitivity.delta_l1) + " l2 " + FormatDouble(r.sensitivity.delta_l2) +
       (r.sensitivity_fixed ? " (fixed)\n" : " (sampled)\n");
  s += "mechanism,epsilon,utility_loss,mia_accuracy,repeats\n";
  for (const dpalm::SweepPoint& p : r.averaged) {
    s += std::string(dpalm::ToString(p.mechanism)) + "," + FormatDouble(p.epsilon) + "," +
         FormatDouble(p.utility_loss) + "," + FormatDouble(p.mia_accuracy) + "," + std::to_string(p.repeats) + "\n";
  }
  try {
    for (const dpalm::MechanismTrend& t : dpalm::TrendStatistics(r)) {
      s += "spearman " + std::string(dpalm::ToString(t.mechanism)) + " eps~utility " +
           FormatDouble(t.eps_vs_utility.value) + (t.eps_vs_utility.degenerate ? " (degenerate)" : "") + " eps~mia " +
           FormatDouble(t.eps_vs_mia.value) + (t.eps_vs_mia.degenerate ? " (degenerate)" : "") + "\n";
    }
  } catch (const std::invalid_argument& e) {
    s += std::string("no trend statistics: ") + e.what() + "\n";
  }
  return s;
}

struct ReportArgs {
  std::string in;
  std::string format = "summary";
  std::string out;
};

void RunReport(const ReportArgs& a) {
  const dpalm::SweepReport report = dpalm::LoadReport(a.in);
  if (a.format == "summary") {
    WriteText(Summary(report), a.out);
    return;
  }
  if (a.out.empty()) throw std::invalid_argument("report needs --out <path> for csv and json");
  dpalm::EmitReport(report, a.out, dpalm::ParseReportFormat(a.format));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpalm: output-layer noise for fine-tuned models"};
  app.require_subcommand(1);

  SampleArgs sample;
  CLI::App* s = app.add_subcommand("sample", "Draw noise samples for a mechanism");
  s->add_option("--mechanism", sample.mechanism, "logistic, laplace or gaussian");
  auto* scale_opt = s->add_option("--scale", sample.scale, "Noise scale s, b or sigma");
  s->add_option("--epsilon", sample.epsilon, "Privacy budget (scale from --sensitivity)")->excludes(scale_opt);
  s->add_option("--sensitivity", sample.sensitivity, "Sensitivity used with --epsilon");
  s->add_option("--delta", sample.delta, "Gaussian delta");
  s->add_option("-n,--count", sample.n, "Number of samples");
  s->add_option("--seed", sample.seed, "Noise seed");
  s->add_option("--out", sample.out, "Output CSV (default stdout)");
  s->callback([&] { RunSample(sample); });

  SensitivityArgs sens;
  CLI::App* se = app.add_subcommand("sensitivity", "Estimate the head's sensitivity");
  se->add_option("--config", sens.config, "Sweep config JSON")->required();
  se->add_option("--seed", sens.seed, "Master seed override");
  se->add_option("--m", sens.m, "Number of sampled pairs");
  se->add_flag("--brute-force", sens.brute_force, "Enumerate all pairs (small fine-tuning sets only)");
  se->add_option("--out", sens.out, "Output JSON (default stdout)");
  se->callback([&] { RunSensitivityCommand(sens); });

  ProtectArgs prot;
  CLI::App* p = app.add_subcommand("protect", "Perturb the fine-tuned head and export the release");
  p->add_option("--config", prot.config, "Sweep config JSON")->required();
  p->add_option("--mechanism", prot.mechanism, "logistic, laplace or gaussian");
  p->add_option("--scale", prot.scale, "Noise scale");
  p->add_option("--epsilon", prot.epsilon, "Privacy budget");
  p->add_option("--delta", prot.delta, "Gaussian delta");
  p->add_option("--sensitivity", prot.sensitivity_file, "Sensitivity JSON (otherwise estimated)");
  p->add_option("--master-seed", prot.master_seed, "Master seed override for training");
  p->add_option("--seed", prot.seed, "Noise seed");
  p->add_option("--out", prot.out, "Release directory")->required();
  p->callback([&] { RunProtect(prot); });

  AttackArgs att;
  CLI::App* at = app.add_subcommand("attack", "Run the membership inference attack");
  at->add_option("--config", att.config, "Sweep config JSON")->required();
  at->add_option("--release", att.release, "Release directory (default: unprotected model)");
  at->add_option("--seed", att.seed, "Master seed override");
  at->add_option("--attack-csv", att.attack_csv, "Also write the attack training set");
  at->add_option("--out", att.out, "Output JSON (default stdout)");
  at->callback([&] { RunAttack(att); });

  SweepArgs sw;
  CLI::App* w = app.add_subcommand("sweep", "Run the privacy-utility sweep");
  w->add_option("--config", sw.config, "Sweep config JSON")->required();
  w->add_option("--seed", sw.seed, "Master seed override");
  w->add_option("--threads", sw.threads, "Worker threads");
  w->add_option("--format", sw.format, "json or csv");
  w->add_option("--out", sw.out, "Report path")->required();
  w->callback([&] { RunSweepCommand(sw); });

  ReportArgs rep;
  CLI::App* r = app.add_subcommand("report", "Reformat or summarize a sweep report");
  r->add_option("--in", rep.in, "JSON report")->required();
  r->add_option("--format", rep.format, "summary, csv or json");
  r->add_option("--out", rep.out, "Output path (default stdout for summary)");
  r->callback([&] { RunReport(rep); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dpalm: %s\n", e.what());
    return 1;
  }
  return 0;
}
