// Copyright 2026 The provdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: corpus generation, training, attacks, privacy
// accounting and full experiment runs.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "provdp.hpp"

namespace fs = std::filesystem;
using namespace provdp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out = "out";
  bool quiet = false;
};

ExperimentConfig LoadConfig(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? DefaultExperimentConfig() : LoadExperimentConfig(c.config);
  if (c.seed) cfg.seed = *c.seed;
  ValidateExperimentConfig(cfg);
  return cfg;
}

void Say(const Common& c, const std::string& line) {
  if (!c.quiet) std::cerr << line << "\n";
}

void AddCommon(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "Experiment config (JSON with schema_version)");
  app->add_option("--seed", c.seed, "Global seed (overrides the config)");
  if (with_out) app->add_option("--out", c.out, "Output directory");
  app->add_flag("--quiet", c.quiet, "Suppress progress output");
}

int GenCorpus(const Common& c) {
  const ExperimentConfig cfg = LoadConfig(c);
  const Corpus corpus = MakeCorpus(cfg);
  const CorpusSplit split = MakeSplit(cfg, corpus);
  SaveCorpusBundle(fs::path(c.out) / "corpus.json", corpus, split);
  Say(c, "wrote " + (fs::path(c.out) / "corpus.json").string() + ": " + std::to_string(corpus.providers.size()) +
             " providers, " + std::to_string(corpus.documents.size()) + " documents, " +
             std::to_string(corpus.examples.size()) + " questions");
  return kExitOk;
}

int Train(const Common& c, const std::string& mode, std::optional<double> epsilon) {
  ExperimentConfig cfg = LoadConfig(c);
  const TrainMode m = ParseTrainMode(mode);
  if (IsPrivateMode(m)) {
    Require(cfg.dp.has_value(), ErrorCode::kConfig, "mode " + mode + " needs a dp section");
    if (epsilon) cfg.dp->epsilons = {*epsilon};
  }
  cfg.modes = {mode};
  const fs::path out(c.out);
  Say(c, "preparing corpus and zero-shot model");
  const ExperimentData data = PrepareExperiment(cfg);
  SaveCorpusBundle(out / "corpus.json", data.corpus, data.split);
  SaveCheckpoint((out / "checkpoints" / "zero-shot.ckpt").string(), data.zero_shot);
  for (const Variant& v : ExpandVariants(cfg)) {
    Say(c, "training " + v.name);
    const TrainResult r = TrainVariant(cfg, data, v);
    SaveCheckpoint((out / "checkpoints" / (v.name + ".ckpt")).string(), r.params);
    WriteFile(out / "rounds" / (v.name + ".csv"), RoundsCsv(r.rounds));
    const UtilityTable u = EvaluateUtility(data, r.params, cfg.eval);
    WriteFile(out / "utility" / (v.name + ".csv"), UtilityCsv(u));
    char line[160];
    std::snprintf(line, sizeof line, "%s: test ACC %.2f ANLS %.2f", v.name.c_str(), u.at("test").acc,
                  u.at("test").anls);
    std::string msg = line;
    if (r.epsilon) {
      std::snprintf(line, sizeof line, " (sigma %.6f, epsilon %.4f)", r.noise_multiplier, *r.epsilon);
      msg += line;
    }
    Say(c, msg);
  }
  return kExitOk;
}

struct AttackArgs {
  std::string model_pre, model_post, red, setting = "azk", features = "g1";
  int s = 5;
  double r = 0.15;
  int seeds = 5;
};

int Attack(const Common& c, const AttackArgs& a) {
  const ExperimentConfig cfg = LoadConfig(c);
  const CorpusBundle bundle = LoadCorpusBundle(a.red);
  const QaModel model = QaModel::ForCorpus(bundle.corpus, cfg.model);
  const ParameterVector pre = LoadCheckpoint(a.model_pre);
  const ParameterVector post = LoadCheckpoint(a.model_post);
  model.CheckParams(pre);
  model.CheckParams(post);
  AttackConfig ac;
  ac.setting = ParseAttackSetting(a.setting);
  ac.groups = ParseFeatureGroups(a.features);
  ac.s = a.s;
  ac.r = a.r;
  ac.n_seeds = a.seeds;
  ac.seed = DeriveSeed(cfg.seed, "attack");
  ValidateAttackConfig(ac);
  const std::set<int> members(bundle.split.in_providers.begin(), bundle.split.in_providers.end());
  const std::vector<MetricRow> rows =
      ExtractMetrics(model, pre, post, bundle.corpus, RedDocs(bundle.split), members);
  const AttackOutcome o = EvalAttack(rows, ac);
  CsvWriter w({"setting", "features", "s", "r", "seed", "accuracy"});
  const auto row = [&](const std::string& seed, double acc) {
    w.Row({AttackSettingName(ac.setting), FeatureGroupsName(ac.groups), std::to_string(ac.s), FormatNumber(ac.r, 2),
           seed, FormatNumber(acc, 4)});
  };
  for (std::size_t i = 0; i < o.per_seed.size(); ++i) row(std::to_string(i), o.per_seed[i]);
  row("mean", o.mean);
  row("std", o.std);
  const fs::path out(c.out);
  WriteFile(out / "attack.csv", w.str());
  WriteFile(out / "metrics.csv", MetricRowsCsv(rows));
  char line[160];
  std::snprintf(line, sizeof line, "%s %s s=%d: %.2f +- %.2f over %d providers", AttackSettingName(ac.setting),
                FeatureGroupsName(ac.groups).c_str(), ac.s, o.mean, o.std, o.n_providers);
  Say(c, line);
  return kExitOk;
}

int Run(const Common& c) {
  const ExperimentConfig cfg = LoadConfig(c);
  RunOptions opts;
  opts.quiet = c.quiet;
  opts.log = [](const std::string& s) { std::cerr << s << "\n"; };
  const ExperimentResult r = RunExperiment(cfg, c.out, opts);
  Say(c, "run complete: " + std::to_string(r.manifest.files.size()) + " files, config hash " +
             r.manifest.config_hash);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Provider-level differential privacy for federated document VQA: simulator and attacks"};
  app.require_subcommand(1);
  Common common;

  CLI::App* gen = app.add_subcommand("gen-corpus", "Generate the synthetic invoice corpus and its split");
  AddCommon(gen, common);

  std::string mode = "central";
  std::optional<double> train_eps;
  CLI::App* train = app.add_subcommand("train", "Train one mode (starts from the public-pretrained model)");
  AddCommon(train, common);
  train->add_option("--mode", mode, "zero-shot | central | central-dp | fedavg | fl-dp");
  train->add_option("--epsilon", train_eps, "Single privacy budget for DP modes (default: config grid)");

  AttackArgs aa;
  CLI::App* attack = app.add_subcommand("attack", "Provider membership inference against a checkpoint");
  AddCommon(attack, common);
  attack->add_option("--model-pre", aa.model_pre, "Checkpoint before private training")->required();
  attack->add_option("--model-post", aa.model_post, "Checkpoint under attack")->required();
  attack->add_option("--red", aa.red, "corpus.json written by gen-corpus/train/run")->required();
  attack->add_option("--setting", aa.setting, "azk | apk | ensemble");
  attack->add_option("--s", aa.s, "Keep providers with more than s questions");
  attack->add_option("--r", aa.r, "APK training fraction");
  attack->add_option("--seeds", aa.seeds, "Number of attack seeds");
  attack->add_option("--features", aa.features, "g1 | g12 | g123 | g1234");

  double sigma = 1.0, q = 1.0, delta = 1e-5, epsilon = 1.0;
  int rounds = 1;
  CLI::App* account = app.add_subcommand("account", "Epsilon of T Poisson-subsampled Gaussian steps");
  account->add_option("--sigma", sigma, "Noise multiplier")->required();
  account->add_option("--q", q, "Sampling rate")->required();
  account->add_option("--rounds", rounds, "Number of steps")->required();
  account->add_option("--delta", delta, "Target delta");

  CLI::App* calibrate = app.add_subcommand("calibrate", "Smallest noise multiplier meeting an epsilon target");
  calibrate->add_option("--epsilon", epsilon, "Target epsilon")->required();
  calibrate->add_option("--q", q, "Sampling rate")->required();
  calibrate->add_option("--rounds", rounds, "Number of steps")->required();
  calibrate->add_option("--delta", delta, "Target delta");

  CLI::App* run = app.add_subcommand("run", "Full experiment: corpus, training grid, evaluation, attacks");
  AddCommon(run, common);

  std::vector<std::string> dirs;
  std::string summary_out;
  CLI::App* summarize = app.add_subcommand("summarize", "Merge summary tables of run directories");
  summarize->add_option("dirs", dirs, "Run directories")->required();
  summarize->add_option("--out", summary_out, "Write summary.csv / attack_summary.csv here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return GenCorpus(common);
    if (*train) return Train(common, mode, train_eps);
    if (*attack) return Attack(common, aa);
    if (*account) {
      const AccountantResult r = Account(sigma, q, rounds, delta);
      std::printf("epsilon=%.6f order=%g\n", r.epsilon, r.best_order);
      return kExitOk;
    }
    if (*calibrate) {
      std::printf("sigma=%.6f\n", CalibrateSigma(epsilon, delta, q, rounds));
      return kExitOk;
    }
    if (*run) return Run(common);
    if (*summarize) {
      std::vector<fs::path> paths(dirs.begin(), dirs.end());
      const SummaryTables t = Summarize(paths);
      if (summary_out.empty()) {
        std::cout << t.utility_csv;
        if (!t.attack_csv.empty()) std::cout << "\n" << t.attack_csv;
      } else {
        WriteFile(fs::path(summary_out) / "summary.csv", t.utility_csv);
        WriteFile(fs::path(summary_out) / "attack_summary.csv", t.attack_csv);
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kInvalidArgument ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
