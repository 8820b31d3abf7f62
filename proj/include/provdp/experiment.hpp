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

// Declarative experiment runs: corpus generation, public pretraining, the
// training grid, utility and memorization evaluation, attacks, CSV outputs
// and the run manifest.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "provdp/attack.hpp"
#include "provdp/corpus.hpp"
#include "provdp/dp.hpp"
#include "provdp/error.hpp"
#include "provdp/fed.hpp"
#include "provdp/io.hpp"
#include "provdp/model.hpp"

namespace provdp {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

enum class TrainMode { kZeroShot, kCentral, kCentralDp, kFedAvg, kFlDp };

inline TrainMode ParseTrainMode(const std::string& s) {
  if (s == "zero-shot") return TrainMode::kZeroShot;
  if (s == "central") return TrainMode::kCentral;
  if (s == "central-dp") return TrainMode::kCentralDp;
  if (s == "fedavg") return TrainMode::kFedAvg;
  if (s == "fl-dp") return TrainMode::kFlDp;
  Fail(ErrorCode::kConfig, "unknown mode '" + s + "' (zero-shot, central, central-dp, fedavg, fl-dp)");
}

inline const char* TrainModeName(TrainMode m) {
  switch (m) {
    case TrainMode::kZeroShot: return "zero-shot";
    case TrainMode::kCentral: return "central";
    case TrainMode::kCentralDp: return "central-dp";
    case TrainMode::kFedAvg: return "fedavg";
    case TrainMode::kFlDp: return "fl-dp";
  }
  return "?";
}

inline bool IsPrivateMode(TrainMode m) { return m == TrainMode::kCentralDp || m == TrainMode::kFlDp; }

struct DpSection {
  std::vector<double> epsilons = {8.0, 4.0, 1.0};
  double delta = 1e-5;
  double clip_norm = 1.0;
  // Set: skip calibration and use this noise multiplier for every run.
  std::optional<double> noise_multiplier;
  int rounds = 10;
  // Per-provider local AdamW steps (T_gd).
  int local_steps = 20;
  double q_provider_central = 0.241;
  double q_provider_federated = 1.0;
  bool secure_aggregation = false;
};

struct AttackSection {
  std::vector<std::string> settings = {"azk", "apk", "ensemble"};
  // Feature sets for APK; AZK always uses g1 and the ensemble g1234.
  std::vector<std::string> features = {"g1", "g12", "g123", "g1234"};
  std::vector<int> s = {5};
  double r = 0.15;
  int n_seeds = 5;
  // Trained variants to attack; empty: every variant.
  std::vector<std::string> models;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  uint64_t seed = 1;
  CorpusConfig corpus;
  SplitConfig split;
  ModelConfig model;
  TrainHyper hyper;
  int pretrain_epochs = 10;
  int central_epochs = 10;
  int fed_rounds = 10;
  int fed_local_epochs = 1;
  double q_client = 0.2;
  int bytes_per_param = 4;
  std::vector<std::string> modes = {"zero-shot", "central", "central-dp", "fedavg", "fl-dp"};
  std::optional<DpSection> dp;
  std::optional<AttackSection> attack;
  EvalOptions eval;
};

// Defaults used by the bundled configs and the acceptance checks.
inline ExperimentConfig DefaultExperimentConfig() {
  ExperimentConfig c;
  c.corpus.n_public_providers = 100;
  c.corpus.customer_mention_prob = 1.0;
  c.model.embed_dim = 32;
  c.model.hidden_dim = 64;
  c.hyper.learning_rate = 1e-3;
  c.hyper.batch_size = 10;
  c.dp = DpSection{};
  c.attack = AttackSection{};
  return c;
}

inline Json ExperimentConfigToJson(const ExperimentConfig& c) {
  Json corpus = CorpusConfigToJson(c.corpus);
  corpus.erase("seed");
  Json j = {{"schema_version", c.schema_version},
            {"seed", c.seed},
            {"corpus", corpus},
            {"split", {{"frac_in", c.split.frac_in},
                       {"red_doc_frac", c.split.red_doc_frac},
                       {"test_doc_frac", c.split.test_doc_frac}}},
            {"model", {{"embed_dim", c.model.embed_dim},
                       {"hidden_dim", c.model.hidden_dim},
                       {"logit_scale", c.model.logit_scale},
                       {"init_scale", c.model.init_scale}}},
            {"training", {{"modes", c.modes},
                          {"learning_rate", c.hyper.learning_rate},
                          {"batch_size", c.hyper.batch_size},
                          {"beta1", c.hyper.beta1},
                          {"beta2", c.hyper.beta2},
                          {"eps", c.hyper.eps},
                          {"weight_decay", c.hyper.weight_decay},
                          {"pretrain_epochs", c.pretrain_epochs},
                          {"central_epochs", c.central_epochs},
                          {"fed_rounds", c.fed_rounds},
                          {"fed_local_epochs", c.fed_local_epochs},
                          {"q_client", c.q_client},
                          {"bytes_per_param", c.bytes_per_param}}},
            {"eval", {{"anls_threshold", c.eval.anls_threshold}, {"conf_threshold", c.eval.conf_threshold}}}};
  if (c.dp) {
    j["dp"] = {{"epsilons", c.dp->epsilons},
               {"delta", c.dp->delta},
               {"clip_norm", c.dp->clip_norm},
               {"rounds", c.dp->rounds},
               {"local_steps", c.dp->local_steps},
               {"q_provider_central", c.dp->q_provider_central},
               {"q_provider_federated", c.dp->q_provider_federated},
               {"secure_aggregation", c.dp->secure_aggregation}};
    if (c.dp->noise_multiplier) j["dp"]["noise_multiplier"] = *c.dp->noise_multiplier;
  }
  if (c.attack) {
    j["attack"] = {{"settings", c.attack->settings}, {"features", c.attack->features}, {"s", c.attack->s},
                   {"r", c.attack->r},               {"n_seeds", c.attack->n_seeds},     {"models", c.attack->models}};
  }
  return j;
}

inline void ValidateExperimentConfig(const ExperimentConfig& c) {
  Require(c.schema_version == kSchemaVersion, ErrorCode::kConfig,
          "unsupported schema_version " + std::to_string(c.schema_version));
  try {
    ValidateCorpusConfig(c.corpus);
    ValidateTrainHyper(c.hyper);
  } catch (const Error& e) {
    Fail(ErrorCode::kConfig, e.what());
  }
  Require(c.pretrain_epochs >= 0 && c.central_epochs >= 0 && c.fed_rounds >= 0 && c.fed_local_epochs >= 1,
          ErrorCode::kConfig, "epoch and round counts must be non-negative (fed_local_epochs >= 1)");
  Require(c.q_client > 0.0 && c.q_client <= 1.0, ErrorCode::kConfig, "q_client must lie in (0, 1]");
  Require(!c.modes.empty(), ErrorCode::kConfig, "training.modes is empty");
  for (const std::string& m : c.modes) {
    if (IsPrivateMode(ParseTrainMode(m))) {
      Require(c.dp.has_value(), ErrorCode::kConfig, "mode " + m + " needs a dp section");
    }
  }
  if (c.dp) {
    Require(!c.dp->epsilons.empty() || c.dp->noise_multiplier, ErrorCode::kConfig, "dp.epsilons is empty");
    for (double e : c.dp->epsilons) Require(e > 0.0, ErrorCode::kConfig, "dp epsilons must be > 0");
    Require(c.dp->delta > 0.0 && c.dp->delta < 1.0, ErrorCode::kConfig, "dp.delta must lie in (0, 1)");
    Require(c.dp->clip_norm > 0.0, ErrorCode::kConfig, "dp.clip_norm must be > 0");
    Require(c.dp->rounds >= 1 && c.dp->local_steps >= 0, ErrorCode::kConfig, "bad dp rounds/local_steps");
    for (double q : {c.dp->q_provider_central, c.dp->q_provider_federated}) {
      Require(q > 0.0 && q <= 1.0, ErrorCode::kConfig, "dp provider sampling rates must lie in (0, 1]");
    }
  }
  if (c.attack) {
    for (const std::string& s : c.attack->settings) ParseAttackSetting(s);
    for (const std::string& f : c.attack->features) ParseFeatureGroups(f);
    Require(c.attack->r > 0.0 && c.attack->r < 1.0, ErrorCode::kConfig, "attack.r must lie in (0, 1)");
    Require(c.attack->n_seeds >= 1, ErrorCode::kConfig, "attack.n_seeds must be >= 1");
    for (int s : c.attack->s) Require(s >= 0, ErrorCode::kConfig, "attack.s must be >= 0");
  }
}

inline ExperimentConfig ExperimentConfigFromJson(const Json& j) {
  ExperimentConfig c = DefaultExperimentConfig();
  StrictObject o(j, "config");
  Require(o.Has("schema_version"), ErrorCode::kConfig, "config: schema_version is required");
  o.Get("schema_version", c.schema_version);
  Require(c.schema_version == kSchemaVersion, ErrorCode::kConfig,
          "unsupported schema_version " + std::to_string(c.schema_version));
  o.Get("seed", c.seed);
  if (o.Has("corpus")) {
    Json corpus = CorpusConfigToJson(c.corpus);
    for (const auto& [k, v] : o.At("corpus").items()) corpus[k] = v;
    Require(!o.At("corpus").contains("seed"), ErrorCode::kConfig, "corpus: seed comes from the global seed");
    c.corpus = CorpusConfigFromJson(corpus);
  }
  if (o.Has("split")) {
    StrictObject s(o.At("split"), "split");
    s.Get("frac_in", c.split.frac_in);
    s.Get("red_doc_frac", c.split.red_doc_frac);
    s.Get("test_doc_frac", c.split.test_doc_frac);
    s.Finish();
  }
  if (o.Has("model")) {
    StrictObject m(o.At("model"), "model");
    m.Get("embed_dim", c.model.embed_dim);
    m.Get("hidden_dim", c.model.hidden_dim);
    m.Get("logit_scale", c.model.logit_scale);
    m.Get("init_scale", c.model.init_scale);
    m.Finish();
  }
  if (o.Has("training")) {
    StrictObject t(o.At("training"), "training");
    t.Get("modes", c.modes);
    t.Get("learning_rate", c.hyper.learning_rate);
    t.Get("batch_size", c.hyper.batch_size);
    t.Get("beta1", c.hyper.beta1);
    t.Get("beta2", c.hyper.beta2);
    t.Get("eps", c.hyper.eps);
    t.Get("weight_decay", c.hyper.weight_decay);
    t.Get("pretrain_epochs", c.pretrain_epochs);
    t.Get("central_epochs", c.central_epochs);
    t.Get("fed_rounds", c.fed_rounds);
    t.Get("fed_local_epochs", c.fed_local_epochs);
    t.Get("q_client", c.q_client);
    t.Get("bytes_per_param", c.bytes_per_param);
    t.Finish();
  }
  if (o.Has("eval")) {
    StrictObject e(o.At("eval"), "eval");
    e.Get("anls_threshold", c.eval.anls_threshold);
    e.Get("conf_threshold", c.eval.conf_threshold);
    e.Finish();
  }
  // Absent sections keep their defaults; null removes them.
  if (o.Has("dp") && o.At("dp").is_null()) c.dp.reset();
  if (o.Has("dp") && !o.At("dp").is_null()) {
    DpSection d;
    StrictObject s(o.At("dp"), "dp");
    s.Get("epsilons", d.epsilons);
    s.Get("delta", d.delta);
    s.Get("clip_norm", d.clip_norm);
    if (s.Has("noise_multiplier")) {
      double v = 0.0;
      s.Get("noise_multiplier", v);
      d.noise_multiplier = v;
    }
    s.Get("rounds", d.rounds);
    s.Get("local_steps", d.local_steps);
    s.Get("q_provider_central", d.q_provider_central);
    s.Get("q_provider_federated", d.q_provider_federated);
    s.Get("secure_aggregation", d.secure_aggregation);
    s.Finish();
    c.dp = d;
  }
  if (o.Has("attack") && o.At("attack").is_null()) c.attack.reset();
  if (o.Has("attack") && !o.At("attack").is_null()) {
    AttackSection a;
    StrictObject s(o.At("attack"), "attack");
    s.Get("settings", a.settings);
    s.Get("features", a.features);
    s.Get("s", a.s);
    s.Get("r", a.r);
    s.Get("n_seeds", a.n_seeds);
    s.Get("models", a.models);
    s.Finish();
    c.attack = a;
  }
  o.Finish();
  ValidateExperimentConfig(c);
  return c;
}

inline ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  return ExperimentConfigFromJson(ParseJson(ReadFile(path), path.string()));
}

// Everything derived from the config before training: corpus, split, shards,
// model, encoded data and the public-pretrained starting point.
struct ExperimentData {
  Corpus corpus;
  CorpusSplit split;
  std::vector<ClientShard> shards;
  QaModel model;
  std::vector<ClientData> clients;
  ClientData all_train;
  ParameterVector init;       // random initialization
  ParameterVector zero_shot;  // after public pretraining
};

inline Corpus MakeCorpus(const ExperimentConfig& c) {
  CorpusConfig cc = c.corpus;
  cc.seed = DeriveSeed(c.seed, "corpus");
  return GenerateCorpus(cc);
}

inline CorpusSplit MakeSplit(const ExperimentConfig& c, const Corpus& corpus) {
  SplitConfig sc = c.split;
  sc.seed = DeriveSeed(c.seed, "split");
  return SplitRed(corpus, sc);
}

inline ParameterVector Pretrain(const QaModel& model, const ParameterVector& init,
                                std::span<const TrainingExample> public_examples, const TrainHyper& base,
                                int epochs, uint64_t seed) {
  ParameterVector p = init;
  if (public_examples.empty()) return p;
  TrainHyper h = base;
  h.local_epochs = 1;
  for (int e = 0; e < epochs; ++e) {
    p = TrainLocal(model, p, public_examples, h, DeriveSeed(seed, "pretrain", {static_cast<uint64_t>(e)}));
  }
  return p;
}

inline ExperimentData PrepareExperiment(const ExperimentConfig& c) {
  Corpus corpus = MakeCorpus(c);
  CorpusSplit split = MakeSplit(c, corpus);
  std::vector<ClientShard> shards = PartitionBlue(corpus, split, c.corpus.n_clients, DeriveSeed(c.seed, "partition"));
  QaModel model = QaModel::ForCorpus(corpus, c.model);
  std::vector<ClientData> clients = MakeClientData(model, corpus, shards);
  ClientData all = MakeClientData(model, corpus, 0, split.train_docs);
  ParameterVector init = model.Init(DeriveSeed(c.seed, "init"), c.model.init_scale);
  const std::vector<TrainingExample> pub = EncodeDocs(model, corpus, split.public_docs);
  ParameterVector zero = Pretrain(model, init, pub, c.hyper, c.pretrain_epochs, c.seed);
  return {std::move(corpus), std::move(split), std::move(shards), std::move(model),
          std::move(clients), std::move(all),  std::move(init),   std::move(zero)};
}

struct Variant {
  std::string name;  // e.g. "central-dp-eps8"
  TrainMode mode = TrainMode::kCentral;
  std::optional<double> epsilon;
};

inline std::string EpsilonLabel(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", eps);
  return buf;
}

inline std::vector<Variant> ExpandVariants(const ExperimentConfig& c) {
  std::vector<Variant> out;
  for (const std::string& m : c.modes) {
    const TrainMode mode = ParseTrainMode(m);
    if (!IsPrivateMode(mode)) {
      out.push_back({m, mode, std::nullopt});
      continue;
    }
    if (c.dp->noise_multiplier && c.dp->epsilons.empty()) {
      out.push_back({m, mode, std::nullopt});
      continue;
    }
    for (double e : c.dp->epsilons) out.push_back({m + "-eps" + EpsilonLabel(e), mode, e});
  }
  return out;
}

inline FlConfig MakeFlConfig(const ExperimentConfig& c, const Variant& v) {
  FlConfig f;
  f.hyper = c.hyper;
  f.seed = DeriveSeed(c.seed, "train", {static_cast<uint64_t>(v.mode)});
  f.bytes_per_param = c.bytes_per_param;
  switch (v.mode) {
    case TrainMode::kZeroShot:
      f.rounds = 0;
      break;
    case TrainMode::kCentral:
      f.rounds = c.central_epochs;
      f.hyper.local_epochs = 1;
      f.bytes_per_param = 0;  // nothing is transmitted
      break;
    case TrainMode::kFedAvg:
      f.rounds = c.fed_rounds;
      f.q_client = c.q_client;
      f.hyper.local_epochs = c.fed_local_epochs;
      break;
    case TrainMode::kCentralDp:
    case TrainMode::kFlDp: {
      const bool central = v.mode == TrainMode::kCentralDp;
      f.rounds = c.dp->rounds;
      f.q_client = central ? 1.0 : c.q_client;
      f.hyper.local_steps = c.dp->local_steps;
      f.hyper.local_epochs = 0;
      f.secure_aggregation = c.dp->secure_aggregation && !central;
      if (central) f.bytes_per_param = 0;
      DpConfig dp;
      dp.delta = c.dp->delta;
      dp.clip_norm = c.dp->clip_norm;
      dp.q_provider = central ? c.dp->q_provider_central : c.dp->q_provider_federated;
      if (v.epsilon) dp.epsilon_target = *v.epsilon;
      if (c.dp->noise_multiplier) dp.noise_multiplier = *c.dp->noise_multiplier;
      f.dp = dp;
      break;
    }
  }
  return f;
}

inline TrainResult TrainVariant(const ExperimentConfig& c, const ExperimentData& d, const Variant& v) {
  const FlConfig f = MakeFlConfig(c, v);
  switch (v.mode) {
    case TrainMode::kZeroShot:
      return TrainResult{d.zero_shot, {}, 0.0, std::nullopt, 0};
    case TrainMode::kCentral:
      return RunCentralized(d.model, d.zero_shot, d.all_train, f);
    case TrainMode::kCentralDp:
      return RunCentralizedDp(d.model, d.zero_shot, d.all_train, f);
    case TrainMode::kFedAvg:
      return RunFedAvg(d.model, d.zero_shot, d.clients, f);
    case TrainMode::kFlDp:
      return RunFlProviderDp(d.model, d.zero_shot, d.clients, f);
  }
  Fail(ErrorCode::kInvalidArgument, "unknown mode");
}

// Memorization test: generic-key questions asked on documents with every
// trace of the answer redacted. Documents where redaction removes nothing are
// excluded.
inline std::vector<ScoredAnswer> MemorizationAnswers(const QaModel& model, const ParameterVector& params,
                                                     const Corpus& corpus, std::span<const int> doc_ids) {
  const auto by_doc = corpus.examples_by_doc();
  std::vector<ScoredAnswer> out;
  for (int d : doc_ids) {
    const Document& doc = corpus.document(d);
    for (int e : by_doc.at(d)) {
      const QAExample& qa = corpus.examples[e];
      if (!corpus.key(qa.key).generic) continue;
      const Document redacted = Redact(doc, qa.answer);
      if (redacted.tokens.size() == doc.tokens.size()) continue;
      const Prediction p = model.Forward(params, model.Encode(redacted, corpus.question(qa), qa.key));
      out.push_back({p.answer, qa.answer, p.conf});
    }
  }
  return out;
}

struct UtilityTable {
  std::vector<std::pair<std::string, UtilityReport>> rows;

  const UtilityReport& at(const std::string& set) const {
    for (const auto& [name, r] : rows) {
      if (name == set) return r;
    }
    Fail(ErrorCode::kOutOfRange, "no utility row " + set);
  }
};

inline UtilityTable EvaluateUtility(const ExperimentData& d, const ParameterVector& params, const EvalOptions& eval) {
  UtilityTable t;
  const auto eval_docs = [&](const std::vector<int>& docs) {
    return Evaluate(d.model, params, EncodeDocs(d.model, d.corpus, docs), eval);
  };
  t.rows.emplace_back("test", eval_docs(d.split.test_docs));
  t.rows.emplace_back("red_in", eval_docs(d.split.red_in_docs));
  t.rows.emplace_back("red_out", eval_docs(d.split.red_out_docs));
  t.rows.emplace_back("mem_in", Score(MemorizationAnswers(d.model, params, d.corpus, d.split.red_in_docs), eval));
  t.rows.emplace_back("mem_out", Score(MemorizationAnswers(d.model, params, d.corpus, d.split.red_out_docs), eval));
  return t;
}

inline std::string UtilityCsv(const UtilityTable& t) {
  CsvWriter w({"set", "acc", "anls", "n", "acc_conf_hi", "anls_conf_hi"});
  for (const auto& [name, r] : t.rows) {
    w.Row({name, FormatNumber(r.acc), FormatNumber(r.anls), std::to_string(r.n),
           r.acc_conf_hi ? FormatNumber(*r.acc_conf_hi) : "", r.anls_conf_hi ? FormatNumber(*r.anls_conf_hi) : ""});
  }
  return w.str();
}

inline std::string RoundsCsv(std::span<const RoundRecord> rounds) {
  CsvWriter w({"round", "sampled_clients", "providers_sampled", "mean_clip_ratio", "noise_std", "bytes"});
  for (const RoundRecord& r : rounds) {
    w.Row({std::to_string(r.round), std::to_string(r.sampled_clients.size()), std::to_string(r.providers_sampled()),
           FormatNumber(r.mean_clip_ratio(), 9), FormatNumber(r.noise_std, 9), std::to_string(r.bytes)});
  }
  return w.str();
}

inline std::string MetricRowsCsv(std::span<const MetricRow> rows) {
  CsvWriter w({"provider_id", "example_id", "doc_id", "member", "acc", "nls", "loss", "conf", "delta_loss",
               "delta_conf", "nls_mem", "delta_nls_mem"});
  for (const MetricRow& r : rows) {
    w.Row({std::to_string(r.provider_id), std::to_string(r.example_id), std::to_string(r.doc_id),
           r.member ? "1" : "0", FormatNumber(r.acc), FormatNumber(r.nls), FormatNumber(r.loss, 9),
           FormatNumber(r.conf, 9), FormatNumber(r.delta_loss, 9), FormatNumber(r.delta_conf, 9),
           r.nls_mem ? FormatNumber(*r.nls_mem) : "", r.delta_nls_mem ? FormatNumber(*r.delta_nls_mem) : ""});
  }
  return w.str();
}

struct AttackResultRow {
  std::string model;
  AttackSetting setting = AttackSetting::kAzk;
  FeatureGroups groups = 1;
  int s = 0;
  double r = 0.0;
  AttackOutcome outcome;
};

// Expands settings x feature sets x s into attack configs.
inline std::vector<AttackConfig> ExpandAttacks(const AttackSection& a, uint64_t seed) {
  std::vector<AttackConfig> out;
  for (const std::string& name : a.settings) {
    const AttackSetting setting = ParseAttackSetting(name);
    std::vector<std::string> feats;
    if (setting == AttackSetting::kAzk) feats = {"g1"};
    if (setting == AttackSetting::kEnsemble) feats = {"g1234"};
    if (setting == AttackSetting::kApk) feats = a.features;
    for (const std::string& f : feats) {
      for (int s : a.s) {
        AttackConfig c;
        c.setting = setting;
        c.groups = ParseFeatureGroups(f);
        c.s = s;
        c.r = a.r;
        c.n_seeds = a.n_seeds;
        c.seed = DeriveSeed(seed, "attack");
        out.push_back(c);
      }
    }
  }
  return out;
}

inline void AppendAttackCsv(CsvWriter& w, const std::string& model, const AttackConfig& c, const AttackOutcome& o) {
  const std::string head[] = {model, AttackSettingName(c.setting), FeatureGroupsName(c.groups), std::to_string(c.s),
                              FormatNumber(c.r, 2)};
  const auto row = [&](const std::string& seed, double acc) {
    w.Row({head[0], head[1], head[2], head[3], head[4], seed, FormatNumber(acc, 4)});
  };
  for (std::size_t i = 0; i < o.per_seed.size(); ++i) row(std::to_string(i), o.per_seed[i]);
  row("mean", o.mean);
  row("std", o.std);
}

inline std::vector<int> RedDocs(const CorpusSplit& split) {
  std::vector<int> red = split.red_in_docs;
  red.insert(red.end(), split.red_out_docs.begin(), split.red_out_docs.end());
  return red;
}

struct VariantOutcome {
  Variant variant;
  TrainResult train;
  UtilityTable utility;
};

struct RunManifest {
  std::string config_hash;
  std::vector<std::string> files;
  std::vector<std::string> completed_stages;
  double wall_clock_seconds = 0.0;
  std::string status = "complete";
  std::string error;
};

inline Json ManifestToJson(const RunManifest& m) {
  Json j = {{"tool", "provdp"},
            {"version", kToolVersion},
            {"config_hash", m.config_hash},
            {"files", m.files},
            {"completed_stages", m.completed_stages},
            {"wall_clock_seconds", m.wall_clock_seconds},
            {"status", m.status}};
  if (!m.error.empty()) j["error"] = m.error;
  return j;
}

struct ExperimentResult {
  RunManifest manifest;
  std::vector<VariantOutcome> variants;
  std::vector<AttackResultRow> attacks;
};

struct RunOptions {
  bool quiet = true;
  // Called with a short progress line per stage when not quiet.
  std::function<void(const std::string&)> log;
};

// Runs the full pipeline and writes every output under `out_dir`. On failure
// a manifest listing the completed stages is still written, then the error
// propagates.
inline ExperimentResult RunExperiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                      const RunOptions& opts = {}) {
  ValidateExperimentConfig(config);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  RunManifest& m = result.manifest;
  m.config_hash = CanonicalHash(ExperimentConfigToJson(config));
  std::filesystem::create_directories(out_dir);
  const auto emit = [&](const std::string& rel, const std::string& bytes) {
    WriteFile(out_dir / rel, bytes);
    m.files.push_back(rel);
  };
  const auto log = [&](const std::string& s) {
    if (!opts.quiet && opts.log) opts.log(s);
  };
  const auto finish_manifest = [&] {
    m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<std::string> files = m.files;
    files.push_back("manifest.json");
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    m.files = files;
    WriteFile(out_dir / "manifest.json", ManifestToJson(m).dump(2) + "\n");
  };

  try {
    emit("config.json", ExperimentConfigToJson(config).dump(2) + "\n");
    log("corpus");
    const ExperimentData data = PrepareExperiment(config);
    emit("corpus.json", [&] {
      Json j = CorpusToJson(data.corpus);
      j["split"] = SplitToJson(data.split);
      return j.dump() + "\n";
    }());
    m.completed_stages.push_back("corpus");

    CsvWriter summary({"method", "epsilon", "anls", "acc", "communication_gb"});
    for (const Variant& v : ExpandVariants(config)) {
      log("train " + v.name);
      VariantOutcome out{v, TrainVariant(config, data, v), {}};
      out.utility = EvaluateUtility(data, out.train.params, config.eval);
      emit("checkpoints/" + v.name + ".ckpt", SerializeCheckpoint(out.train.params));
      emit("rounds/" + v.name + ".csv", RoundsCsv(out.train.rounds));
      emit("utility/" + v.name + ".csv", UtilityCsv(out.utility));
      const UtilityReport& test = out.utility.at("test");
      summary.Row({TrainModeName(v.mode), v.epsilon ? EpsilonLabel(*v.epsilon) : "inf", FormatNumber(test.anls),
                   FormatNumber(test.acc), FormatNumber(CommunicationCostGb(out.train.rounds), 9)});
      m.completed_stages.push_back("train:" + v.name);
      result.variants.push_back(std::move(out));
    }
    emit("summary.csv", summary.str());

    if (config.attack) {
      CsvWriter attack({"model", "setting", "features", "s", "r", "seed", "accuracy"});
      const std::set<int> members(data.split.in_providers.begin(), data.split.in_providers.end());
      const std::vector<int> red = RedDocs(data.split);
      for (const VariantOutcome& v : result.variants) {
        const auto& wanted = config.attack->models;
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), v.variant.name) == wanted.end()) continue;
        log("attack " + v.variant.name);
        const std::vector<MetricRow> rows =
            ExtractMetrics(data.model, data.zero_shot, v.train.params, data.corpus, red, members);
        emit("metrics/" + v.variant.name + ".csv", MetricRowsCsv(rows));
        for (const AttackConfig& ac : ExpandAttacks(*config.attack, config.seed)) {
          AttackResultRow row{v.variant.name, ac.setting, ac.groups, ac.s, ac.r, EvalAttack(rows, ac)};
          AppendAttackCsv(attack, v.variant.name, ac, row.outcome);
          result.attacks.push_back(std::move(row));
        }
      }
      emit("attack.csv", attack.str());
      m.completed_stages.push_back("attack");
    }
  } catch (const std::exception& e) {
    m.status = "failed";
    m.error = e.what();
    finish_manifest();
    throw;
  }
  finish_manifest();
  return result;
}

// Merges the summary (and attack) tables of several run directories.
struct SummaryTables {
  std::string utility_csv;
  std::string attack_csv;
};

inline SummaryTables Summarize(const std::vector<std::filesystem::path>& run_dirs) {
  Require(!run_dirs.empty(), ErrorCode::kInvalidArgument, "no run directories given");
  static const std::vector<std::string> kSummaryCols = {"method", "epsilon", "anls", "acc", "communication_gb"};
  static const std::vector<std::string> kAttackCols = {"model", "setting", "features", "s", "r", "seed", "accuracy"};
  const auto check_header = [](const std::vector<std::string>& got, const std::vector<std::string>& want,
                               const std::string& where) {
    for (const std::string& c : want) {
      Require(std::find(got.begin(), got.end(), c) != got.end(), ErrorCode::kIo,
              where + ": missing column '" + c + "'");
    }
  };
  const auto col = [](const std::vector<std::string>& header, const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  static const std::map<std::string, int> kMethodOrder = {
      {"zero-shot", 0}, {"central", 1}, {"central-dp", 2}, {"fedavg", 3}, {"fl-dp", 4}};

  struct URow {
    std::string run, method, eps, anls, acc, gb;
  };
  std::vector<URow> urows;
  CsvWriter attack({"run", "model", "setting", "features", "s", "mean", "std"});
  for (const auto& dir : run_dirs) {
    Require(std::filesystem::exists(dir / "manifest.json"), ErrorCode::kIo, dir.string() + ": no manifest.json");
    const std::string run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    const auto table = ParseCsv(ReadFile(dir / "summary.csv"));
    Require(!table.empty(), ErrorCode::kIo, dir.string() + "/summary.csv is empty");
    check_header(table[0], kSummaryCols, dir.string() + "/summary.csv");
    for (std::size_t i = 1; i < table.size(); ++i) {
      const auto& r = table[i];
      Require(r.size() == table[0].size(), ErrorCode::kIo, dir.string() + "/summary.csv: ragged row");
      urows.push_back({run, r[col(table[0], "method")], r[col(table[0], "epsilon")], r[col(table[0], "anls")],
                       r[col(table[0], "acc")], r[col(table[0], "communication_gb")]});
    }
    if (std::filesystem::exists(dir / "attack.csv")) {
      const auto at = ParseCsv(ReadFile(dir / "attack.csv"));
      Require(!at.empty(), ErrorCode::kIo, dir.string() + "/attack.csv is empty");
      check_header(at[0], kAttackCols, dir.string() + "/attack.csv");
      std::map<std::vector<std::string>, std::pair<std::string, std::string>> agg;
      std::vector<std::vector<std::string>> order;
      for (std::size_t i = 1; i < at.size(); ++i) {
        const auto& r = at[i];
        std::vector<std::string> key = {r[col(at[0], "model")], r[col(at[0], "setting")], r[col(at[0], "features")],
                                        r[col(at[0], "s")]};
        const std::string seed = r[col(at[0], "seed")];
        if (!agg.count(key)) {
          order.push_back(key);
          agg[key];
        }
        if (seed == "mean") agg[key].first = r[col(at[0], "accuracy")];
        if (seed == "std") agg[key].second = r[col(at[0], "accuracy")];
      }
      for (const auto& key : order) {
        attack.Row({run, key[0], key[1], key[2], key[3], agg[key].first, agg[key].second});
      }
    }
  }
  Require(!urows.empty(), ErrorCode::kIo, "no summary rows found");
  const auto eps_value = [](const std::string& e) { return e == "inf" ? 1e300 : std::stod(e); };
  std::stable_sort(urows.begin(), urows.end(), [&](const URow& a, const URow& b) {
    const int ma = kMethodOrder.count(a.method) ? kMethodOrder.at(a.method) : 99;
    const int mb = kMethodOrder.count(b.method) ? kMethodOrder.at(b.method) : 99;
    if (ma != mb) return ma < mb;
    return eps_value(a.eps) > eps_value(b.eps);
  });
  CsvWriter util({"run", "method", "epsilon", "anls", "acc", "communication_gb"});
  for (const URow& r : urows) util.Row({r.run, r.method, r.eps, r.anls, r.acc, r.gb});
  return {util.str(), attack.str()};
}

}  // namespace provdp
