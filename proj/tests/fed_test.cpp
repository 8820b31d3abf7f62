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

#include "provdp/fed.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "provdp/experiment.hpp"

namespace provdp {
namespace {

struct FedFixture : ::testing::Test {
  void SetUp() override {
    CorpusConfig cc;
    cc.n_providers = 24;
    cc.n_clients = 4;
    cc.docs_max = 5;
    cc.seed = 31;
    corpus = GenerateCorpus(cc);
    SplitConfig sc;
    sc.seed = 2;
    split = SplitRed(corpus, sc);
    ModelConfig mc;
    mc.embed_dim = 6;
    mc.hidden_dim = 8;
    model = std::make_unique<QaModel>(QaModel::ForCorpus(corpus, mc));
    shards = PartitionBlue(corpus, split, 4, 5);
    clients = MakeClientData(*model, corpus, shards);
    all = MakeClientData(*model, corpus, 0, split.train_docs);
    init = model->Init(8);
    hyper.batch_size = 4;
    hyper.local_steps = 3;
    hyper.learning_rate = 1e-3;
  }

  // One client per training provider.
  std::vector<ClientData> SingleProviderClients() const {
    std::vector<ClientData> out;
    const auto by_provider = corpus.docs_by_provider();
    std::vector<int> train(split.train_docs.begin(), split.train_docs.end());
    int id = 0;
    for (int p : split.in_providers) {
      std::vector<int> docs;
      for (int d : by_provider[p]) {
        if (std::binary_search(train.begin(), train.end(), d)) docs.push_back(d);
      }
      out.push_back(MakeClientData(*model, corpus, id++, docs));
    }
    return out;
  }

  FlConfig Fl(int rounds, double q_client, uint64_t seed = 3) const {
    FlConfig f;
    f.rounds = rounds;
    f.q_client = q_client;
    f.hyper = hyper;
    f.seed = seed;
    return f;
  }

  static FlConfig WithDp(FlConfig f, double sigma, double clip, double q_provider = 1.0) {
    DpConfig dp;
    dp.noise_multiplier = sigma;
    dp.clip_norm = clip;
    dp.q_provider = q_provider;
    f.dp = dp;
    return f;
  }

  Corpus corpus;
  CorpusSplit split;
  std::unique_ptr<QaModel> model;
  std::vector<ClientShard> shards;
  std::vector<ClientData> clients;
  ClientData all;
  ParameterVector init;
  TrainHyper hyper;
};

TEST_F(FedFixture, ClientDataGroupsByProvider) {
  std::size_t examples = 0;
  for (const ClientData& c : clients) {
    ASSERT_EQ(c.provider_begin.size(), c.n_providers() + 1);
    for (std::size_t i = 0; i < c.n_providers(); ++i) EXPECT_FALSE(c.provider_examples(i).empty());
    examples += c.examples.size();
  }
  EXPECT_EQ(examples, all.examples.size());
  EXPECT_EQ(MinProviders(clients), 3);
}

TEST_F(FedFixture, SingleClientFedAvgEqualsCentralized) {
  const FlConfig f = Fl(3, 1.0);
  const TrainResult a = RunFedAvg(*model, init, std::span<const ClientData>(&all, 1), f);
  const TrainResult b = RunCentralized(*model, init, all, f);
  EXPECT_EQ(a.params.values, b.params.values);
  // Same thing written out as a local AdamW chain.
  ParameterVector w = init;
  for (int t = 1; t <= 3; ++t) w = TrainLocal(*model, w, all.examples, hyper, fed_internal::LocalSeed(3, t, 0, 0));
  for (std::size_t i = 0; i < w.values.size(); ++i) EXPECT_NEAR(a.params.values[i], w.values[i], 1e-12);
}

TEST_F(FedFixture, IdenticalClientsAverageToOneUpdate) {
  std::vector<ClientData> copies(3, clients[0]);
  const TrainResult a = RunFedAvg(*model, init, copies, Fl(1, 1.0));
  const TrainResult b = RunFedAvg(*model, init, std::span<const ClientData>(&clients[0], 1), Fl(1, 1.0));
  for (std::size_t i = 0; i < init.values.size(); ++i) EXPECT_NEAR(a.params.values[i], b.params.values[i], 1e-14);
}

TEST_F(FedFixture, EmptyFedAvgRoundsLeaveTheModelAlone) {
  const TrainResult r = RunFedAvg(*model, init, clients, Fl(6, 0.01));
  int empty = 0;
  for (const RoundRecord& rec : r.rounds) empty += rec.sampled_clients.empty();
  ASSERT_EQ(empty, 6);
  EXPECT_EQ(r.params.values, init.values);
  EXPECT_EQ(CommunicationCostGb(r.rounds), 0.0);
}

TEST_F(FedFixture, NoiselessUnclippedProviderDpEqualsFedAvgBitwise) {
  const std::vector<ClientData> singles = SingleProviderClients();
  for (int rounds : {1, 2, 4}) {
    const TrainResult fa = RunFedAvg(*model, init, singles, Fl(rounds, 1.0));
    const TrainResult dp = RunFlProviderDp(*model, init, singles, WithDp(Fl(rounds, 1.0), 0.0, 1e9));
    EXPECT_EQ(fa.params.values, dp.params.values) << rounds;
  }
  // One client holding one provider: plain local training.
  const ClientData one = singles.front();
  const TrainResult dp = RunCentralizedDp(*model, init, one, WithDp(Fl(1, 1.0), 0.0, 1e9));
  EXPECT_EQ(dp.params.values, TrainLocal(*model, init, one.examples, hyper, fed_internal::LocalSeed(3, 1, 0, 0)).values);
}

TEST_F(FedFixture, CentralDpIsSingleClientProviderDp) {
  const FlConfig f = WithDp(Fl(2, 0.5), 1.1, 0.5, 0.4);
  const TrainResult a = RunCentralizedDp(*model, init, all, f);
  FlConfig g = f;
  g.q_client = 1.0;
  const TrainResult b = RunFlProviderDp(*model, init, std::span<const ClientData>(&all, 1), g);
  EXPECT_EQ(a.params.values, b.params.values);
  const TrainResult c = RunCentralizedDp(*model, init, all, f);
  EXPECT_EQ(a.params.values, c.params.values);
}

TEST_F(FedFixture, PostClipNormsNeverExceedC) {
  const TrainResult r = RunFlProviderDp(*model, init, clients, WithDp(Fl(3, 0.7), 0.8, 0.01, 0.8));
  int clipped = 0, total = 0;
  for (const RoundRecord& rec : r.rounds) {
    ASSERT_EQ(rec.pre_clip_norms.size(), static_cast<std::size_t>(rec.providers_sampled()));
    for (std::size_t i = 0; i < rec.post_clip_norms.size(); ++i) {
      EXPECT_LE(rec.post_clip_norms[i], 0.01);
      clipped += rec.pre_clip_norms[i] > 0.01;
      ++total;
    }
  }
  EXPECT_GT(total, 0);
  EXPECT_EQ(clipped, total);
  EXPECT_GT(r.rounds[0].mean_clip_ratio(), 0.0);
  EXPECT_LT(r.rounds[0].mean_clip_ratio(), 1.0);
}

TEST_F(FedFixture, RecordedNoiseStdAndEpsilon) {
  const FlConfig f = WithDp(Fl(3, 1.0), 1.5, 0.2);
  const TrainResult r = RunFlProviderDp(*model, init, clients, f);
  EXPECT_EQ(r.min_providers, 3);
  for (const RoundRecord& rec : r.rounds) {
    EXPECT_DOUBLE_EQ(rec.noise_std, 1.5 * 0.2 / std::sqrt(static_cast<double>(rec.sampled_clients.size())));
  }
  ASSERT_TRUE(r.epsilon.has_value());
  EXPECT_DOUBLE_EQ(*r.epsilon, Account(1.5, 1.0, 3, 1e-5).epsilon);
  EXPECT_EQ(r.noise_multiplier, 1.5);
  // Same seed, same trajectory.
  EXPECT_EQ(RunFlProviderDp(*model, init, clients, f).params.values, r.params.values);
  EXPECT_NE(RunFlProviderDp(*model, init, clients, WithDp(Fl(3, 1.0, 4), 1.5, 0.2)).params.values, r.params.values);
}

// Aggregate of |K| noisy client updates carrying no signal: N(0, s^2 C^2/M^2).
TEST(NoiseLaw, AggregateStdIsSigmaCOverM) {
  const double sigma = 1.3, c = 0.7;
  const int m = 3, k = 4;
  const std::size_t dim = 10;
  const double client_std = sigma * c / std::sqrt(static_cast<double>(k));
  double ss = 0;
  long n = 0;
  for (int round = 0; round < 10000; ++round) {
    std::vector<double> agg(dim, 0.0);
    for (int client = 0; client < k; ++client) {
      Rng rng = MakeRng(round, "noise", {static_cast<uint64_t>(client)});
      const auto u = ClientDpUpdate(std::vector<std::vector<double>>(m, std::vector<double>(dim, 0.0)), c,
                                    client_std, m, dim, rng);
      fed_internal::AddInto(agg, u);
    }
    for (double x : agg) {
      ss += x * x;
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(ss / n), sigma * c / m, 0.05 * sigma * c / m);
}

TEST_F(FedFixture, EmptyDpRoundAddsServerNoise) {
  const TrainResult r = RunFlProviderDp(*model, init, clients, WithDp(Fl(1, 0.01), 2.0, 0.3));
  ASSERT_TRUE(r.rounds[0].sampled_clients.empty());
  EXPECT_TRUE(r.rounds[0].server_noise);
  const double want = 2.0 * 0.3 / 3;
  EXPECT_DOUBLE_EQ(r.rounds[0].noise_std, want);
  double ss = 0;
  for (std::size_t i = 0; i < init.values.size(); ++i) {
    const double d = r.params.values[i] - init.values[i];
    ss += d * d;
  }
  EXPECT_NEAR(std::sqrt(ss / init.values.size()), want, 0.1 * want);
}

TEST_F(FedFixture, ProviderSamplingFollowsBinomial) {
  TrainHyper h = hyper;
  h.local_steps = 1;
  FlConfig f = WithDp(Fl(100, 1.0), 1.0, 1.0, 0.3);
  f.hyper = h;
  const TrainResult r = RunCentralizedDp(*model, init, all, f);
  long sampled = 0;
  for (const RoundRecord& rec : r.rounds) sampled += rec.providers_sampled();
  const double n = 100.0 * all.n_providers(), q = 0.3;
  EXPECT_NEAR(static_cast<double>(sampled), n * q, 3 * std::sqrt(n * q * (1 - q)));
}

TEST_F(FedFixture, SecureAggregationMatchesClearSum) {
  FlConfig f = WithDp(Fl(1, 1.0), 0.9, 0.5);
  const TrainResult clear = RunFlProviderDp(*model, init, clients, f);
  f.secure_aggregation = true;
  const TrainResult masked = RunFlProviderDp(*model, init, clients, f);
  const double n = static_cast<double>(clients.size());
  // Quantization n 2^{-21} on the sum, then divided by |K|.
  for (std::size_t i = 0; i < init.values.size(); ++i) {
    EXPECT_LE(std::abs(masked.params.values[i] - clear.params.values[i]), n * std::ldexp(1.0, -21) / n + 1e-15);
  }
  EXPECT_EQ(masked.rounds[0].secagg_wire_bytes, clients.size() * (6 + 8 * init.values.size()));
  EXPECT_EQ(clear.rounds[0].secagg_wire_bytes, 0u);
}

TEST_F(FedFixture, MissingProvidersIsAnError) {
  std::vector<ClientData> bad = clients;
  bad.push_back(MakeClientData(*model, corpus, 99, std::vector<int>{}));
  EXPECT_THROW(RunFlProviderDp(*model, init, bad, WithDp(Fl(1, 1.0), 1.0, 1.0)), Error);
  EXPECT_THROW(RunFedAvg(*model, init, clients, WithDp(Fl(1, 1.0), 1.0, 1.0)), Error);
  EXPECT_THROW(RunFedAvg(*model, init, std::span<const ClientData>{}, Fl(1, 1.0)), Error);
}

TEST(Communication, Arithmetic) {
  EXPECT_NEAR(CommunicationCostGb(10, 2, 1000000, 4), 0.16, 1e-12);
  EXPECT_EQ(CommunicationCostGb(0, 2, 1000000, 4), 0.0);
  EXPECT_THROW(CommunicationCostGb(-1, 2, 10, 4), Error);
  std::vector<RoundRecord> recs(10);
  for (auto& r : recs) r.bytes = RoundBytes(2, 1000000, 4);
  EXPECT_NEAR(CommunicationCostGb(recs), 0.16, 1e-12);
}

TEST_F(FedFixture, RoundBytesMatchSampledClients) {
  const TrainResult r = RunFedAvg(*model, init, clients, Fl(4, 0.5));
  for (const RoundRecord& rec : r.rounds) {
    EXPECT_EQ(rec.bytes, rec.sampled_clients.size() * 2 * init.layout.trainable_count() * 4);
  }
}

// Test utility of non-private, eps=8 and eps=1 centralized training, averaged
// over three seeds.
TEST(UtilityOrdering, PrivacyCostsAccuracyOnAverage) {
  double np = 0, e8 = 0, e1 = 0;
  for (uint64_t seed : {1, 2, 3}) {
    ExperimentConfig c = DefaultExperimentConfig();
    c.seed = seed;
    const ExperimentData d = PrepareExperiment(c);
    auto test_acc = [&](const Variant& v) {
      return EvaluateUtility(d, TrainVariant(c, d, v).params, c.eval).rows[0].second.acc;
    };
    np += test_acc({"central", TrainMode::kCentral, std::nullopt});
    e8 += test_acc({"central-dp-eps8", TrainMode::kCentralDp, 8.0});
    e1 += test_acc({"central-dp-eps1", TrainMode::kCentralDp, 1.0});
  }
  EXPECT_GE(np, e8);
  EXPECT_GE(e8, e1);
}

}  // namespace
}  // namespace provdp
