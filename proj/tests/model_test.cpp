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

#include "provdp/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <random>

namespace provdp {
namespace {

// A hand-built model with 97 parameters.
QaModel TinyModel() {
  ModelDims d;
  d.vocab_size = 6;
  d.n_keys = 2;
  d.visual_dim = 2;
  d.embed_dim = 3;
  d.hidden_dim = 4;
  d.n_answers = 4;
  return QaModel(d, 2.0, Vocabulary("<oov>", {"a", "b", "c", "d", "e"}), Vocabulary("", {"a", "b", "x"}));
}

ParameterVector RandomParams(const QaModel& m, uint64_t seed, double scale = 0.5) {
  ParameterVector p = m.Zeros();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : p.values) v = g(rng);
  return p;
}

TrainingExample RandomExample(const QaModel& m, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tok(0, m.dims().vocab_size - 1), n(0, 4), key(-1, m.dims().n_keys - 1),
      ans(0, m.dims().n_answers - 1);
  std::normal_distribution<double> g;
  TrainingExample ex;
  for (int i = n(rng); i > 0; --i) ex.input.doc_tokens.push_back(tok(rng));
  for (int i = n(rng); i > 0; --i) ex.input.question_tokens.push_back(tok(rng));
  ex.input.key = key(rng);
  ex.input.visual = {g(rng), g(rng)};
  ex.gold = ans(rng);
  return ex;
}

struct SmallCorpusFixture : ::testing::Test {
  void SetUp() override {
    CorpusConfig cc;
    cc.n_providers = 20;
    cc.n_clients = 2;
    cc.seed = 5;
    corpus = GenerateCorpus(cc);
    model = std::make_unique<QaModel>(QaModel::ForCorpus(corpus, ModelConfig{}));
  }
  Corpus corpus;
  std::unique_ptr<QaModel> model;
};

TEST(Layout, TinyModelHasAboutOneHundredParameters) {
  const QaModel m = TinyModel();
  EXPECT_EQ(m.layout().total(), 97u);
  EXPECT_EQ(m.layout().trainable_count(), 97u);
}

TEST(Forward, ZeroParamsGiveUniformConfidence) {
  const QaModel m = TinyModel();
  std::mt19937_64 rng(1);
  const TrainingExample ex = RandomExample(m, rng);
  const Prediction p = m.Forward(m.Zeros(), ex.input, ex.gold);
  EXPECT_NEAR(p.conf, 1.0 / 4, 1e-12);
  EXPECT_NEAR(*p.loss, std::log(4.0), 1e-12);
}

TEST(Forward, DeterministicAndNormalized) {
  const QaModel m = TinyModel();
  const ParameterVector p = RandomParams(m, 2);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const TrainingExample ex = RandomExample(m, rng);
    const Prediction a = m.Forward(p, ex.input, ex.gold), b = m.Forward(p, ex.input, ex.gold);
    EXPECT_EQ(a.answer, b.answer);
    EXPECT_EQ(a.logits, b.logits);
    const auto probs = m.Probabilities(p, ex.input);
    double sum = 0.0;
    for (double q : probs) sum += q;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(a.conf, probs[a.answer_id]);
    EXPECT_NEAR(*a.loss, -std::log(probs[ex.gold]), 1e-9);
  }
}

TEST(Forward, RejectsForeignLayout) {
  const QaModel m = TinyModel();
  ParameterVector p = m.Zeros();
  p.values.pop_back();
  std::mt19937_64 rng(3);
  EXPECT_THROW(m.Forward(p, RandomExample(m, rng).input), Error);
}

TEST(Gradient, MatchesCentralFiniteDifferences) {
  const QaModel m = TinyModel();
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ParameterVector p = RandomParams(m, 100 + trial);
    std::vector<TrainingExample> batch_store;
    for (int i = 0; i < 3; ++i) batch_store.push_back(RandomExample(m, rng));
    std::vector<const TrainingExample*> batch;
    for (const auto& e : batch_store) batch.push_back(&e);
    std::vector<double> grad(p.values.size());
    m.LossAndGradient(p.values, batch, grad);
    std::vector<double> fd(p.values.size());
    std::vector<double> w = p.values;
    const double h = 1e-5;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + h;
      const double up = m.Loss(w, batch);
      w[i] = keep - h;
      const double down = m.Loss(w, batch);
      w[i] = keep;
      fd[i] = (up - down) / (2 * h);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      num += (grad[i] - fd[i]) * (grad[i] - fd[i]);
      den += fd[i] * fd[i];
    }
    const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  const QaModel m = TinyModel();
  TrainHyper h;
  h.learning_rate = 0.1;
  h.weight_decay = 0.5;
  ParameterVector p = RandomParams(m, 4);
  const std::vector<double> before = p.values;
  std::vector<double> g(p.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.01 * (static_cast<double>(i) - 40.0);
  AdamW opt(h, p.values.size());
  opt.Step(p.values, g, p.layout);
  for (std::size_t i = 0; i < g.size(); ++i) {
    // Bias-corrected first step: mhat = g, vhat = g^2.
    const double want = before[i] - 0.1 * (g[i] / (std::abs(g[i]) + h.eps) + 0.5 * before[i]);
    EXPECT_NEAR(p.values[i], want, 1e-12);
  }
}

TEST(AdamW, SkipsFrozenSegments) {
  const QaModel m = TinyModel();
  ParameterVector p = RandomParams(m, 4);
  for (Segment& s : p.layout.segments) s.trainable = s.name != "token_embedding";
  const std::vector<double> before = p.values;
  std::vector<double> g(p.values.size(), 1.0);
  AdamW opt(TrainHyper{}, p.values.size());
  opt.Step(p.values, g, p.layout);
  const Segment& tok = p.layout.find("token_embedding");
  for (std::size_t i = tok.offset; i < tok.offset + tok.size(); ++i) EXPECT_EQ(p.values[i], before[i]);
  EXPECT_NE(p.values.back(), before.back());
}

TEST_F(SmallCorpusFixture, SingleExampleIsMemorizedWithDefaultLearningRate) {
  const std::vector<TrainingExample> one = {model->Encode(corpus, corpus.examples[0])};
  TrainHyper h;  // lr 2e-4
  h.batch_size = 1;
  h.local_steps = 200;
  const ParameterVector p = TrainLocal(*model, model->Init(1), one, h, 42);
  const double loss = *model->Forward(p, one[0].input, one[0].gold).loss;
  EXPECT_LT(loss, 0.01);
}

TEST_F(SmallCorpusFixture, TrainLocalIdentityAndDeterminism) {
  const auto examples = EncodeDocs(*model, corpus, std::vector<int>{0, 1, 2});
  const ParameterVector init = model->Init(3);
  TrainHyper h;
  h.local_steps = 0;
  EXPECT_EQ(TrainLocal(*model, init, examples, h, 1).values, init.values);
  h.local_steps = 7;
  const ParameterVector a = TrainLocal(*model, init, examples, h, 9), b = TrainLocal(*model, init, examples, h, 9);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, init.values);
  EXPECT_THROW(TrainLocal(*model, init, std::span<const TrainingExample>{}, h, 1), Error);
}

TEST_F(SmallCorpusFixture, NonFiniteLossAborts) {
  const auto examples = EncodeDocs(*model, corpus, std::vector<int>{0});
  ParameterVector p = model->Init(3);
  p.segment("output_bias")[0] = std::numeric_limits<double>::quiet_NaN();
  TrainHyper h;
  h.local_steps = 1;
  try {
    TrainLocal(*model, p, examples, h, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumerical);
  }
}

TEST_F(SmallCorpusFixture, TrainingLossDecreasesOnProviderConstantKeys) {
  std::vector<TrainingExample> train;
  for (const QAExample& qa : corpus.examples) {
    if (corpus.key(qa.key).generic && corpus.document(qa.doc_id).provider_id < 4) {
      train.push_back(model->Encode(corpus, qa));
    }
  }
  std::vector<const TrainingExample*> all;
  for (const auto& e : train) all.push_back(&e);
  const ParameterVector init = model->Init(2);
  TrainHyper h;
  h.batch_size = 4;
  double prev = model->Loss(init.values, all);
  for (int steps = 5; steps <= 50; steps += 5) {
    h.local_steps = steps;
    const double loss = model->Loss(TrainLocal(*model, init, train, h, 8).values, all);
    EXPECT_LT(loss, prev) << "after " << steps << " steps";
    prev = loss;
  }
}

TEST_F(SmallCorpusFixture, UntrainedModelAbstains) {
  const ParameterVector p = model->Init(1);
  const auto ex = model->Encode(corpus, corpus.examples[3]);
  const Prediction pred = model->Forward(p, ex.input, ex.gold);
  EXPECT_EQ(pred.answer, "");
  EXPECT_NEAR(pred.conf, 1.0 / model->dims().n_answers, 1e-12);
}

TEST(Score, ThresholdAndConfidenceColumns) {
  const std::vector<ScoredAnswer> a = {{"abcd", "abcd", 0.95}, {"xbcy", "abcd", 0.5}};
  const UtilityReport r = Score(a);
  EXPECT_DOUBLE_EQ(r.acc, 50.0);
  EXPECT_DOUBLE_EQ(r.anls, 75.0);  // NLS 0.5 is kept at tau = 0.5
  ASSERT_TRUE(r.acc_conf_hi.has_value());
  EXPECT_EQ(r.n_conf_hi, 1);
  EXPECT_DOUBLE_EQ(*r.acc_conf_hi, 100.0);

  // NLS 0.4 falls under tau and counts as zero.
  const std::vector<ScoredAnswer> b = {{"wmtw", "wmtw", 0.1}, {"abcdefghij", "abcdxxxxxx", 0.1}};
  const UtilityReport rb = Score(b);
  EXPECT_DOUBLE_EQ(rb.anls, 50.0);
  EXPECT_FALSE(rb.acc_conf_hi.has_value());
  EXPECT_THROW(Score(std::span<const ScoredAnswer>{}), Error);
}

TEST(Score, DateTypoScore) { EXPECT_DOUBLE_EQ(Nls("10/17/18", "10/17/19"), 0.875); }

TEST(Score, AnlsNeverBelowAcc) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> c('a', 'd'), len(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredAnswer> v;
    for (int i = 0; i < 20; ++i) {
      std::string p(len(rng), 'a'), g(len(rng), 'a');
      for (char& ch : p) ch = static_cast<char>(c(rng));
      for (char& ch : g) ch = static_cast<char>(c(rng));
      v.push_back({p, g, 0.5});
    }
    const UtilityReport r = Score(v);
    EXPECT_GE(r.anls, r.acc);
  }
}

TEST(Redact, RemovesExactAndFuzzyMatches) {
  Document d;
  d.tokens = {"acme", "inc", "total"};
  d.visual_signature = {0.3, -1.2};
  const Document r = Redact(d, "acme");
  EXPECT_EQ(r.tokens, (std::vector<std::string>{"inc", "total"}));
  EXPECT_EQ(r.visual_signature, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(d.tokens.size(), 3u);
  EXPECT_EQ(Redact(d, "acmee").tokens, (std::vector<std::string>{"inc", "total"}));
  EXPECT_EQ(Redact(d, "").tokens, d.tokens);
  for (const std::string& t : Redact(d, "acmee").tokens) EXPECT_LT(Nls(t, "acmee"), kDefaultRedactThreshold);
}

TEST(AnswerForm, Features) {
  const auto f = AnswerForm("ab@c.d");
  EXPECT_DOUBLE_EQ(f[0], 4.0 / 6);
  EXPECT_DOUBLE_EQ(f[2], 1.0);
  EXPECT_DOUBLE_EQ(f[4], 1.0);
  EXPECT_DOUBLE_EQ(f[6], 1.0);
  for (double v : AnswerForm("")) EXPECT_EQ(v, 0.0);
}

TEST_F(SmallCorpusFixture, CheckpointRoundTripIsExact) {
  ParameterVector p = model->Init(7);
  p.values[3] = -0.0;
  p.values[4] = 1e-310;
  p.layout.segments[0].trainable = false;
  const ParameterVector back = ParseCheckpoint(SerializeCheckpoint(p));
  EXPECT_TRUE(back.layout == p.layout);
  ASSERT_EQ(back.values.size(), p.values.size());
  EXPECT_EQ(std::memcmp(back.values.data(), p.values.data(), p.values.size() * sizeof(double)), 0);
  std::string bytes = SerializeCheckpoint(p);
  bytes[0] = 'X';
  EXPECT_THROW(ParseCheckpoint(bytes), Error);
  EXPECT_THROW(ParseCheckpoint(SerializeCheckpoint(p).substr(0, 40)), Error);
}

}  // namespace
}  // namespace provdp
