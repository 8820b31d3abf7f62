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

#include "provdp/corpus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "provdp/io.hpp"

namespace provdp {
namespace {

CorpusConfig SmallConfig(uint64_t seed = 3) {
  CorpusConfig c;
  c.n_providers = 40;
  c.n_public_providers = 10;
  c.n_clients = 4;
  c.seed = seed;
  return c;
}

std::set<int> AsSet(const std::vector<int>& v) { return {v.begin(), v.end()}; }

TEST(GenerateCorpus, DeterministicPerSeed) {
  const Corpus a = GenerateCorpus(SmallConfig()), b = GenerateCorpus(SmallConfig());
  EXPECT_EQ(CorpusToJson(a).dump(), CorpusToJson(b).dump());
  const Corpus c = GenerateCorpus(SmallConfig(4));
  EXPECT_NE(CorpusToJson(a).dump(), CorpusToJson(c).dump());
}

TEST(GenerateCorpus, StructuralInvariants) {
  const CorpusConfig cfg = SmallConfig();
  const Corpus corpus = GenerateCorpus(cfg);
  ASSERT_EQ(corpus.providers.size(), 50u);
  const auto by_provider = corpus.docs_by_provider();
  for (const Provider& p : corpus.providers) {
    EXPECT_EQ(p.is_public, p.provider_id >= cfg.n_providers);
    const int n = static_cast<int>(by_provider[p.provider_id].size());
    EXPECT_GE(n, cfg.docs_min);
    EXPECT_LE(n, cfg.docs_max);
  }
  const auto by_doc = corpus.examples_by_doc();
  for (const Document& d : corpus.documents) {
    const Provider& p = corpus.provider(d.provider_id);
    // One question per key, each answer printed on the document.
    ASSERT_EQ(by_doc[d.doc_id].size(), cfg.keys.size());
    for (int e : by_doc[d.doc_id]) {
      const QAExample& qa = corpus.examples[e];
      EXPECT_NE(std::find(d.tokens.begin(), d.tokens.end(), qa.answer), d.tokens.end());
      EXPECT_EQ(d.fields.at(qa.key), qa.answer);
      if (corpus.key(qa.key).generic) {
        EXPECT_EQ(qa.answer, p.generic_keys.at(qa.key));
      }
      EXPECT_FALSE(corpus.question(qa).empty());
    }
    for (const std::string& b : p.boilerplate) {
      EXPECT_NE(std::find(d.tokens.begin(), d.tokens.end(), b), d.tokens.end());
    }
    EXPECT_EQ(d.visual_signature, p.visual_signature);
  }
}

TEST(GenerateCorpus, CustomerMentionsNameAnotherProvider) {
  CorpusConfig cfg = SmallConfig();
  cfg.customer_mention_prob = 1.0;
  const Corpus corpus = GenerateCorpus(cfg);
  std::set<std::string> names;
  for (const Provider& p : corpus.providers) names.insert(p.generic_keys.at("provider_name"));
  for (const Document& d : corpus.documents) {
    int foreign = 0;
    for (const std::string& t : d.tokens) {
      if (names.count(t) && t != corpus.provider(d.provider_id).generic_keys.at("provider_name")) ++foreign;
    }
    EXPECT_EQ(foreign, 1) << "document " << d.doc_id;
  }
}

TEST(GenerateCorpus, RejectsBadConfig) {
  CorpusConfig c = SmallConfig();
  c.docs_min = 0;
  EXPECT_THROW(GenerateCorpus(c), Error);
  c = SmallConfig();
  c.n_providers = 6;  // fewer than 2 * n_clients
  EXPECT_THROW(GenerateCorpus(c), Error);
  c = SmallConfig();
  c.keys.clear();
  EXPECT_THROW(GenerateCorpus(c), Error);
}

TEST(SplitRed, MembershipAndDisjointness) {
  const Corpus corpus = GenerateCorpus(SmallConfig());
  SplitConfig sc;
  sc.seed = 9;
  const CorpusSplit s = SplitRed(corpus, sc);
  const std::set<int> in = AsSet(s.in_providers), out = AsSet(s.out_providers);
  EXPECT_EQ(in.size() + out.size(), 40u);
  for (int p : in) EXPECT_FALSE(out.count(p));

  std::set<int> seen;
  for (const auto* docs : {&s.train_docs, &s.test_docs, &s.red_in_docs, &s.red_out_docs, &s.public_docs}) {
    for (int d : *docs) EXPECT_TRUE(seen.insert(d).second) << "document " << d << " in two sets";
  }
  EXPECT_EQ(seen.size(), corpus.documents.size());
  for (int d : s.train_docs) EXPECT_TRUE(in.count(corpus.document(d).provider_id));
  for (int d : s.red_in_docs) EXPECT_TRUE(in.count(corpus.document(d).provider_id));
  for (int d : s.red_out_docs) EXPECT_TRUE(out.count(corpus.document(d).provider_id));
  for (int d : s.public_docs) EXPECT_TRUE(corpus.document(d).provider_id >= 40);

  // Every RED_in provider also contributes training documents.
  const std::set<int> train_providers = AsSet(CorpusSplit::ProvidersOf(corpus, s.train_docs));
  for (int p : s.red_in_providers(corpus)) EXPECT_TRUE(train_providers.count(p));
}

TEST(SplitRed, SingleDocumentProvidersAreSkippedFromRedIn) {
  CorpusConfig cfg = SmallConfig();
  cfg.docs_min = 1;
  cfg.docs_max = 1;
  const Corpus corpus = GenerateCorpus(cfg);
  const CorpusSplit s = SplitRed(corpus, {});
  EXPECT_TRUE(s.red_in_docs.empty());
  EXPECT_EQ(s.skipped_providers.size(), s.in_providers.size());
}

TEST(PartitionBlue, DisjointBalancedShards) {
  const Corpus corpus = GenerateCorpus(SmallConfig());
  const CorpusSplit s = SplitRed(corpus, {});
  const auto shards = PartitionBlue(corpus, s, 4, 5);
  ASSERT_EQ(shards.size(), 4u);
  std::set<int> providers, docs;
  std::size_t lo = 1000, hi = 0;
  for (const ClientShard& c : shards) {
    lo = std::min(lo, c.provider_ids.size());
    hi = std::max(hi, c.provider_ids.size());
    for (int p : c.provider_ids) EXPECT_TRUE(providers.insert(p).second);
    for (int d : c.doc_ids) {
      EXPECT_TRUE(docs.insert(d).second);
      EXPECT_TRUE(std::binary_search(c.provider_ids.begin(), c.provider_ids.end(), corpus.document(d).provider_id));
    }
  }
  EXPECT_LE(hi - lo, 1u);
  EXPECT_EQ(providers, AsSet(s.in_providers));
  EXPECT_EQ(docs, AsSet(s.train_docs));
  EXPECT_THROW(PartitionBlue(corpus, s, 21, 5), Error);
}

TEST(CorpusJson, RoundTrip) {
  const Corpus corpus = GenerateCorpus(SmallConfig());
  const CorpusSplit split = SplitRed(corpus, {});
  const Json j = CorpusToJson(corpus);
  const Corpus back = CorpusFromJson(Json::parse(j.dump()));
  EXPECT_EQ(CorpusToJson(back).dump(), j.dump());
  EXPECT_EQ(SplitToJson(SplitFromJson(SplitToJson(split))).dump(), SplitToJson(split).dump());
  Json bad = j;
  bad["unexpected"] = 1;
  EXPECT_THROW(CorpusFromJson(bad), Error);
}

}  // namespace
}  // namespace provdp
