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

// Synthetic invoice-QA corpus with provider/client structure, and the BLUE
// (train/test, split across clients) and RED (in/out) partitions.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "provdp/error.hpp"
#include "provdp/random.hpp"

namespace provdp {

struct KeySpec {
  std::string name;
  // Generic keys are constant across all documents of a provider.
  bool generic = false;
  std::vector<std::string> templates;
};

inline std::vector<KeySpec> DefaultKeySchema() {
  return {
      {"provider_name", true,
       {"what is the name of the provider", "who issued this invoice",
        "which company sent the invoice", "what is the provider name"}},
      {"provider_email", true,
       {"what is the email of the provider", "which email address can the provider be reached at",
        "what is the provider email address"}},
      {"provider_tax_id", true,
       {"what is the tax id of the provider", "what is the vat number of the provider",
        "which tax number appears for the provider"}},
      {"invoice_date", false,
       {"what is the invoice date", "when was the invoice issued",
        "on which date was the invoice issued"}},
      {"total_amount", false,
       {"what is the total amount", "how much is due in total", "what is the total of the invoice"}},
      {"payment_terms", false,
       {"what are the payment terms", "which payment terms apply",
        "what terms of payment are stated"}},
  };
}

struct CorpusConfig {
  int n_providers = 200;
  // Extra providers outside the private population, used only to pretrain
  // the starting model. Their ids follow the private ones.
  int n_public_providers = 0;
  int docs_min = 2;
  int docs_max = 8;
  int n_clients = 10;
  std::vector<KeySpec> keys = DefaultKeySchema();
  // Size of the shared value pools for per-document keys (dates, amounts).
  int value_pool_size = 40;
  int distractor_vocab_size = 300;
  int distractors_per_doc = 20;
  // Probability that a document also names another provider (the billed
  // customer), which makes "who is the provider" ambiguous from text alone.
  double customer_mention_prob = 0.5;
  // Provider-constant boilerplate tokens (address, phone, bank line) printed
  // on every document of a provider; not asked about.
  int boilerplate_tokens = 6;
  int visual_dim = 8;
  uint64_t seed = 0;
};

struct Provider {
  int provider_id = 0;
  bool is_public = false;
  std::map<std::string, std::string> generic_keys;
  std::vector<double> visual_signature;
  std::vector<std::string> boilerplate;
};

struct Document {
  int doc_id = 0;
  int provider_id = 0;
  std::map<std::string, std::string> fields;
  std::vector<std::string> tokens;
  // Logo/layout analog; equal to the provider's signature unless redacted.
  std::vector<double> visual_signature;
};

struct QAExample {
  int example_id = 0;
  int doc_id = 0;
  std::string key;
  int template_id = 0;
  std::string answer;
};

struct Corpus {
  CorpusConfig config;
  std::vector<Provider> providers;
  std::vector<Document> documents;
  std::vector<QAExample> examples;

  const Document& document(int doc_id) const {
    Require(doc_id >= 0 && doc_id < static_cast<int>(documents.size()), ErrorCode::kOutOfRange,
            "unknown document " + std::to_string(doc_id));
    return documents[doc_id];
  }
  const Provider& provider(int provider_id) const {
    Require(provider_id >= 0 && provider_id < static_cast<int>(providers.size()),
            ErrorCode::kOutOfRange, "unknown provider " + std::to_string(provider_id));
    return providers[provider_id];
  }
  const KeySpec& key(const std::string& name) const {
    for (const KeySpec& k : config.keys) {
      if (k.name == name) return k;
    }
    Fail(ErrorCode::kOutOfRange, "unknown key " + name);
  }
  int key_index(const std::string& name) const {
    for (std::size_t i = 0; i < config.keys.size(); ++i) {
      if (config.keys[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }
  std::string question(const QAExample& qa) const {
    const KeySpec& spec = key(qa.key);
    return spec.templates.at(qa.template_id);
  }
  // Documents grouped by provider, in doc-id order.
  std::vector<std::vector<int>> docs_by_provider() const {
    std::vector<std::vector<int>> out(providers.size());
    for (const Document& d : documents) out[d.provider_id].push_back(d.doc_id);
    return out;
  }
  // QA examples grouped by document, in example-id order.
  std::vector<std::vector<int>> examples_by_doc() const {
    std::vector<std::vector<int>> out(documents.size());
    for (const QAExample& qa : examples) out[qa.doc_id].push_back(qa.example_id);
    return out;
  }
};

inline std::vector<std::string> SplitWords(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

inline void ValidateCorpusConfig(const CorpusConfig& c) {
  Require(c.n_clients >= 1, ErrorCode::kInvalidArgument, "n_clients must be >= 1");
  Require(c.n_providers >= 2 * c.n_clients, ErrorCode::kInvalidArgument,
          "n_providers must be at least 2 * n_clients");
  Require(c.n_public_providers >= 0, ErrorCode::kInvalidArgument, "n_public_providers must be >= 0");
  Require(c.docs_min >= 1 && c.docs_max >= c.docs_min, ErrorCode::kInvalidArgument,
          "docs_per_provider range must satisfy 1 <= min <= max");
  Require(!c.keys.empty(), ErrorCode::kInvalidArgument, "key schema is empty");
  std::set<std::string> names;
  for (const KeySpec& k : c.keys) {
    Require(!k.name.empty() && names.insert(k.name).second, ErrorCode::kInvalidArgument,
            "key names must be unique and non-empty");
    Require(!k.templates.empty(), ErrorCode::kInvalidArgument,
            "key " + k.name + " has no question templates");
  }
  Require(c.value_pool_size >= 1, ErrorCode::kInvalidArgument, "value_pool_size must be >= 1");
  Require(c.distractor_vocab_size >= 1 || c.distractors_per_doc == 0,
          ErrorCode::kInvalidArgument, "distractor vocabulary is empty");
  Require(c.distractors_per_doc >= 0, ErrorCode::kInvalidArgument,
          "distractors_per_doc must be >= 0");
  Require(c.boilerplate_tokens >= 0, ErrorCode::kInvalidArgument, "boilerplate_tokens must be >= 0");
  Require(c.customer_mention_prob >= 0.0 && c.customer_mention_prob <= 1.0,
          ErrorCode::kInvalidArgument, "customer_mention_prob must lie in [0, 1]");
  Require(c.visual_dim >= 1, ErrorCode::kInvalidArgument, "visual_dim must be >= 1");
}

namespace corpus_internal {

inline std::string Syllables(Rng& rng, int count) {
  static constexpr std::string_view kConsonants = "bcdfghjklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::uniform_int_distribution<std::size_t> c(0, kConsonants.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, kVowels.size() - 1);
  std::string s;
  for (int i = 0; i < count; ++i) {
    s += kConsonants[c(rng)];
    s += kVowels[v(rng)];
  }
  return s;
}

// Draws until `make` yields a string not yet in `used`.
template <typename Make>
std::string Unique(std::set<std::string>& used, Make make) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::string s = make();
    if (used.insert(s).second) return s;
  }
  Fail(ErrorCode::kFailedPrecondition, "could not draw a unique value; enlarge the value space");
}

inline std::string Digits(Rng& rng, int n) {
  std::uniform_int_distribution<int> d(0, 9);
  std::string s;
  for (int i = 0; i < n; ++i) s += static_cast<char>('0' + d(rng));
  return s;
}

}  // namespace corpus_internal

// Deterministic in config.seed. Each document yields one QA example per key.
inline Corpus GenerateCorpus(const CorpusConfig& config) {
  ValidateCorpusConfig(config);
  using corpus_internal::Digits;
  using corpus_internal::Syllables;
  using corpus_internal::Unique;

  Corpus corpus;
  corpus.config = config;
  Rng rng = MakeRng(config.seed, "corpus");
  std::set<std::string> used;

  // Question words are reserved so no value collides with a template token.
  for (const KeySpec& k : config.keys) {
    for (const std::string& t : k.templates) {
      for (const std::string& w : SplitWords(t)) used.insert(w);
    }
  }

  std::uniform_int_distribution<int> syll(2, 4);
  static const char* kDomains[] = {"mail.com", "invoicing.net", "corp.org", "biz.io"};
  std::uniform_int_distribution<int> domain(0, 3);

  // Per-document value pools, one per non-generic key.
  std::map<std::string, std::vector<std::string>> pools;
  for (const KeySpec& k : config.keys) {
    if (k.generic) continue;
    std::vector<std::string>& pool = pools[k.name];
    for (int i = 0; i < config.value_pool_size; ++i) {
      if (k.name.find("date") != std::string::npos) {
        std::uniform_int_distribution<int> mm(1, 12), dd(1, 28), yy(10, 23);
        pool.push_back(Unique(used, [&] {
          char buf[16];
          std::snprintf(buf, sizeof buf, "%02d/%02d/%02d", mm(rng), dd(rng), yy(rng));
          return std::string(buf);
        }));
      } else if (k.name.find("amount") != std::string::npos) {
        std::uniform_int_distribution<int> whole(10, 9999), cents(0, 99);
        pool.push_back(Unique(used, [&] {
          char buf[24];
          std::snprintf(buf, sizeof buf, "%d.%02d", whole(rng), cents(rng));
          return std::string(buf);
        }));
      } else {
        pool.push_back(Unique(used, [&] { return Syllables(rng, 2) + "-" + Digits(rng, 2); }));
      }
    }
  }

  std::vector<std::string> distractors;
  for (int i = 0; i < config.distractor_vocab_size; ++i) {
    distractors.push_back(Unique(used, [&] { return Syllables(rng, 1) + Syllables(rng, 1) + "x"; }));
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> ndocs(config.docs_min, config.docs_max);
  for (int p = 0; p < config.n_providers + config.n_public_providers; ++p) {
    Provider prov;
    prov.provider_id = p;
    prov.is_public = p >= config.n_providers;
    const std::string name = Unique(used, [&] { return Syllables(rng, syll(rng)); });
    for (const KeySpec& k : config.keys) {
      if (!k.generic) continue;
      std::string value;
      if (k.name.find("name") != std::string::npos) {
        value = name;
      } else if (k.name.find("email") != std::string::npos) {
        value = Unique(used, [&] { return name + "@" + kDomains[domain(rng)]; });
      } else if (k.name.find("tax") != std::string::npos) {
        value = Unique(used, [&] { return "tx" + Digits(rng, 7); });
      } else {
        value = Unique(used, [&] { return Syllables(rng, 3) + Digits(rng, 3); });
      }
      prov.generic_keys[k.name] = value;
    }
    for (int i = 0; i < config.boilerplate_tokens; ++i) {
      prov.boilerplate.push_back(Unique(used, [&] { return Syllables(rng, 2) + Digits(rng, 2) + "z"; }));
    }
    prov.visual_signature.resize(config.visual_dim);
    for (double& x : prov.visual_signature) x = gauss(rng);
    corpus.providers.push_back(prov);
  }

  std::string name_key;
  for (const KeySpec& k : config.keys) {
    if (k.generic && (name_key.empty() || k.name.find("name") != std::string::npos)) name_key = k.name;
  }
  if (name_key.empty() && config.customer_mention_prob > 0.0) {
    Fail(ErrorCode::kInvalidArgument, "customer mentions need a generic key to draw names from");
  }
  std::uniform_int_distribution<int> pick_distractor(0, std::max(0, config.distractor_vocab_size - 1));
  for (const Provider& prov : corpus.providers) {
    const int n = ndocs(rng);
    for (int i = 0; i < n; ++i) {
      Document doc;
      doc.doc_id = static_cast<int>(corpus.documents.size());
      doc.provider_id = prov.provider_id;
      doc.visual_signature = prov.visual_signature;
      std::vector<std::string> values;
      for (const KeySpec& k : config.keys) {
        std::string value;
        if (k.generic) {
          value = prov.generic_keys.at(k.name);
        } else {
          const auto& pool = pools.at(k.name);
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          value = pool[pick(rng)];
        }
        doc.fields[k.name] = value;
        values.push_back(value);
      }
      for (int j = 0; j < config.distractors_per_doc; ++j) {
        doc.tokens.push_back(distractors[pick_distractor(rng)]);
      }
      for (const std::string& b : prov.boilerplate) {
        std::uniform_int_distribution<std::size_t> pos(0, doc.tokens.size());
        doc.tokens.insert(doc.tokens.begin() + static_cast<std::ptrdiff_t>(pos(rng)), b);
      }
      std::uniform_int_distribution<int> other(0, static_cast<int>(corpus.providers.size()) - 2);
      std::bernoulli_distribution mention(config.customer_mention_prob);
      if (mention(rng)) {
        int c = other(rng);
        if (c >= prov.provider_id) ++c;
        values.push_back(corpus.providers[c].generic_keys.at(name_key));
      }
      // Field values land at random positions among the distractors.
      for (const std::string& v : values) {
        std::uniform_int_distribution<std::size_t> pos(0, doc.tokens.size());
        doc.tokens.insert(doc.tokens.begin() + static_cast<std::ptrdiff_t>(pos(rng)), v);
      }
      for (const KeySpec& k : config.keys) {
        std::uniform_int_distribution<int> tmpl(0, static_cast<int>(k.templates.size()) - 1);
        QAExample qa;
        qa.example_id = static_cast<int>(corpus.examples.size());
        qa.doc_id = doc.doc_id;
        qa.key = k.name;
        qa.template_id = tmpl(rng);
        qa.answer = doc.fields.at(k.name);
        corpus.examples.push_back(qa);
      }
      corpus.documents.push_back(std::move(doc));
    }
  }
  return corpus;
}

struct SplitConfig {
  double frac_in = 0.5;
  // Share of each D_in provider's documents held out for RED_in.
  double red_doc_frac = 0.3;
  // Share of each provider's documents placed in the BLUE test set.
  double test_doc_frac = 0.15;
  uint64_t seed = 0;
};

// Provider-level membership split plus the document-level BLUE/RED split.
struct CorpusSplit {
  std::vector<int> in_providers;
  std::vector<int> out_providers;
  std::vector<int> train_docs;
  std::vector<int> test_docs;
  std::vector<int> red_in_docs;
  std::vector<int> red_out_docs;
  // Documents of the public providers (pretraining only).
  std::vector<int> public_docs;
  // D_in providers with a single document: they train but cannot also
  // contribute a held-out RED_in document.
  std::vector<int> skipped_providers;

  std::vector<int> red_in_providers(const Corpus& corpus) const { return ProvidersOf(corpus, red_in_docs); }
  std::vector<int> red_out_providers(const Corpus& corpus) const { return ProvidersOf(corpus, red_out_docs); }

  static std::vector<int> ProvidersOf(const Corpus& corpus, const std::vector<int>& docs) {
    std::set<int> ids;
    for (int d : docs) ids.insert(corpus.document(d).provider_id);
    return {ids.begin(), ids.end()};
  }
};

inline CorpusSplit SplitRed(const Corpus& corpus, const SplitConfig& config) {
  Require(config.frac_in > 0.0 && config.frac_in < 1.0, ErrorCode::kInvalidArgument,
          "frac_in must lie in (0, 1)");
  Require(config.red_doc_frac > 0.0 && config.red_doc_frac < 1.0, ErrorCode::kInvalidArgument,
          "red_doc_frac must lie in (0, 1)");
  Require(config.test_doc_frac >= 0.0 && config.test_doc_frac < 1.0, ErrorCode::kInvalidArgument,
          "test_doc_frac must lie in [0, 1)");
  const int n = corpus.config.n_providers;
  Require(n >= 2, ErrorCode::kFailedPrecondition, "need at least two providers");

  Rng rng = MakeRng(config.seed, "split");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  int n_in = static_cast<int>(std::lround(config.frac_in * n));
  n_in = std::clamp(n_in, 1, n - 1);

  CorpusSplit split;
  split.in_providers.assign(order.begin(), order.begin() + n_in);
  split.out_providers.assign(order.begin() + n_in, order.end());
  std::sort(split.in_providers.begin(), split.in_providers.end());
  std::sort(split.out_providers.begin(), split.out_providers.end());

  const auto by_provider = corpus.docs_by_provider();
  for (int p : split.in_providers) {
    std::vector<int> docs = by_provider[p];
    std::shuffle(docs.begin(), docs.end(), rng);
    const int m = static_cast<int>(docs.size());
    if (m < 2) {
      split.skipped_providers.push_back(p);
      split.train_docs.insert(split.train_docs.end(), docs.begin(), docs.end());
      continue;
    }
    const int n_red = std::clamp(static_cast<int>(std::lround(m * config.red_doc_frac)), 1, m - 1);
    const int n_test = std::min(static_cast<int>(std::floor(m * config.test_doc_frac)), m - 1 - n_red);
    int i = 0;
    for (; i < n_red; ++i) split.red_in_docs.push_back(docs[i]);
    for (; i < n_red + n_test; ++i) split.test_docs.push_back(docs[i]);
    for (; i < m; ++i) split.train_docs.push_back(docs[i]);
  }
  for (int p : split.out_providers) {
    std::vector<int> docs = by_provider[p];
    std::shuffle(docs.begin(), docs.end(), rng);
    const int m = static_cast<int>(docs.size());
    const int n_test = std::min(static_cast<int>(std::floor(m * config.test_doc_frac)), m - 1);
    int i = 0;
    for (; i < n_test; ++i) split.test_docs.push_back(docs[i]);
    for (; i < m; ++i) split.red_out_docs.push_back(docs[i]);
  }
  for (int p = n; p < static_cast<int>(corpus.providers.size()); ++p) {
    split.public_docs.insert(split.public_docs.end(), by_provider[p].begin(), by_provider[p].end());
  }
  for (auto* v : {&split.train_docs, &split.test_docs, &split.red_in_docs, &split.red_out_docs}) {
    std::sort(v->begin(), v->end());
  }
  return split;
}

struct ClientShard {
  int client_id = 0;
  std::vector<int> provider_ids;
  std::vector<int> doc_ids;
};

// Deals the D_in providers (shuffled) round-robin onto disjoint clients, so
// provider counts differ by at most one.
inline std::vector<ClientShard> PartitionBlue(const Corpus& corpus, const CorpusSplit& split,
                                              int n_clients, uint64_t seed) {
  Require(n_clients >= 1, ErrorCode::kInvalidArgument, "n_clients must be >= 1");
  Require(n_clients <= corpus.config.n_providers / 2, ErrorCode::kFailedPrecondition,
          "too few providers: need n_clients <= n_providers / 2");
  Require(static_cast<int>(split.in_providers.size()) >= n_clients, ErrorCode::kFailedPrecondition,
          "too few training providers for the requested number of clients");
  Rng rng = MakeRng(seed, "partition");
  std::vector<int> providers = split.in_providers;
  std::shuffle(providers.begin(), providers.end(), rng);

  std::vector<ClientShard> shards(n_clients);
  for (int k = 0; k < n_clients; ++k) shards[k].client_id = k;
  for (std::size_t i = 0; i < providers.size(); ++i) {
    shards[i % n_clients].provider_ids.push_back(providers[i]);
  }
  std::unordered_map<int, int> owner;
  for (ClientShard& s : shards) {
    std::sort(s.provider_ids.begin(), s.provider_ids.end());
    for (int p : s.provider_ids) owner[p] = s.client_id;
  }
  for (int d : split.train_docs) {
    shards[owner.at(corpus.document(d).provider_id)].doc_ids.push_back(d);
  }
  return shards;
}

}  // namespace provdp
