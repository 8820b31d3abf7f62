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

// JSON persistence for corpora and splits, strict JSON object reading,
// CSV output, and small file helpers.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "provdp/corpus.hpp"
#include "provdp/error.hpp"

namespace provdp {

using Json = nlohmann::json;

// Reads fields of one JSON object and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    Require(j_.is_object(), ErrorCode::kConfig, where_ + ": expected an object");
  }

  template <typename T>
  void Get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kConfig, where_ + "." + key + ": " + e.what());
    }
  }

  bool Has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& At(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void Finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) Fail(ErrorCode::kConfig, where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorCode::kIo, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void WriteFile(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  Require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

inline Json ParseJson(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorCode::kConfig, where + ": " + e.what());
  }
}

// FNV-1a over the canonical (sorted-key) dump, as 16 hex digits.
inline std::string CanonicalHash(const Json& j) {
  const std::string text = j.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string FormatNumber(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Minimal CSV builder; fields containing separators or quotes are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { Row(header); }

  void Row(const std::vector<std::string>& fields) {
    Require(fields.size() == width_, ErrorCode::kInvalidArgument, "CSV row width mismatch");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      const std::string& f = fields[i];
      if (f.find_first_of(",\"\n") == std::string::npos) {
        out_ << f;
      } else {
        out_ << '"';
        for (char c : f) out_ << (c == '"' ? std::string("\"\"") : std::string(1, c));
        out_ << '"';
      }
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  std::size_t width_;
  std::ostringstream out_;
};

// Parses CSV produced by CsvWriter (quoted fields allowed).
inline std::vector<std::vector<std::string>> ParseCsv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json CorpusConfigToJson(const CorpusConfig& c) {
  Json keys = Json::array();
  for (const KeySpec& k : c.keys) keys.push_back({{"name", k.name}, {"generic", k.generic}, {"templates", k.templates}});
  return {{"n_providers", c.n_providers},
          {"n_public_providers", c.n_public_providers},
          {"docs_min", c.docs_min},
          {"docs_max", c.docs_max},
          {"n_clients", c.n_clients},
          {"keys", keys},
          {"value_pool_size", c.value_pool_size},
          {"distractor_vocab_size", c.distractor_vocab_size},
          {"distractors_per_doc", c.distractors_per_doc},
          {"customer_mention_prob", c.customer_mention_prob},
          {"boilerplate_tokens", c.boilerplate_tokens},
          {"visual_dim", c.visual_dim},
          {"seed", c.seed}};
}

inline CorpusConfig CorpusConfigFromJson(const Json& j, const std::string& where = "corpus") {
  CorpusConfig c;
  StrictObject o(j, where);
  o.Get("n_providers", c.n_providers);
  o.Get("n_public_providers", c.n_public_providers);
  o.Get("docs_min", c.docs_min);
  o.Get("docs_max", c.docs_max);
  o.Get("n_clients", c.n_clients);
  o.Get("value_pool_size", c.value_pool_size);
  o.Get("distractor_vocab_size", c.distractor_vocab_size);
  o.Get("distractors_per_doc", c.distractors_per_doc);
  o.Get("customer_mention_prob", c.customer_mention_prob);
  o.Get("boilerplate_tokens", c.boilerplate_tokens);
  o.Get("visual_dim", c.visual_dim);
  o.Get("seed", c.seed);
  if (o.Has("keys")) {
    c.keys.clear();
    for (const Json& k : o.At("keys")) {
      StrictObject ko(k, where + ".keys[]");
      KeySpec spec;
      ko.Get("name", spec.name);
      ko.Get("generic", spec.generic);
      ko.Get("templates", spec.templates);
      ko.Finish();
      c.keys.push_back(std::move(spec));
    }
  }
  o.Finish();
  return c;
}

inline Json SplitToJson(const CorpusSplit& s) {
  return {{"in_providers", s.in_providers},   {"out_providers", s.out_providers},
          {"train_docs", s.train_docs},       {"test_docs", s.test_docs},
          {"red_in_docs", s.red_in_docs},     {"red_out_docs", s.red_out_docs},
          {"public_docs", s.public_docs},     {"skipped_providers", s.skipped_providers}};
}

inline CorpusSplit SplitFromJson(const Json& j) {
  CorpusSplit s;
  StrictObject o(j, "split");
  o.Get("in_providers", s.in_providers);
  o.Get("out_providers", s.out_providers);
  o.Get("train_docs", s.train_docs);
  o.Get("test_docs", s.test_docs);
  o.Get("red_in_docs", s.red_in_docs);
  o.Get("red_out_docs", s.red_out_docs);
  o.Get("public_docs", s.public_docs);
  o.Get("skipped_providers", s.skipped_providers);
  o.Finish();
  return s;
}

inline Json CorpusToJson(const Corpus& corpus) {
  Json providers = Json::array(), documents = Json::array(), examples = Json::array();
  for (const Provider& p : corpus.providers) {
    providers.push_back({{"provider_id", p.provider_id},
                         {"is_public", p.is_public},
                         {"generic_keys", p.generic_keys},
                         {"visual_signature", p.visual_signature},
                         {"boilerplate", p.boilerplate}});
  }
  for (const Document& d : corpus.documents) {
    documents.push_back({{"doc_id", d.doc_id},
                         {"provider_id", d.provider_id},
                         {"fields", d.fields},
                         {"tokens", d.tokens},
                         {"visual_signature", d.visual_signature}});
  }
  for (const QAExample& q : corpus.examples) {
    examples.push_back({{"example_id", q.example_id},
                        {"doc_id", q.doc_id},
                        {"key", q.key},
                        {"template_id", q.template_id},
                        {"answer", q.answer}});
  }
  return {{"config", CorpusConfigToJson(corpus.config)},
          {"providers", providers},
          {"documents", documents},
          {"examples", examples}};
}

inline Corpus CorpusFromJson(const Json& j) {
  Corpus c;
  StrictObject o(j, "corpus file");
  c.config = CorpusConfigFromJson(o.At("config"), "corpus file.config");
  for (const Json& p : o.At("providers")) {
    Provider v;
    StrictObject po(p, "provider");
    po.Get("provider_id", v.provider_id);
    po.Get("is_public", v.is_public);
    po.Get("generic_keys", v.generic_keys);
    po.Get("visual_signature", v.visual_signature);
    po.Get("boilerplate", v.boilerplate);
    po.Finish();
    Require(v.provider_id == static_cast<int>(c.providers.size()), ErrorCode::kConfig, "provider ids must be dense");
    c.providers.push_back(std::move(v));
  }
  for (const Json& d : o.At("documents")) {
    Document v;
    StrictObject dobj(d, "document");
    dobj.Get("doc_id", v.doc_id);
    dobj.Get("provider_id", v.provider_id);
    dobj.Get("fields", v.fields);
    dobj.Get("tokens", v.tokens);
    dobj.Get("visual_signature", v.visual_signature);
    dobj.Finish();
    Require(v.doc_id == static_cast<int>(c.documents.size()), ErrorCode::kConfig, "document ids must be dense");
    c.documents.push_back(std::move(v));
  }
  for (const Json& q : o.At("examples")) {
    QAExample v;
    StrictObject qo(q, "example");
    qo.Get("example_id", v.example_id);
    qo.Get("doc_id", v.doc_id);
    qo.Get("key", v.key);
    qo.Get("template_id", v.template_id);
    qo.Get("answer", v.answer);
    qo.Finish();
    Require(v.example_id == static_cast<int>(c.examples.size()), ErrorCode::kConfig, "example ids must be dense");
    c.examples.push_back(std::move(v));
  }
  o.Finish();
  return c;
}

// Corpus plus its BLUE/RED split, as written by gen-corpus.
struct CorpusBundle {
  Corpus corpus;
  CorpusSplit split;
};

inline void SaveCorpusBundle(const std::filesystem::path& path, const Corpus& corpus, const CorpusSplit& split) {
  Json j = CorpusToJson(corpus);
  j["split"] = SplitToJson(split);
  WriteFile(path, j.dump() + "\n");
}

inline CorpusBundle LoadCorpusBundle(const std::filesystem::path& path) {
  Json j = ParseJson(ReadFile(path), path.string());
  Require(j.is_object() && j.contains("split"), ErrorCode::kConfig, path.string() + ": missing split");
  CorpusBundle b;
  b.split = SplitFromJson(j["split"]);
  j.erase("split");
  b.corpus = CorpusFromJson(j);
  return b;
}

}  // namespace provdp
