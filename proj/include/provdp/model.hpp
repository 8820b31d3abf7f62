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

// Small differentiable QA model standing in for a document VQA network:
// mean-pooled token embeddings + key embedding + projected visual signature,
// one tanh hidden layer, softmax over a closed answer vocabulary. Two shared
// output terms sit next to the per-answer head: a per-key copy gate rewarding
// answers whose token occurs in the document, and a score on each answer's
// surface form (see AnswerForm).

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "provdp/corpus.hpp"
#include "provdp/error.hpp"
#include "provdp/levenshtein.hpp"
#include "provdp/random.hpp"

namespace provdp {

class Vocabulary {
 public:
  Vocabulary() = default;
  // Index 0 is reserved for `reserved` (OOV token or the abstain answer).
  Vocabulary(std::string reserved, const std::set<std::string>& words) {
    words_.push_back(std::move(reserved));
    for (const std::string& w : words) {
      if (w == words_.front()) continue;
      words_.push_back(w);
    }
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
  }

  int id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? 0 : it->second;
  }
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  const std::string& word(int id) const { return words_.at(id); }
  int size() const { return static_cast<int>(words_.size()); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr int kAnswerFormDim = 7;

// Fixed surface-form descriptor of an answer string: letter and digit
// fractions plus indicators for '@', '/', '.', '-', and a bias term. Shared
// across answers, so a value never seen in training still has a known form.
inline std::array<double, kAnswerFormDim> AnswerForm(const std::string& a) {
  std::array<double, kAnswerFormDim> f{};
  if (a.empty()) return f;
  double letters = 0, digits = 0;
  for (char c : a) {
    const auto u = static_cast<unsigned char>(c);
    letters += std::isalpha(u) ? 1 : 0;
    digits += std::isdigit(u) ? 1 : 0;
  }
  const double n = static_cast<double>(a.size());
  f[0] = letters / n;
  f[1] = digits / n;
  f[2] = a.find('@') != std::string::npos ? 1.0 : 0.0;
  f[3] = a.find('/') != std::string::npos ? 1.0 : 0.0;
  f[4] = a.find('.') != std::string::npos ? 1.0 : 0.0;
  f[5] = a.find('-') != std::string::npos ? 1.0 : 0.0;
  f[6] = 1.0;
  return f;
}

struct ModelDims {
  int vocab_size = 0;
  int n_keys = 0;
  int visual_dim = 0;
  int embed_dim = 16;
  int hidden_dim = 32;
  int n_answers = 0;
};

struct ModelConfig {
  int embed_dim = 16;
  int hidden_dim = 32;
  // Fixed multiplier on the output logits. Lets a small-step optimizer
  // (lr 2e-4) reach confident predictions within a few hundred steps.
  double logit_scale = 16.0;
  double init_scale = 0.5;
};

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool trainable = true;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Segment&) const = default;
};

struct ParameterLayout {
  std::vector<Segment> segments;

  std::size_t total() const {
    std::size_t n = 0;
    for (const Segment& s : segments) n += s.size();
    return n;
  }
  const Segment& find(const std::string& name) const {
    for (const Segment& s : segments) {
      if (s.name == name) return s;
    }
    Fail(ErrorCode::kOutOfRange, "no parameter segment named " + name);
  }
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const Segment& s : segments) n += s.trainable ? s.size() : 0;
    return n;
  }
  bool operator==(const ParameterLayout&) const = default;
};

struct ParameterVector {
  ParameterLayout layout;
  std::vector<double> values;

  std::span<double> segment(const std::string& name) {
    const Segment& s = layout.find(name);
    return {values.data() + s.offset, s.size()};
  }
  std::span<const double> segment(const std::string& name) const {
    const Segment& s = layout.find(name);
    return {values.data() + s.offset, s.size()};
  }
};

inline ParameterLayout MakeLayout(const ModelDims& d) {
  ParameterLayout layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    layout.segments.push_back({std::move(name), offset, rows, cols, true});
    offset += rows * cols;
  };
  add("token_embedding", d.vocab_size, d.embed_dim);
  add("key_embedding", d.n_keys, d.embed_dim);
  add("visual_projection", d.embed_dim, d.visual_dim);
  add("hidden_weight", d.hidden_dim, d.embed_dim);
  add("hidden_bias", d.hidden_dim, 1);
  add("output_weight", d.n_answers, d.hidden_dim);
  add("output_bias", d.n_answers, 1);
  add("form_weight", kAnswerFormDim, d.hidden_dim);
  add("copy_gate", d.n_keys + 1, 1);
  return layout;
}

// Token ids into the token vocabulary; key = -1 means no key (empty query).
struct EncodedInput {
  std::vector<int> doc_tokens;
  std::vector<int> question_tokens;
  int key = -1;
  std::vector<double> visual;
};

struct TrainingExample {
  EncodedInput input;
  int gold = 0;
};

struct Prediction {
  std::string answer;
  int answer_id = 0;
  double conf = 0.0;
  std::optional<double> loss;
  std::vector<double> logits;
};

struct TrainHyper {
  double learning_rate = 2e-4;
  int batch_size = 8;
  // T_gd. Ignored when local_epochs > 0.
  int local_steps = 1;
  // When positive, T_gd = local_epochs * ceil(n_examples / batch_size).
  int local_epochs = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

inline void ValidateTrainHyper(const TrainHyper& h) {
  Require(h.learning_rate > 0.0, ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  Require(h.batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  Require(h.local_steps >= 0 && h.local_epochs >= 0, ErrorCode::kInvalidArgument,
          "local_steps and local_epochs must be >= 0");
  Require(h.beta1 >= 0.0 && h.beta1 < 1.0 && h.beta2 >= 0.0 && h.beta2 < 1.0,
          ErrorCode::kInvalidArgument, "AdamW betas must lie in [0, 1)");
}

class QaModel {
 public:
  QaModel(ModelDims dims, double logit_scale, Vocabulary tokens, Vocabulary answers)
      : dims_(dims),
        logit_scale_(logit_scale),
        tokens_(std::move(tokens)),
        answers_(std::move(answers)),
        layout_(MakeLayout(dims)) {
    Require(dims_.vocab_size == tokens_.size() && dims_.n_answers == answers_.size(),
            ErrorCode::kInvalidArgument, "model dimensions disagree with vocabularies");
    Require(dims_.embed_dim > 0 && dims_.hidden_dim > 0 && dims_.n_answers > 0,
            ErrorCode::kInvalidArgument, "model dimensions must be positive");
    token_answer_.assign(dims_.vocab_size, 0);
    for (int t = 1; t < tokens_.size(); ++t) token_answer_[t] = answers_.id(tokens_.word(t));
    answer_form_.reserve(static_cast<std::size_t>(dims_.n_answers) * kAnswerFormDim);
    for (int a = 0; a < answers_.size(); ++a) {
      for (double v : AnswerForm(answers_.word(a))) answer_form_.push_back(v);
    }
  }

  // Vocabularies come from the corpus: every document token and template
  // word; every field value as an answer ("" at index 0 means abstain).
  static QaModel ForCorpus(const Corpus& corpus, const ModelConfig& config) {
    std::set<std::string> words, values;
    for (const Document& d : corpus.documents) {
      words.insert(d.tokens.begin(), d.tokens.end());
      for (const auto& [k, v] : d.fields) values.insert(v);
    }
    for (const KeySpec& k : corpus.config.keys) {
      for (const std::string& t : k.templates) {
        for (const std::string& w : SplitWords(t)) words.insert(w);
      }
    }
    ModelDims dims;
    dims.vocab_size = static_cast<int>(words.size()) + 1;
    dims.n_answers = static_cast<int>(values.size()) + 1;
    dims.n_keys = static_cast<int>(corpus.config.keys.size());
    dims.visual_dim = corpus.config.visual_dim;
    dims.embed_dim = config.embed_dim;
    dims.hidden_dim = config.hidden_dim;
    QaModel model(dims, config.logit_scale, Vocabulary("<oov>", words), Vocabulary("", values));
    for (const KeySpec& k : corpus.config.keys) model.key_names_.push_back(k.name);
    return model;
  }

  const ModelDims& dims() const { return dims_; }
  const ParameterLayout& layout() const { return layout_; }
  const Vocabulary& tokens() const { return tokens_; }
  const Vocabulary& answers() const { return answers_; }
  double logit_scale() const { return logit_scale_; }

  ParameterVector Zeros() const { return {layout_, std::vector<double>(layout_.total(), 0.0)}; }

  // Random embeddings and hidden layer, zero output head: an untrained model
  // abstains ("" answer) with uniform confidence 1/n_answers.
  ParameterVector Init(uint64_t seed, double init_scale = 0.5) const {
    ParameterVector p = Zeros();
    Rng rng = MakeRng(seed, "init");
    auto fill = [&](const std::string& name, double stddev) {
      std::normal_distribution<double> g(0.0, stddev);
      for (double& x : p.segment(name)) x = g(rng);
    };
    fill("token_embedding", init_scale);
    fill("key_embedding", init_scale);
    fill("visual_projection", init_scale / std::sqrt(static_cast<double>(dims_.visual_dim)));
    fill("hidden_weight", 1.0 / std::sqrt(static_cast<double>(dims_.embed_dim)));
    return p;
  }

  EncodedInput Encode(const Document& doc, const std::string& question, const std::string& key) const {
    EncodedInput in;
    in.doc_tokens.reserve(doc.tokens.size());
    for (const std::string& t : doc.tokens) in.doc_tokens.push_back(tokens_.id(t));
    for (const std::string& w : SplitWords(question)) in.question_tokens.push_back(tokens_.id(w));
    in.key = -1;
    for (std::size_t i = 0; i < key_names_.size(); ++i) {
      if (key_names_[i] == key) in.key = static_cast<int>(i);
    }
    in.visual = doc.visual_signature;
    return in;
  }

  TrainingExample Encode(const Corpus& corpus, const QAExample& qa) const {
    return {Encode(corpus.document(qa.doc_id), corpus.question(qa), qa.key), answers_.id(qa.answer)};
  }

  // Deterministic; answer is the argmax (lowest index on ties).
  Prediction Forward(const ParameterVector& params, const EncodedInput& in,
                     std::optional<int> gold = std::nullopt) const {
    CheckParams(params);
    Workspace ws = MakeWorkspace();
    ForwardInto(params.values, in, ws);
    Prediction pred;
    const int best = static_cast<int>(std::max_element(ws.logits.begin(), ws.logits.end()) - ws.logits.begin());
    pred.answer_id = best;
    pred.answer = answers_.word(best);
    pred.conf = ws.probs[best];
    if (gold) {
      Require(*gold >= 0 && *gold < dims_.n_answers, ErrorCode::kOutOfRange, "gold answer id out of range");
      pred.loss = ws.log_norm - ws.logits[*gold];
    }
    pred.logits = std::move(ws.logits);
    return pred;
  }

  // Probabilities over the answer vocabulary.
  std::vector<double> Probabilities(const ParameterVector& params, const EncodedInput& in) const {
    CheckParams(params);
    Workspace ws = MakeWorkspace();
    ForwardInto(params.values, in, ws);
    return ws.probs;
  }

  // Mean cross-entropy over `batch`; writes the gradient (same length as the
  // parameters) into `grad`, overwriting it.
  double LossAndGradient(std::span<const double> params, std::span<const TrainingExample* const> batch,
                         std::span<double> grad) const {
    Require(params.size() == layout_.total() && grad.size() == layout_.total(),
            ErrorCode::kInvalidArgument, "parameter dimension mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
    if (batch.empty()) return 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Workspace ws = MakeWorkspace();
    std::vector<double> dlogit(dims_.n_answers), dh(dims_.hidden_dim), dz(dims_.hidden_dim),
        dx(dims_.embed_dim);
    const Offsets o = offsets();
    const int D = dims_.embed_dim, H = dims_.hidden_dim, A = dims_.n_answers, S = dims_.visual_dim;
    double total = 0.0;
    for (const TrainingExample* ex : batch) {
      ForwardInto(params, ex->input, ws);
      total += ws.log_norm - ws.logits[ex->gold];
      for (int a = 0; a < A; ++a) dlogit[a] = logit_scale_ * ws.probs[a] * inv_b;
      dlogit[ex->gold] -= logit_scale_ * inv_b;
      for (int a : ws.present) grad[o.gate + GateIndex(ex->input)] += dlogit[a];
      std::fill(dh.begin(), dh.end(), 0.0);
      for (int a = 0; a < A; ++a) {
        const double g = dlogit[a];
        grad[o.out_b + a] += g;
        const double* w = params.data() + o.out_w + static_cast<std::size_t>(a) * H;
        double* gw = grad.data() + o.out_w + static_cast<std::size_t>(a) * H;
        for (int j = 0; j < H; ++j) {
          gw[j] += g * ws.h[j];
          dh[j] += g * w[j];
        }
      }
      std::array<double, kAnswerFormDim> dform{};
      for (int a = 0; a < A; ++a) {
        const double* phi = answer_form_.data() + static_cast<std::size_t>(a) * kAnswerFormDim;
        for (int f = 0; f < kAnswerFormDim; ++f) dform[f] += dlogit[a] * phi[f];
      }
      for (int f = 0; f < kAnswerFormDim; ++f) {
        const double* u = params.data() + o.form + static_cast<std::size_t>(f) * H;
        double* gu = grad.data() + o.form + static_cast<std::size_t>(f) * H;
        for (int j = 0; j < H; ++j) {
          gu[j] += dform[f] * ws.h[j];
          dh[j] += dform[f] * u[j];
        }
      }
      std::fill(dx.begin(), dx.end(), 0.0);
      for (int j = 0; j < H; ++j) {
        dz[j] = dh[j] * (1.0 - ws.h[j] * ws.h[j]);
        grad[o.hid_b + j] += dz[j];
        const double* w = params.data() + o.hid_w + static_cast<std::size_t>(j) * D;
        double* gw = grad.data() + o.hid_w + static_cast<std::size_t>(j) * D;
        for (int i = 0; i < D; ++i) {
          gw[i] += dz[j] * ws.x[i];
          dx[i] += dz[j] * w[i];
        }
      }
      const EncodedInput& in = ex->input;
      if (!in.doc_tokens.empty()) {
        const double inv = 1.0 / static_cast<double>(in.doc_tokens.size());
        for (int t : in.doc_tokens) {
          double* ge = grad.data() + o.tok + static_cast<std::size_t>(t) * D;
          for (int i = 0; i < D; ++i) ge[i] += dx[i] * inv;
        }
      }
      if (!in.question_tokens.empty()) {
        const double inv = 1.0 / static_cast<double>(in.question_tokens.size());
        for (int t : in.question_tokens) {
          double* ge = grad.data() + o.tok + static_cast<std::size_t>(t) * D;
          for (int i = 0; i < D; ++i) ge[i] += dx[i] * inv;
        }
      }
      if (in.key >= 0) {
        double* gk = grad.data() + o.key + static_cast<std::size_t>(in.key) * D;
        for (int i = 0; i < D; ++i) gk[i] += dx[i];
      }
      for (int i = 0; i < D; ++i) {
        double* gv = grad.data() + o.vis + static_cast<std::size_t>(i) * S;
        for (int s = 0; s < S && s < static_cast<int>(in.visual.size()); ++s) gv[s] += dx[i] * in.visual[s];
      }
    }
    return total * inv_b;
  }

  double Loss(std::span<const double> params, std::span<const TrainingExample* const> batch) const {
    Workspace ws = MakeWorkspace();
    double total = 0.0;
    for (const TrainingExample* ex : batch) {
      ForwardInto(params, ex->input, ws);
      total += ws.log_norm - ws.logits[ex->gold];
    }
    return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
  }

  void CheckParams(const ParameterVector& params) const {
    Require(params.layout == layout_ && params.values.size() == layout_.total(),
            ErrorCode::kInvalidArgument, "parameter layout does not match the model");
  }

 private:
  struct Workspace {
    std::vector<double> x, h, logits, probs;
    std::vector<int> present;
    std::array<double, kAnswerFormDim> form{};
    double log_norm = 0.0;
  };
  struct Offsets {
    std::size_t tok, key, vis, hid_w, hid_b, out_w, out_b, form, gate;
  };

  int GateIndex(const EncodedInput& in) const { return in.key >= 0 ? in.key : dims_.n_keys; }

  Workspace MakeWorkspace() const {
    Workspace ws;
    ws.x.resize(dims_.embed_dim);
    ws.h.resize(dims_.hidden_dim);
    ws.logits.resize(dims_.n_answers);
    ws.probs.resize(dims_.n_answers);
    return ws;
  }

  Offsets offsets() const {
    const auto& s = layout_.segments;
    return {s[0].offset, s[1].offset, s[2].offset, s[3].offset,
            s[4].offset, s[5].offset, s[6].offset, s[7].offset, s[8].offset};
  }

  void ForwardInto(std::span<const double> p, const EncodedInput& in, Workspace& ws) const {
    const Offsets o = offsets();
    const int D = dims_.embed_dim, H = dims_.hidden_dim, A = dims_.n_answers, S = dims_.visual_dim;
    Require(in.visual.size() <= static_cast<std::size_t>(S), ErrorCode::kInvalidArgument,
            "visual signature longer than the model's visual dimension");
    std::fill(ws.x.begin(), ws.x.end(), 0.0);
    auto pool = [&](const std::vector<int>& ids) {
      if (ids.empty()) return;
      const double inv = 1.0 / static_cast<double>(ids.size());
      for (int t : ids) {
        Require(t >= 0 && t < dims_.vocab_size, ErrorCode::kOutOfRange, "token id out of range");
        const double* e = p.data() + o.tok + static_cast<std::size_t>(t) * D;
        for (int i = 0; i < D; ++i) ws.x[i] += e[i] * inv;
      }
    };
    pool(in.doc_tokens);
    pool(in.question_tokens);
    if (in.key >= 0) {
      Require(in.key < dims_.n_keys, ErrorCode::kOutOfRange, "key id out of range");
      const double* k = p.data() + o.key + static_cast<std::size_t>(in.key) * D;
      for (int i = 0; i < D; ++i) ws.x[i] += k[i];
    }
    for (int i = 0; i < D; ++i) {
      const double* v = p.data() + o.vis + static_cast<std::size_t>(i) * S;
      for (std::size_t s = 0; s < in.visual.size(); ++s) ws.x[i] += v[s] * in.visual[s];
    }
    for (int j = 0; j < H; ++j) {
      const double* w = p.data() + o.hid_w + static_cast<std::size_t>(j) * D;
      double z = p[o.hid_b + j];
      for (int i = 0; i < D; ++i) z += w[i] * ws.x[i];
      ws.h[j] = std::tanh(z);
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
      const double* w = p.data() + o.out_w + static_cast<std::size_t>(a) * H;
      double z = p[o.out_b + a];
      for (int j = 0; j < H; ++j) z += w[j] * ws.h[j];
      ws.logits[a] = logit_scale_ * z;
    }
    for (int f = 0; f < kAnswerFormDim; ++f) {
      const double* u = p.data() + o.form + static_cast<std::size_t>(f) * H;
      double t = 0.0;
      for (int j = 0; j < H; ++j) t += u[j] * ws.h[j];
      ws.form[f] = t;
    }
    for (int a = 0; a < A; ++a) {
      const double* phi = answer_form_.data() + static_cast<std::size_t>(a) * kAnswerFormDim;
      double z = 0.0;
      for (int f = 0; f < kAnswerFormDim; ++f) z += phi[f] * ws.form[f];
      ws.logits[a] += logit_scale_ * z;
    }
    ws.present.clear();
    for (int t : in.doc_tokens) {
      const int a = token_answer_[t];
      if (a > 0 && std::find(ws.present.begin(), ws.present.end(), a) == ws.present.end()) {
        ws.present.push_back(a);
      }
    }
    const double gate = p[o.gate + GateIndex(in)];
    for (int a : ws.present) ws.logits[a] += logit_scale_ * gate;
    for (int a = 0; a < A; ++a) max_logit = std::max(max_logit, ws.logits[a]);
    Require(std::isfinite(max_logit), ErrorCode::kNumerical, "non-finite logits");
    double sum = 0.0;
    for (int a = 0; a < A; ++a) {
      ws.probs[a] = std::exp(ws.logits[a] - max_logit);
      sum += ws.probs[a];
    }
    for (double& q : ws.probs) q /= sum;
    ws.log_norm = max_logit + std::log(sum);
  }

  ModelDims dims_;
  double logit_scale_;
  Vocabulary tokens_;
  Vocabulary answers_;
  ParameterLayout layout_;
  std::vector<std::string> key_names_;
  // Answer id of each token (0 when the token is not an answer value).
  std::vector<int> token_answer_;
  // Row-major n_answers x kAnswerFormDim.
  std::vector<double> answer_form_;
};

// AdamW with decoupled weight decay. Moments live here; a fresh optimizer
// starts from zero moments.
class AdamW {
 public:
  AdamW(const TrainHyper& h, std::size_t dim) : h_(h), m_(dim, 0.0), v_(dim, 0.0) {}

  void Step(std::span<double> params, std::span<const double> grad, const ParameterLayout& layout) {
    ++t_;
    const double bc1 = 1.0 - std::pow(h_.beta1, t_);
    const double bc2 = 1.0 - std::pow(h_.beta2, t_);
    for (const Segment& s : layout.segments) {
      if (!s.trainable) continue;
      for (std::size_t i = s.offset; i < s.offset + s.size(); ++i) {
        m_[i] = h_.beta1 * m_[i] + (1.0 - h_.beta1) * grad[i];
        v_[i] = h_.beta2 * v_[i] + (1.0 - h_.beta2) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= h_.learning_rate * (mhat / (std::sqrt(vhat) + h_.eps) + h_.weight_decay * params[i]);
      }
    }
  }

 private:
  TrainHyper h_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

inline int LocalStepCount(const TrainHyper& hyper, std::size_t n_examples) {
  if (hyper.local_epochs > 0) {
    const std::size_t per_epoch = (n_examples + hyper.batch_size - 1) / hyper.batch_size;
    return hyper.local_epochs * static_cast<int>(per_epoch);
  }
  return hyper.local_steps;
}

// T_gd AdamW steps over reshuffled mini-batches, starting from `params` with
// fresh optimizer state. The input is not modified.
inline ParameterVector TrainLocal(const QaModel& model, const ParameterVector& params,
                                  std::span<const TrainingExample> examples, const TrainHyper& hyper,
                                  uint64_t seed) {
  ValidateTrainHyper(hyper);
  model.CheckParams(params);
  Require(!examples.empty(), ErrorCode::kInvalidArgument, "train_local needs at least one example");
  ParameterVector out = params;
  const int steps = LocalStepCount(hyper, examples.size());
  if (steps == 0) return out;

  Rng rng = MakeRng(seed, "batches");
  AdamW opt(hyper, out.values.size());
  std::vector<double> grad(out.values.size());
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<const TrainingExample*> batch;
  for (int step = 0; step < steps; ++step) {
    batch.clear();
    while (static_cast<int>(batch.size()) < hyper.batch_size &&
           batch.size() < examples.size()) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&examples[order[cursor++]]);
    }
    const double loss = model.LossAndGradient(out.values, batch, grad);
    if (!std::isfinite(loss)) {
      Fail(ErrorCode::kNumerical, "non-finite training loss at local step " + std::to_string(step));
    }
    opt.Step(out.values, grad, out.layout);
  }
  return out;
}

struct UtilityReport {
  double acc = 0.0;
  double anls = 0.0;
  int n = 0;
  // Restricted to predictions with conf >= the confidence threshold; absent
  // when that subset is empty.
  std::optional<double> acc_conf_hi;
  std::optional<double> anls_conf_hi;
  int n_conf_hi = 0;
};

struct EvalOptions {
  double anls_threshold = 0.5;
  double conf_threshold = 0.9;
};

struct ScoredAnswer {
  std::string predicted;
  std::string gold;
  double conf = 0.0;
};

// ACC/ANLS over already-produced answers.
inline UtilityReport Score(std::span<const ScoredAnswer> answers, const EvalOptions& opts = {}) {
  Require(!answers.empty(), ErrorCode::kInvalidArgument, "evaluation set is empty");
  UtilityReport r;
  double acc = 0, anls = 0, acc_hi = 0, anls_hi = 0;
  for (const ScoredAnswer& a : answers) {
    const double hit = NormalizeAnswer(a.predicted) == NormalizeAnswer(a.gold) ? 1.0 : 0.0;
    double s = Nls(Trim(a.predicted), Trim(a.gold));
    if (s < opts.anls_threshold) s = 0.0;
    acc += hit;
    anls += s;
    if (a.conf >= opts.conf_threshold) {
      acc_hi += hit;
      anls_hi += s;
      ++r.n_conf_hi;
    }
  }
  r.n = static_cast<int>(answers.size());
  r.acc = 100.0 * acc / r.n;
  r.anls = 100.0 * anls / r.n;
  if (r.n_conf_hi > 0) {
    r.acc_conf_hi = 100.0 * acc_hi / r.n_conf_hi;
    r.anls_conf_hi = 100.0 * anls_hi / r.n_conf_hi;
  }
  return r;
}

inline UtilityReport Evaluate(const QaModel& model, const ParameterVector& params,
                              std::span<const TrainingExample> examples, const EvalOptions& opts = {}) {
  std::vector<ScoredAnswer> answers;
  answers.reserve(examples.size());
  for (const TrainingExample& ex : examples) {
    const Prediction p = model.Forward(params, ex.input);
    answers.push_back({p.answer, model.answers().word(ex.gold), p.conf});
  }
  return Score(answers, opts);
}

inline constexpr double kDefaultRedactThreshold = 0.8;

// Drops every token fuzzily matching `target` (NLS >= threshold) and blanks
// the visual signature. Empty target: returned unchanged.
inline Document Redact(const Document& doc, const std::string& target,
                       double threshold = kDefaultRedactThreshold) {
  if (target.empty()) return doc;
  Document out = doc;
  out.tokens.clear();
  for (const std::string& t : doc.tokens) {
    if (Nls(t, target) < threshold) out.tokens.push_back(t);
  }
  std::fill(out.visual_signature.begin(), out.visual_signature.end(), 0.0);
  return out;
}

inline std::vector<TrainingExample> EncodeDocs(const QaModel& model, const Corpus& corpus,
                                               std::span<const int> doc_ids) {
  const auto by_doc = corpus.examples_by_doc();
  std::vector<TrainingExample> out;
  for (int d : doc_ids) {
    for (int e : by_doc.at(d)) out.push_back(model.Encode(corpus, corpus.examples[e]));
  }
  return out;
}

// Checkpoint: "PDVQCKPT", u32 version, u32 segment count, per segment
// {u16 name length, name, u64 rows, u64 cols, u8 trainable}, u64 value
// count, then little-endian IEEE-754 doubles.
namespace checkpoint_internal {

inline void PutU(std::string& out, uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint64_t GetU(const std::string& in, std::size_t& pos, int bytes) {
  Require(pos + bytes <= in.size(), ErrorCode::kIo, "truncated checkpoint");
  uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += bytes;
  return v;
}

}  // namespace checkpoint_internal

inline constexpr char kCheckpointMagic[] = "PDVQCKPT";
inline constexpr uint32_t kCheckpointVersion = 1;

inline std::string SerializeCheckpoint(const ParameterVector& p) {
  using checkpoint_internal::PutU;
  std::string out(kCheckpointMagic, 8);
  PutU(out, kCheckpointVersion, 4);
  PutU(out, p.layout.segments.size(), 4);
  for (const Segment& s : p.layout.segments) {
    PutU(out, s.name.size(), 2);
    out += s.name;
    PutU(out, s.rows, 8);
    PutU(out, s.cols, 8);
    PutU(out, s.trainable ? 1 : 0, 1);
  }
  PutU(out, p.values.size(), 8);
  for (double v : p.values) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    PutU(out, bits, 8);
  }
  return out;
}

inline ParameterVector ParseCheckpoint(const std::string& in) {
  using checkpoint_internal::GetU;
  Require(in.size() >= 8 && in.compare(0, 8, kCheckpointMagic) == 0, ErrorCode::kIo, "not a checkpoint");
  std::size_t pos = 8;
  const uint64_t version = GetU(in, pos, 4);
  Require(version == kCheckpointVersion, ErrorCode::kIo, "unsupported checkpoint version");
  ParameterVector p;
  const uint64_t n_segments = GetU(in, pos, 4);
  std::size_t offset = 0;
  for (uint64_t i = 0; i < n_segments; ++i) {
    Segment s;
    const std::size_t len = GetU(in, pos, 2);
    Require(pos + len <= in.size(), ErrorCode::kIo, "truncated checkpoint");
    s.name = in.substr(pos, len);
    pos += len;
    s.rows = GetU(in, pos, 8);
    s.cols = GetU(in, pos, 8);
    s.trainable = GetU(in, pos, 1) != 0;
    s.offset = offset;
    offset += s.size();
    p.layout.segments.push_back(std::move(s));
  }
  const uint64_t count = GetU(in, pos, 8);
  Require(count == offset, ErrorCode::kIo, "checkpoint value count disagrees with its layout");
  p.values.resize(count);
  for (double& v : p.values) {
    const uint64_t bits = GetU(in, pos, 8);
    std::memcpy(&v, &bits, sizeof v);
  }
  Require(pos == in.size(), ErrorCode::kIo, "trailing bytes in checkpoint");
  return p;
}

inline void SaveCheckpoint(const std::string& path, const ParameterVector& p) {
  const std::filesystem::path fp(path);
  if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
  std::ofstream out(path, std::ios::binary);
  Require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  const std::string bytes = SerializeCheckpoint(p);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ParameterVector LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ParseCheckpoint(bytes);
}

}  // namespace provdp
