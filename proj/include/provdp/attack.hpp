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

// Provider membership inference: per-query metrics, per-provider feature
// aggregation, K-means (zero knowledge) and random-forest (partial
// knowledge) attacks, the hard-voting ensemble, and T_s-filtered scoring.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "provdp/corpus.hpp"
#include "provdp/error.hpp"
#include "provdp/levenshtein.hpp"
#include "provdp/model.hpp"
#include "provdp/random.hpp"

namespace provdp {

struct MetricRow {
  int provider_id = 0;
  int example_id = 0;
  int doc_id = 0;
  bool member = false;
  // G1
  double acc = 0.0;
  double nls = 0.0;
  // G2
  double loss = 0.0;
  double conf = 0.0;
  // G3: loss_pre - loss_post, conf_post - conf_pre.
  double delta_loss = 0.0;
  double delta_conf = 0.0;
  // G4; only for generic provider keys whose answer redaction removed
  // something.
  std::optional<double> nls_mem;
  std::optional<double> delta_nls_mem;
};

inline constexpr int kNumMetrics = 8;
inline constexpr std::array<const char*, kNumMetrics> kMetricNames = {
    "acc", "nls", "loss", "conf", "delta_loss", "delta_conf", "nls_mem", "delta_nls_mem"};

inline std::optional<double> MetricValue(const MetricRow& r, int metric) {
  switch (metric) {
    case 0: return r.acc;
    case 1: return r.nls;
    case 2: return r.loss;
    case 3: return r.conf;
    case 4: return r.delta_loss;
    case 5: return r.delta_conf;
    case 6: return r.nls_mem;
    case 7: return r.delta_nls_mem;
    default: Fail(ErrorCode::kOutOfRange, "metric index out of range");
  }
}

struct MemorizationScore {
  double nls_mem = 0.0;
  double delta_nls_mem = 0.0;
};

// Answer after redacting every trace of the gold answer, and the
// no-question self-consistency score NLS(o1, o2): o1 from the full document
// with an empty question, o2 after redacting o1. nullopt when the gold
// answer does not occur in the document. An empty o1 scores 0.
inline std::optional<MemorizationScore> MemorizationMetrics(const QaModel& model, const ParameterVector& params,
                                                           const Document& doc, const std::string& question,
                                                           const std::string& key, const std::string& gold,
                                                           double threshold = kDefaultRedactThreshold) {
  const Document redacted = Redact(doc, gold, threshold);
  if (redacted.tokens.size() == doc.tokens.size()) return std::nullopt;
  MemorizationScore s;
  s.nls_mem = Nls(model.Forward(params, model.Encode(redacted, question, key)).answer, gold);
  const std::string o1 = model.Forward(params, model.Encode(doc, "", "")).answer;
  if (!o1.empty()) {
    const std::string o2 = model.Forward(params, model.Encode(Redact(doc, o1, threshold), "", "")).answer;
    s.delta_nls_mem = Nls(o1, o2);
  }
  return s;
}

// One row per QA example of `doc_ids`. `pre` is the model before training on
// the private data.
inline std::vector<MetricRow> ExtractMetrics(const QaModel& model, const ParameterVector& pre,
                                             const ParameterVector& post, const Corpus& corpus,
                                             std::span<const int> doc_ids, const std::set<int>& member_providers,
                                             bool with_memorization = true) {
  Require(pre.layout.segments.size() == post.layout.segments.size() && pre.values.size() == post.values.size(),
          ErrorCode::kInvalidArgument, "pre and post models must share a parameter layout");
  const auto by_doc = corpus.examples_by_doc();
  std::vector<MetricRow> rows;
  for (int d : doc_ids) {
    const Document& doc = corpus.document(d);
    for (int e : by_doc.at(d)) {
      const QAExample& qa = corpus.examples[e];
      const TrainingExample ex = model.Encode(corpus, qa);
      const Prediction p_post = model.Forward(post, ex.input, ex.gold);
      const Prediction p_pre = model.Forward(pre, ex.input, ex.gold);
      MetricRow r;
      r.provider_id = doc.provider_id;
      r.example_id = qa.example_id;
      r.doc_id = d;
      r.member = member_providers.count(doc.provider_id) > 0;
      r.acc = NormalizeAnswer(p_post.answer) == NormalizeAnswer(qa.answer) ? 1.0 : 0.0;
      r.nls = Nls(Trim(p_post.answer), Trim(qa.answer));
      r.loss = *p_post.loss;
      r.conf = p_post.conf;
      r.delta_loss = *p_pre.loss - *p_post.loss;
      r.delta_conf = p_post.conf - p_pre.conf;
      if (with_memorization && corpus.key(qa.key).generic) {
        if (auto m = MemorizationMetrics(model, post, doc, corpus.question(qa), qa.key, qa.answer)) {
          r.nls_mem = m->nls_mem;
          r.delta_nls_mem = m->delta_nls_mem;
        }
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

// Bit i set: metric group G(i+1) enabled.
using FeatureGroups = unsigned;

inline FeatureGroups ParseFeatureGroups(const std::string& spec) {
  const std::string s = ToLower(spec);
  Require(s.size() >= 2 && s[0] == 'g', ErrorCode::kConfig, "feature groups look like g1, g12, g123, g1234");
  FeatureGroups g = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    Require(s[i] >= '1' && s[i] <= '4', ErrorCode::kConfig, "unknown feature group in '" + spec + "'");
    g |= 1u << (s[i] - '1');
  }
  return g;
}

inline std::string FeatureGroupsName(FeatureGroups g) {
  std::string s = "g";
  for (int i = 0; i < 4; ++i) {
    if (g & (1u << i)) s.push_back(static_cast<char>('1' + i));
  }
  return s;
}

inline std::vector<int> EnabledMetrics(FeatureGroups g) {
  std::vector<int> m;
  for (int i = 0; i < 4; ++i) {
    if (g & (1u << i)) {
      m.push_back(2 * i);
      m.push_back(2 * i + 1);
    }
  }
  return m;
}

struct ProviderFeatures {
  int provider_id = 0;
  // (mean, population std) per enabled metric, in metric order.
  std::vector<double> features;
  int n_queries = 0;
  bool member = false;
};

// Metrics missing from every row of a provider (G4 on providers with no
// usable generic-key question) aggregate to (0, 0).
inline std::vector<ProviderFeatures> AggregateFeatures(std::span<const MetricRow> rows, FeatureGroups groups) {
  Require(groups != 0, ErrorCode::kInvalidArgument, "no feature group enabled");
  std::map<int, std::vector<const MetricRow*>> by_provider;
  for (const MetricRow& r : rows) by_provider[r.provider_id].push_back(&r);
  Require(!by_provider.empty(), ErrorCode::kInvalidArgument, "no metric rows to aggregate");
  const std::vector<int> metrics = EnabledMetrics(groups);
  std::vector<ProviderFeatures> out;
  for (const auto& [pid, group] : by_provider) {
    ProviderFeatures f;
    f.provider_id = pid;
    f.n_queries = static_cast<int>(group.size());
    f.member = group.front()->member;
    for (int m : metrics) {
      double sum = 0.0, sq = 0.0;
      int n = 0;
      for (const MetricRow* r : group) {
        if (auto v = MetricValue(*r, m)) {
          sum += *v;
          ++n;
        }
      }
      const double mean = n > 0 ? sum / n : 0.0;
      for (const MetricRow* r : group) {
        if (auto v = MetricValue(*r, m)) sq += (*v - mean) * (*v - mean);
      }
      f.features.push_back(mean);
      f.features.push_back(n > 0 ? std::sqrt(sq / n) : 0.0);
    }
    out.push_back(std::move(f));
  }
  return out;
}

// Providers with strictly more than s queries.
inline std::vector<ProviderFeatures> FilterMinQueries(std::span<const ProviderFeatures> providers, int s) {
  std::vector<ProviderFeatures> out;
  for (const ProviderFeatures& p : providers) {
    if (p.n_queries > s) out.push_back(p);
  }
  return out;
}

using Matrix = std::vector<std::vector<double>>;

// Column-wise z-scores; constant columns become 0.
inline Matrix Standardize(const Matrix& x) {
  Require(!x.empty(), ErrorCode::kInvalidArgument, "nothing to standardize");
  const std::size_t n = x.size(), d = x.front().size();
  Matrix z = x;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i][j];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i][j] - mean) * (x[i][j] - mean);
    const double sd = std::sqrt(var / n);
    for (std::size_t i = 0; i < n; ++i) z[i][j] = sd > 0.0 ? (x[i][j] - mean) / sd : 0.0;
  }
  return z;
}

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;
  double inertia = 0.0;
};

namespace attack_internal {

inline double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline KMeansResult KMeansOnce(const Matrix& x, int k, int max_iter, Rng& rng) {
  const std::size_t n = x.size();
  KMeansResult r;
  // k-means++ seeding.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  r.centroids.push_back(x[pick(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(r.centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centroids) best = std::min(best, SquaredDistance(x[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      r.centroids.push_back(x[pick(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        chosen = i;
        break;
      }
    }
    r.centroids.push_back(x[chosen]);
  }
  r.assignment.assign(n, -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = SquaredDistance(x[i], r.centroids[c]);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (best != r.assignment[i]) {
        r.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    for (int c = 0; c < k; ++c) {
      std::vector<double> mean(x.front().size(), 0.0);
      int count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (r.assignment[i] != c) continue;
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += x[i][j];
        ++count;
      }
      if (count == 0) continue;  // empty cluster keeps its centroid
      for (double& v : mean) v /= count;
      r.centroids[c] = std::move(mean);
    }
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.inertia += SquaredDistance(x[i], r.centroids[r.assignment[i]]);
  return r;
}

}  // namespace attack_internal

// Lloyd's algorithm with k-means++ seeding; the lowest-inertia restart wins.
inline KMeansResult KMeans(const Matrix& x, int k, uint64_t seed, int restarts = 10, int max_iter = 100) {
  Require(k >= 1 && static_cast<int>(x.size()) >= k, ErrorCode::kInvalidArgument, "need at least k points");
  Require(restarts >= 1 && max_iter >= 1, ErrorCode::kInvalidArgument, "restarts and iterations must be >= 1");
  Rng rng = MakeRng(seed, "kmeans");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult cur = attack_internal::KMeansOnce(x, k, max_iter, rng);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

struct AttackPrediction {
  std::vector<int> provider_ids;
  std::vector<bool> member;
  // Set when the attack could not separate anything (all inputs identical).
  bool degenerate = false;
};

// Two-cluster split of `values` (one score per row of x); the cluster with the
// higher mean score is labeled member.
inline std::vector<bool> TwoMeansLabels(const Matrix& x, std::span<const double> score, uint64_t seed,
                                        bool* degenerate = nullptr) {
  Require(x.size() == score.size() && x.size() >= 2, ErrorCode::kInvalidArgument, "need at least two points");
  bool all_same = true;
  for (const auto& row : x) all_same = all_same && row == x.front();
  if (degenerate != nullptr) *degenerate = all_same;
  if (all_same) return std::vector<bool>(x.size(), false);
  const KMeansResult km = KMeans(Standardize(x), 2, seed);
  double sum[2] = {0, 0};
  int cnt[2] = {0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum[km.assignment[i]] += score[i];
    ++cnt[km.assignment[i]];
  }
  const double m0 = cnt[0] ? sum[0] / cnt[0] : -std::numeric_limits<double>::infinity();
  const double m1 = cnt[1] ? sum[1] / cnt[1] : -std::numeric_limits<double>::infinity();
  const int member_cluster = m1 > m0 ? 1 : 0;
  std::vector<bool> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = km.assignment[i] == member_cluster;
  return out;
}

// Zero-knowledge attack on G1 features (ACC mean/std, NLS mean/std).
inline AttackPrediction AzkAttack(std::span<const ProviderFeatures> providers, uint64_t seed) {
  Require(providers.size() >= 2, ErrorCode::kInvalidArgument, "AZK needs at least two providers");
  Matrix x;
  std::vector<double> acc;
  AttackPrediction out;
  for (const ProviderFeatures& p : providers) {
    Require(p.features.size() >= 4, ErrorCode::kInvalidArgument, "AZK needs G1 features");
    x.emplace_back(p.features.begin(), p.features.begin() + 4);
    acc.push_back(p.features[0]);
    out.provider_ids.push_back(p.provider_id);
  }
  out.member = TwoMeansLabels(x, acc, seed, &out.degenerate);
  return out;
}

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double p_member = 0.0;
};

struct RandomForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_samples_split = 2;
};

class RandomForest {
 public:
  static RandomForest Fit(const Matrix& x, const std::vector<bool>& y, uint64_t seed,
                          const RandomForestConfig& cfg = {}) {
    Require(!x.empty() && x.size() == y.size(), ErrorCode::kInvalidArgument, "bad training set");
    const bool first = y.front();
    Require(std::any_of(y.begin(), y.end(), [&](bool v) { return v != first; }), ErrorCode::kInvalidArgument,
            "random forest needs both classes in the training set");
    RandomForest f;
    f.dim_ = x.front().size();
    const int mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(f.dim_))));
    for (int t = 0; t < cfg.n_trees; ++t) {
      Rng rng = MakeRng(seed, "forest-tree", {static_cast<uint64_t>(t)});
      std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
      std::vector<std::size_t> sample(x.size());
      for (auto& s : sample) s = pick(rng);
      std::vector<TreeNode> tree;
      f.Grow(tree, x, y, sample, 0, cfg, mtry, rng);
      f.trees_.push_back(std::move(tree));
    }
    return f;
  }

  // Fraction of trees voting member.
  double VoteShare(std::span<const double> v) const {
    Require(v.size() == dim_, ErrorCode::kInvalidArgument, "feature dimension mismatch");
    int votes = 0;
    for (const auto& tree : trees_) {
      int node = 0;
      while (tree[node].feature >= 0) {
        node = v[tree[node].feature] <= tree[node].threshold ? tree[node].left : tree[node].right;
      }
      votes += tree[node].p_member > 0.5 ? 1 : 0;
    }
    return static_cast<double>(votes) / trees_.size();
  }

  bool Predict(std::span<const double> v) const { return VoteShare(v) > 0.5; }

  const std::vector<std::vector<TreeNode>>& trees() const { return trees_; }

 private:
  static double Gini(int pos, int n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / n;
    return 2.0 * p * (1.0 - p);
  }

  int Grow(std::vector<TreeNode>& tree, const Matrix& x, const std::vector<bool>& y,
           std::vector<std::size_t> idx, int depth, const RandomForestConfig& cfg, int mtry, Rng& rng) {
    const int node = static_cast<int>(tree.size());
    tree.emplace_back();
    int pos = 0;
    for (std::size_t i : idx) pos += y[i] ? 1 : 0;
    const int n = static_cast<int>(idx.size());
    tree[node].p_member = static_cast<double>(pos) / n;
    if (depth >= cfg.max_depth || n < cfg.min_samples_split || pos == 0 || pos == n) return node;

    std::vector<int> features(dim_);
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng);
    features.resize(std::min<std::size_t>(mtry, dim_));

    const double parent = Gini(pos, n);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, bool>> col(n);
    for (int f : features) {
      for (int i = 0; i < n; ++i) col[i] = {x[idx[i]][f], y[idx[i]]};
      std::sort(col.begin(), col.end());
      int left_pos = 0;
      for (int i = 0; i + 1 < n; ++i) {
        left_pos += col[i].second ? 1 : 0;
        if (col[i].first == col[i + 1].first) continue;
        const int nl = i + 1, nr = n - nl;
        const double child = (nl * Gini(left_pos, nl) + nr * Gini(pos - left_pos, nr)) / n;
        if (parent - child > best_gain) {
          best_gain = parent - child;
          best_feature = f;
          best_threshold = 0.5 * (col[i].first + col[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return node;
    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) (x[i][best_feature] <= best_threshold ? li : ri).push_back(i);
    tree[node].feature = best_feature;
    tree[node].threshold = best_threshold;
    const int l = Grow(tree, x, y, std::move(li), depth + 1, cfg, mtry, rng);
    tree[node].left = l;
    const int r = Grow(tree, x, y, std::move(ri), depth + 1, cfg, mtry, rng);
    tree[node].right = r;
    return node;
  }

  std::size_t dim_ = 0;
  std::vector<std::vector<TreeNode>> trees_;
};

struct ApkSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Samples a fraction r of the providers as attacker knowledge, then
// downsamples the larger class so both are equally represented. The rest is
// the evaluation set.
inline ApkSplit SampleApkTraining(std::span<const ProviderFeatures> providers, double r, uint64_t seed) {
  Require(r > 0.0 && r < 1.0, ErrorCode::kInvalidArgument, "r must lie in (0, 1)");
  Rng rng = MakeRng(seed, "apk-sample");
  std::vector<std::size_t> order(providers.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(r * providers.size())));
  Require(n_train < providers.size(), ErrorCode::kInvalidArgument, "too few providers for the APK split");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n_train; ++i) (providers[order[i]].member ? pos : neg).push_back(order[i]);
  const std::size_t keep = std::min(pos.size(), neg.size());
  Require(keep > 0, ErrorCode::kFailedPrecondition, "APK training sample holds a single class");
  ApkSplit s;
  s.train.assign(pos.begin(), pos.begin() + keep);
  s.train.insert(s.train.end(), neg.begin(), neg.begin() + keep);
  std::sort(s.train.begin(), s.train.end());
  s.test.assign(order.begin() + n_train, order.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline AttackPrediction ApkAttack(std::span<const ProviderFeatures> train, std::span<const ProviderFeatures> test,
                                  uint64_t seed, const RandomForestConfig& cfg = {}) {
  Matrix x;
  std::vector<bool> y;
  for (const ProviderFeatures& p : train) {
    x.push_back(p.features);
    y.push_back(p.member);
  }
  const RandomForest forest = RandomForest::Fit(x, y, seed, cfg);
  AttackPrediction out;
  for (const ProviderFeatures& p : test) {
    out.provider_ids.push_back(p.provider_id);
    out.member.push_back(forest.Predict(p.features));
  }
  return out;
}

// Majority of {main, nls_mem > 0, 2-means on delta_nls_mem}. `providers`
// must carry G4 features (the last four entries) and align with `main`.
inline AttackPrediction Ensemble(const AttackPrediction& main, std::span<const ProviderFeatures> providers,
                                 uint64_t seed) {
  Require(main.member.size() == providers.size(), ErrorCode::kInvalidArgument,
          "ensemble inputs must align");
  Matrix delta;
  std::vector<double> delta_score;
  for (const ProviderFeatures& p : providers) {
    Require(p.features.size() >= 4, ErrorCode::kInvalidArgument, "ensemble needs G4 features");
    const double d = p.features[p.features.size() - 2];
    delta.push_back({d});
    delta_score.push_back(d);
  }
  std::vector<bool> cls2(providers.size(), false);
  if (providers.size() >= 2) cls2 = TwoMeansLabels(delta, delta_score, DeriveSeed(seed, "ensemble"));
  AttackPrediction out = main;
  for (std::size_t i = 0; i < providers.size(); ++i) {
    const bool cls1 = providers[i].features[providers[i].features.size() - 4] > 0.0;
    const int votes = (main.member[i] ? 1 : 0) + (cls1 ? 1 : 0) + (cls2[i] ? 1 : 0);
    out.member[i] = votes >= 2;
  }
  return out;
}

inline double AttackAccuracy(const AttackPrediction& pred, std::span<const ProviderFeatures> truth) {
  Require(!truth.empty(), ErrorCode::kFailedPrecondition, "no providers to score");
  Require(pred.member.size() == truth.size(), ErrorCode::kInvalidArgument, "predictions must cover every provider");
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    Require(pred.provider_ids[i] == truth[i].provider_id, ErrorCode::kInvalidArgument, "prediction order mismatch");
    correct += pred.member[i] == truth[i].member ? 1 : 0;
  }
  return 100.0 * correct / truth.size();
}

enum class AttackSetting { kAzk, kApk, kEnsemble };

inline AttackSetting ParseAttackSetting(const std::string& s) {
  if (s == "azk") return AttackSetting::kAzk;
  if (s == "apk") return AttackSetting::kApk;
  if (s == "ensemble") return AttackSetting::kEnsemble;
  Fail(ErrorCode::kConfig, "unknown attack setting '" + s + "' (azk, apk, ensemble)");
}

inline const char* AttackSettingName(AttackSetting s) {
  switch (s) {
    case AttackSetting::kAzk: return "azk";
    case AttackSetting::kApk: return "apk";
    case AttackSetting::kEnsemble: return "ensemble";
  }
  return "?";
}

struct AttackConfig {
  AttackSetting setting = AttackSetting::kAzk;
  // Providers need strictly more than s queries.
  int s = 5;
  double r = 0.15;
  int n_seeds = 5;
  FeatureGroups groups = 0b0001;
  uint64_t seed = 0;
};

inline void ValidateAttackConfig(const AttackConfig& c) {
  Require(c.r > 0.0 && c.r < 1.0, ErrorCode::kConfig, "attack r must lie in (0, 1)");
  Require(c.s >= 0, ErrorCode::kConfig, "attack s must be >= 0");
  Require(c.n_seeds >= 1, ErrorCode::kConfig, "attack needs at least one seed");
  Require(c.groups != 0 && c.groups < 16, ErrorCode::kConfig, "bad feature groups");
  if (c.setting == AttackSetting::kAzk) {
    Require(c.groups == 0b0001, ErrorCode::kConfig, "AZK uses G1 features only");
  }
  if (c.setting == AttackSetting::kEnsemble) {
    Require((c.groups & 0b1000) != 0, ErrorCode::kConfig, "the ensemble needs G4 features");
  }
}

struct AttackOutcome {
  std::vector<double> per_seed;  // accuracy in percent
  double mean = 0.0;
  double std = 0.0;  // population std over seeds
  int n_providers = 0;
};

// Runs the configured attack once per seed on the T_s-filtered providers.
inline AttackOutcome EvalAttack(std::span<const MetricRow> rows, const AttackConfig& cfg) {
  ValidateAttackConfig(cfg);
  const std::vector<ProviderFeatures> all = AggregateFeatures(rows, cfg.groups);
  const std::vector<ProviderFeatures> kept = FilterMinQueries(all, cfg.s);
  Require(kept.size() >= 2, ErrorCode::kFailedPrecondition,
          "fewer than two providers have more than s queries");
  AttackOutcome out;
  out.n_providers = static_cast<int>(kept.size());
  for (int i = 0; i < cfg.n_seeds; ++i) {
    const uint64_t seed = DeriveSeed(cfg.seed, "attack", {static_cast<uint64_t>(i)});
    double acc = 0.0;
    if (cfg.setting == AttackSetting::kAzk) {
      acc = AttackAccuracy(AzkAttack(kept, seed), kept);
    } else {
      const ApkSplit split = SampleApkTraining(kept, cfg.r, seed);
      std::vector<ProviderFeatures> train, test;
      for (std::size_t j : split.train) train.push_back(kept[j]);
      for (std::size_t j : split.test) test.push_back(kept[j]);
      AttackPrediction pred = ApkAttack(train, test, seed);
      if (cfg.setting == AttackSetting::kEnsemble) pred = Ensemble(pred, test, seed);
      acc = AttackAccuracy(pred, test);
    }
    out.per_seed.push_back(acc);
  }
  double sum = 0.0;
  for (double a : out.per_seed) sum += a;
  out.mean = sum / out.per_seed.size();
  double sq = 0.0;
  for (double a : out.per_seed) sq += (a - out.mean) * (a - out.mean);
  out.std = std::sqrt(sq / out.per_seed.size());
  return out;
}

}  // namespace provdp
