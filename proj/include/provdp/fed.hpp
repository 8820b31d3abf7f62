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

// Federated training drivers: FedAvg, federated provider-level DP, and the
// centralized (single-client) variants of both.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "provdp/corpus.hpp"
#include "provdp/dp.hpp"
#include "provdp/error.hpp"
#include "provdp/model.hpp"
#include "provdp/random.hpp"
#include "provdp/secagg.hpp"

namespace provdp {

// One client's encoded training data, grouped by provider: provider i owns
// examples[provider_begin[i], provider_begin[i + 1]).
struct ClientData {
  int client_id = 0;
  std::vector<int> provider_ids;
  std::vector<std::size_t> provider_begin;
  std::vector<TrainingExample> examples;

  std::size_t n_providers() const { return provider_ids.size(); }
  std::span<const TrainingExample> provider_examples(std::size_t i) const {
    return std::span<const TrainingExample>(examples).subspan(provider_begin[i],
                                                              provider_begin[i + 1] - provider_begin[i]);
  }
};

inline ClientData MakeClientData(const QaModel& model, const Corpus& corpus, int client_id,
                                 std::span<const int> doc_ids) {
  std::map<int, std::vector<int>> by_provider;
  for (int d : doc_ids) by_provider[corpus.document(d).provider_id].push_back(d);
  ClientData c;
  c.client_id = client_id;
  for (auto& [p, docs] : by_provider) {
    std::sort(docs.begin(), docs.end());
    c.provider_ids.push_back(p);
    c.provider_begin.push_back(c.examples.size());
    for (TrainingExample& ex : EncodeDocs(model, corpus, docs)) c.examples.push_back(std::move(ex));
  }
  c.provider_begin.push_back(c.examples.size());
  return c;
}

inline std::vector<ClientData> MakeClientData(const QaModel& model, const Corpus& corpus,
                                              std::span<const ClientShard> shards) {
  std::vector<ClientData> out;
  for (const ClientShard& s : shards) out.push_back(MakeClientData(model, corpus, s.client_id, s.doc_ids));
  return out;
}

struct FlConfig {
  int rounds = 10;
  // Expected sampled clients per round is q_client * N.
  double q_client = 1.0;
  TrainHyper hyper;
  // Absent: non-private training.
  std::optional<DpConfig> dp;
  bool secure_aggregation = false;
  // Transmission size of one parameter, for the communication estimate.
  int bytes_per_param = 4;
  uint64_t seed = 0;
};

inline void ValidateFlConfig(const FlConfig& c) {
  Require(c.rounds >= 0, ErrorCode::kInvalidArgument, "rounds must be >= 0");
  Require(c.q_client > 0.0 && c.q_client <= 1.0, ErrorCode::kInvalidArgument, "q_client must lie in (0, 1]");
  Require(c.bytes_per_param >= 0, ErrorCode::kInvalidArgument, "bytes_per_param must be >= 0");
  ValidateTrainHyper(c.hyper);
}

struct RoundRecord {
  int round = 0;
  std::vector<int> sampled_clients;
  std::vector<int> providers_per_client;
  std::vector<double> pre_clip_norms;
  std::vector<double> post_clip_norms;
  // Per-coordinate std of the noise each client added (server-side std on
  // empty DP rounds); 0 when non-private.
  double noise_std = 0.0;
  bool server_noise = false;
  uint64_t bytes = 0;
  std::size_t secagg_wire_bytes = 0;

  int providers_sampled() const {
    int n = 0;
    for (int c : providers_per_client) n += c;
    return n;
  }
  // Mean of post/pre clip norm over the round's provider updates (1 when
  // nothing was clipped or nothing was recorded).
  double mean_clip_ratio() const {
    if (pre_clip_norms.empty()) return 1.0;
    double s = 0.0;
    for (std::size_t i = 0; i < pre_clip_norms.size(); ++i) {
      s += pre_clip_norms[i] > 0.0 ? post_clip_norms[i] / pre_clip_norms[i] : 1.0;
    }
    return s / pre_clip_norms.size();
  }
};

struct TrainResult {
  ParameterVector params;
  std::vector<RoundRecord> rounds;
  // Noise multiplier actually used (0 when non-private).
  double noise_multiplier = 0.0;
  // Accounted epsilon at the configured delta (absent when non-private).
  std::optional<double> epsilon;
  int min_providers = 0;
};

// rounds * sampled * 2 * params * bytes / 1e9 (download + upload).
inline double CommunicationCostGb(int rounds, int sampled_per_round, std::size_t trainable_params,
                                  int bytes_per_param) {
  Require(rounds >= 0 && sampled_per_round >= 0 && bytes_per_param >= 0, ErrorCode::kInvalidArgument,
          "communication cost inputs must be >= 0");
  return static_cast<double>(rounds) * sampled_per_round * 2.0 * static_cast<double>(trainable_params) *
         bytes_per_param / 1e9;
}

inline double CommunicationCostGb(std::span<const RoundRecord> rounds) {
  double bytes = 0.0;
  for (const RoundRecord& r : rounds) bytes += static_cast<double>(r.bytes);
  return bytes / 1e9;
}

inline uint64_t RoundBytes(std::size_t sampled, std::size_t trainable_params, int bytes_per_param) {
  return static_cast<uint64_t>(sampled) * 2 * trainable_params * static_cast<uint64_t>(bytes_per_param);
}

namespace fed_internal {

inline std::vector<double> Difference(const ParameterVector& a, const ParameterVector& b) {
  std::vector<double> d(a.values.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values[i] - b.values[i];
  return d;
}

inline void AddInto(std::vector<double>& acc, std::span<const double> v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

// Sum in the given order, starting from the first vector.
inline std::vector<double> SumInOrder(const std::vector<std::vector<double>>& vs) {
  std::vector<double> acc = vs.front();
  for (std::size_t k = 1; k < vs.size(); ++k) AddInto(acc, vs[k]);
  return acc;
}

inline void ApplyAverage(ParameterVector& w, std::span<const double> sum, std::size_t n) {
  const double denom = static_cast<double>(n);
  for (std::size_t i = 0; i < sum.size(); ++i) w.values[i] += sum[i] / denom;
}

inline uint64_t LocalSeed(uint64_t seed, int round, int client, std::size_t slot) {
  return DeriveSeed(seed, "local", {static_cast<uint64_t>(round), static_cast<uint64_t>(client), slot});
}

inline void CheckClients(std::span<const ClientData> clients) {
  Require(!clients.empty(), ErrorCode::kInvalidArgument, "need at least one client");
  for (const ClientData& c : clients) {
    Require(c.provider_begin.size() == c.provider_ids.size() + 1, ErrorCode::kInvalidArgument,
            "malformed client data");
  }
}

}  // namespace fed_internal

// Client-side step of the provider-level DP round: clip each provider delta
// to C, sum, add N(0, noise_std^2) per coordinate, divide by M.
inline std::vector<double> ClientDpUpdate(std::vector<std::vector<double>> provider_deltas, double clip_norm,
                                          double noise_std, int min_providers, std::size_t dim, Rng& noise_rng,
                                          RoundRecord* record = nullptr) {
  Require(min_providers >= 1, ErrorCode::kInvalidArgument, "M must be >= 1");
  std::vector<double> sum;
  for (std::vector<double>& d : provider_deltas) {
    const double pre = L2Norm(d);
    std::vector<double> clipped = ClipUpdate(d, clip_norm);
    if (record != nullptr) {
      record->pre_clip_norms.push_back(pre);
      record->post_clip_norms.push_back(L2Norm(clipped));
    }
    if (sum.empty()) {
      sum = std::move(clipped);
    } else {
      fed_internal::AddInto(sum, clipped);
    }
  }
  if (sum.empty()) sum.assign(dim, 0.0);
  if (noise_std > 0.0) fed_internal::AddInto(sum, GaussianNoise(dim, noise_std, noise_rng));
  const double m = static_cast<double>(min_providers);
  for (double& x : sum) x /= m;
  return sum;
}

inline TrainResult RunFedAvg(const QaModel& model, const ParameterVector& init, std::span<const ClientData> clients,
                             const FlConfig& config) {
  ValidateFlConfig(config);
  Require(!config.dp.has_value(), ErrorCode::kInvalidArgument, "FedAvg runs without a DP config");
  fed_internal::CheckClients(clients);
  model.CheckParams(init);
  const int n = static_cast<int>(clients.size());
  TrainResult result{init, {}, 0.0, std::nullopt, 0};
  for (int t = 1; t <= config.rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    Rng client_rng = MakeRng(config.seed, "clients", {static_cast<uint64_t>(t)});
    std::vector<std::vector<double>> updates;
    for (int k : PoissonSample(n, config.q_client, client_rng)) {
      const ClientData& c = clients[k];
      rec.sampled_clients.push_back(c.client_id);
      rec.providers_per_client.push_back(static_cast<int>(c.n_providers()));
      if (c.examples.empty()) {
        updates.emplace_back(init.values.size(), 0.0);
        continue;
      }
      ParameterVector local = TrainLocal(model, result.params, c.examples, config.hyper,
                                         fed_internal::LocalSeed(config.seed, t, c.client_id, 0));
      updates.push_back(fed_internal::Difference(local, result.params));
    }
    rec.bytes = RoundBytes(updates.size(), result.params.layout.trainable_count(), config.bytes_per_param);
    if (!updates.empty()) {
      fed_internal::ApplyAverage(result.params, fed_internal::SumInOrder(updates), updates.size());
    }
    result.rounds.push_back(std::move(rec));
  }
  return result;
}

inline int MinProviders(std::span<const ClientData> clients) {
  int m = std::numeric_limits<int>::max();
  for (const ClientData& c : clients) m = std::min(m, static_cast<int>(c.n_providers()));
  return m;
}

// The DpConfig as accounted for this run: rounds and client sampling come
// from the federated config.
inline DpConfig AccountedDpConfig(const FlConfig& config) {
  Require(config.dp.has_value(), ErrorCode::kInvalidArgument, "DP config missing");
  DpConfig dp = *config.dp;
  dp.q_client = config.q_client;
  dp.rounds = std::max(1, config.rounds);
  return dp;
}

inline TrainResult RunFlProviderDp(const QaModel& model, const ParameterVector& init,
                                   std::span<const ClientData> clients, const FlConfig& config) {
  ValidateFlConfig(config);
  fed_internal::CheckClients(clients);
  model.CheckParams(init);
  const DpConfig dp = AccountedDpConfig(config);
  ValidateDpConfig(dp);
  const int n = static_cast<int>(clients.size());
  const int m = MinProviders(clients);
  Require(m >= 1, ErrorCode::kFailedPrecondition, "every client needs at least one provider (M = 0)");
  const double sigma = ResolveNoiseMultiplier(dp);
  const double c_norm = dp.clip_norm;
  const std::size_t dim = init.values.size();

  TrainResult result{init, {}, sigma, std::nullopt, m};
  result.epsilon = Account(sigma, EffectiveSamplingRate(dp), dp.rounds, dp.delta).epsilon;
  for (int t = 1; t <= config.rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    const auto ut = static_cast<uint64_t>(t);
    Rng client_rng = MakeRng(config.seed, "clients", {ut});
    const std::vector<int> sampled = PoissonSample(n, config.q_client, client_rng);
    if (sampled.empty()) {
      // Nobody reports back; the server adds one aggregate's worth of noise.
      rec.noise_std = sigma * c_norm / m;
      rec.server_noise = true;
      Rng noise_rng = MakeRng(config.seed, "server-noise", {ut});
      fed_internal::AddInto(result.params.values, GaussianNoise(dim, rec.noise_std, noise_rng));
      result.rounds.push_back(std::move(rec));
      continue;
    }
    rec.noise_std = sigma * c_norm / std::sqrt(static_cast<double>(sampled.size()));
    std::vector<std::vector<double>> updates;
    double inf_bound = 0.0;
    for (int k : sampled) {
      const ClientData& c = clients[k];
      rec.sampled_clients.push_back(c.client_id);
      Rng provider_rng = MakeRng(config.seed, "providers", {ut, static_cast<uint64_t>(c.client_id)});
      const std::vector<int> chosen = PoissonSample(static_cast<int>(c.n_providers()), dp.q_provider, provider_rng);
      rec.providers_per_client.push_back(static_cast<int>(chosen.size()));
      std::vector<std::vector<double>> deltas;
      for (int j : chosen) {
        ParameterVector local =
            TrainLocal(model, result.params, c.provider_examples(j), config.hyper,
                       fed_internal::LocalSeed(config.seed, t, c.client_id, static_cast<std::size_t>(j)));
        deltas.push_back(fed_internal::Difference(local, result.params));
      }
      Rng noise_rng = MakeRng(config.seed, "noise", {ut, static_cast<uint64_t>(c.client_id)});
      inf_bound = std::max(inf_bound, (chosen.size() * c_norm + 6.0 * rec.noise_std) / m);
      updates.push_back(ClientDpUpdate(std::move(deltas), c_norm, rec.noise_std, m, dim, noise_rng, &rec));
    }
    for (double norm : rec.post_clip_norms) {
      Require(norm <= c_norm, ErrorCode::kNumerical, "post-clip norm exceeds the clip bound");
    }
    rec.bytes = RoundBytes(updates.size(), result.params.layout.trainable_count(), config.bytes_per_param);
    std::vector<double> sum;
    if (config.secure_aggregation) {
      SecureSumResult s = SecureSum(updates, inf_bound, DeriveSeed(config.seed, "secagg", {ut}));
      rec.secagg_wire_bytes = s.wire_bytes;
      sum = std::move(s.sum);
    } else {
      sum = fed_internal::SumInOrder(updates);
    }
    fed_internal::ApplyAverage(result.params, sum, updates.size());
    result.rounds.push_back(std::move(rec));
  }
  return result;
}

// Non-private centralized training: FedAvg over a single client that is
// selected every round.
inline TrainResult RunCentralized(const QaModel& model, const ParameterVector& init, const ClientData& all,
                                  FlConfig config) {
  config.q_client = 1.0;
  return RunFedAvg(model, init, std::span<const ClientData>(&all, 1), config);
}

// Centralized provider-level DP: the federated algorithm with one client.
inline TrainResult RunCentralizedDp(const QaModel& model, const ParameterVector& init, const ClientData& all,
                                    FlConfig config) {
  config.q_client = 1.0;
  return RunFlProviderDp(model, init, std::span<const ClientData>(&all, 1), config);
}

}  // namespace provdp
