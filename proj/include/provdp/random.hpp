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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace provdp {

using Rng = std::mt19937_64;

inline uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Expands one seed into independent named streams ("corpus", "noise", ...),
// optionally indexed (round, client, slot). Changing one stream's consumer
// never perturbs another stream.
inline uint64_t DeriveSeed(uint64_t seed, std::string_view stream,
                           std::initializer_list<uint64_t> indices = {}) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  uint64_t state = SplitMix64(seed ^ SplitMix64(h));
  for (uint64_t index : indices) state = SplitMix64(state ^ SplitMix64(index + 0x51ed27));
  return state;
}

inline Rng MakeRng(uint64_t seed, std::string_view stream,
                   std::initializer_list<uint64_t> indices = {}) {
  return Rng(DeriveSeed(seed, stream, indices));
}

// Poisson sampling: each of `n` items is included independently with
// probability q. Returns included indices in increasing order.
inline std::vector<int> PoissonSample(int n, double q, Rng& rng) {
  std::vector<int> picked;
  if (q >= 1.0) {
    picked.reserve(n);
    for (int i = 0; i < n; ++i) picked.push_back(i);
    return picked;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    if (unit(rng) < q) picked.push_back(i);
  }
  return picked;
}

}  // namespace provdp
