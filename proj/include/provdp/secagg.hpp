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

// Additive-mask secure aggregation over Z_p, p = 2^b, with fixed-point
// encoding of real-valued updates. Masks come from a seeded trusted dealer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "provdp/error.hpp"
#include "provdp/random.hpp"

namespace provdp {

inline constexpr int kDefaultFixedPointBits = 20;
inline constexpr int kMaxModulusBits = 63;

struct SecAggConfig {
  int modulus_bits = 32;  // p = 2^modulus_bits
  int fixed_point_bits = kDefaultFixedPointBits;
  int n_clients = 2;
  std::size_t dimension = 0;

  uint64_t modulus() const { return uint64_t{1} << modulus_bits; }
  uint64_t mask() const { return modulus() - 1; }
};

inline void ValidateSecAggConfig(const SecAggConfig& c) {
  Require(c.modulus_bits >= 1 && c.modulus_bits <= kMaxModulusBits, ErrorCode::kInvalidArgument,
          "modulus bits must lie in [1, 63]");
  Require(c.fixed_point_bits >= 0 && c.fixed_point_bits < c.modulus_bits, ErrorCode::kInvalidArgument,
          "fixed-point bits must be below the modulus bits");
  Require(c.n_clients >= 1, ErrorCode::kInvalidArgument, "need at least one client");
}

struct MaskSet {
  int modulus_bits = 0;
  std::vector<std::vector<uint64_t>> keys;
};

// Smallest power of two >= max_inf_norm * n_clients (at least 2). Returns the
// exponent b.
inline int ChooseModulusBits(double max_inf_norm, int n_clients) {
  Require(max_inf_norm > 0.0 && std::isfinite(max_inf_norm), ErrorCode::kInvalidArgument,
          "max_inf_norm must be positive and finite");
  Require(n_clients >= 1, ErrorCode::kInvalidArgument, "need at least one client");
  const double need = max_inf_norm * n_clients;
  int b = 1;
  while (std::ldexp(1.0, b) < need) {
    ++b;
    Require(b <= kMaxModulusBits, ErrorCode::kOutOfRange, "required modulus exceeds 2^63");
  }
  return b;
}

inline uint64_t ChooseModulus(double max_inf_norm, int n_clients) {
  return uint64_t{1} << ChooseModulusBits(max_inf_norm, n_clients);
}

// Uniform keys; the last one is minus the sum of the others.
inline MaskSet GenMasks(const SecAggConfig& c, uint64_t seed) {
  ValidateSecAggConfig(c);
  Require(c.n_clients >= 2, ErrorCode::kInvalidArgument, "masking needs at least two clients");
  const uint64_t m = c.mask();
  MaskSet set;
  set.modulus_bits = c.modulus_bits;
  set.keys.assign(c.n_clients, std::vector<uint64_t>(c.dimension, 0));
  Rng rng = MakeRng(seed, "secagg-dealer");
  std::vector<uint64_t>& last = set.keys.back();
  for (int k = 0; k + 1 < c.n_clients; ++k) {
    for (std::size_t i = 0; i < c.dimension; ++i) {
      const uint64_t v = rng() & m;
      set.keys[k][i] = v;
      last[i] = (last[i] - v) & m;
    }
  }
  return set;
}

inline std::vector<uint64_t> EncodeFixedPoint(std::span<const double> v, int f, int modulus_bits) {
  Require(modulus_bits >= 1 && modulus_bits <= kMaxModulusBits && f >= 0 && f < modulus_bits,
          ErrorCode::kInvalidArgument, "bad fixed-point parameters");
  const uint64_t m = (uint64_t{1} << modulus_bits) - 1;
  const double half = std::ldexp(1.0, modulus_bits - 1);
  std::vector<uint64_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    Require(std::isfinite(v[i]), ErrorCode::kNumerical, "non-finite value in secure aggregation input");
    const double scaled = std::nearbyint(std::ldexp(v[i], f));
    if (!(std::abs(scaled) < half)) {
      Fail(ErrorCode::kOutOfRange, "value " + std::to_string(v[i]) + " exceeds the signed modulus range");
    }
    out[i] = static_cast<uint64_t>(static_cast<int64_t>(scaled)) & m;
  }
  return out;
}

inline std::vector<double> DecodeFixedPoint(std::span<const uint64_t> v, int f, int modulus_bits) {
  Require(modulus_bits >= 1 && modulus_bits <= kMaxModulusBits && f >= 0 && f < modulus_bits,
          ErrorCode::kInvalidArgument, "bad fixed-point parameters");
  const uint64_t p = uint64_t{1} << modulus_bits;
  const uint64_t half = p >> 1;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    Require(v[i] < p, ErrorCode::kOutOfRange, "coordinate outside [0, p)");
    const int64_t s = v[i] >= half ? static_cast<int64_t>(v[i]) - static_cast<int64_t>(p)
                                   : static_cast<int64_t>(v[i]);
    out[i] = std::ldexp(static_cast<double>(s), -f);
  }
  return out;
}

inline std::vector<uint64_t> ApplyMask(std::span<const uint64_t> encoded, std::span<const uint64_t> key,
                                       int modulus_bits) {
  Require(encoded.size() == key.size(), ErrorCode::kInvalidArgument, "mask dimension mismatch");
  const uint64_t m = (uint64_t{1} << modulus_bits) - 1;
  std::vector<uint64_t> out(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i) out[i] = (encoded[i] + key[i]) & m;
  return out;
}

inline std::vector<double> UnmaskSum(const std::vector<std::vector<uint64_t>>& masked, int f, int modulus_bits) {
  Require(!masked.empty(), ErrorCode::kInvalidArgument, "nothing to aggregate");
  const uint64_t m = (uint64_t{1} << modulus_bits) - 1;
  std::vector<uint64_t> acc(masked.front().size(), 0);
  for (const auto& v : masked) {
    Require(v.size() == acc.size(), ErrorCode::kInvalidArgument, "masked update dimension mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = (acc[i] + v[i]) & m;
  }
  return DecodeFixedPoint(acc, f, modulus_bits);
}

// Wire format: u32 dimension, u8 log2(p), u8 f, then little-endian u64 values.
struct MaskedUpdate {
  int modulus_bits = 0;
  int fixed_point_bits = 0;
  std::vector<uint64_t> values;

  bool operator==(const MaskedUpdate&) const = default;
};

inline std::string SerializeMaskedUpdate(const MaskedUpdate& u) {
  Require(u.values.size() <= UINT32_MAX, ErrorCode::kOutOfRange, "dimension exceeds u32");
  std::string out;
  out.reserve(6 + 8 * u.values.size());
  const auto put = [&out](uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(u.values.size(), 4);
  put(static_cast<uint64_t>(u.modulus_bits), 1);
  put(static_cast<uint64_t>(u.fixed_point_bits), 1);
  for (uint64_t v : u.values) put(v, 8);
  return out;
}

inline MaskedUpdate ParseMaskedUpdate(std::string_view in) {
  Require(in.size() >= 6, ErrorCode::kInvalidArgument, "truncated masked-update header");
  const auto get = [&in](std::size_t pos, int bytes) {
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
  };
  const uint64_t dim = get(0, 4);
  Require(in.size() == 6 + 8 * dim, ErrorCode::kInvalidArgument, "masked-update length does not match header");
  MaskedUpdate u;
  u.modulus_bits = static_cast<int>(get(4, 1));
  u.fixed_point_bits = static_cast<int>(get(5, 1));
  Require(u.modulus_bits >= 1 && u.modulus_bits <= kMaxModulusBits && u.fixed_point_bits < u.modulus_bits,
          ErrorCode::kInvalidArgument, "bad modulus in masked-update header");
  u.values.resize(dim);
  for (uint64_t i = 0; i < dim; ++i) u.values[i] = get(6 + 8 * i, 8);
  return u;
}

struct SecureSumResult {
  std::vector<double> sum;
  int modulus_bits = 0;
  std::size_t wire_bytes = 0;
};

// Full protocol for one round: encode, mask, serialize, parse, unmask.
// `bound` caps |u_i| for every coordinate of every update; the modulus gets
// one extra bit so the signed sum fits.
inline SecureSumResult SecureSum(const std::vector<std::vector<double>>& updates, double bound, uint64_t seed,
                                 int f = kDefaultFixedPointBits) {
  Require(!updates.empty(), ErrorCode::kInvalidArgument, "nothing to aggregate");
  const int n = static_cast<int>(updates.size());
  SecureSumResult r;
  r.modulus_bits = std::max(f + 1, ChooseModulusBits(2.0 * std::ldexp(bound, f) + 1.0, n));
  Require(r.modulus_bits <= kMaxModulusBits, ErrorCode::kOutOfRange, "required modulus exceeds 2^63");
  SecAggConfig cfg{r.modulus_bits, f, std::max(n, 2), updates.front().size()};
  const MaskSet masks = GenMasks(cfg, seed);
  std::vector<std::vector<uint64_t>> received;
  for (int k = 0; k < n; ++k) {
    MaskedUpdate u{r.modulus_bits, f, ApplyMask(EncodeFixedPoint(updates[k], f, r.modulus_bits), masks.keys[k], r.modulus_bits)};
    const std::string wire = SerializeMaskedUpdate(u);
    r.wire_bytes += wire.size();
    received.push_back(ParseMaskedUpdate(wire).values);
  }
  if (n == 1) received.push_back(masks.keys[1]);  // dealer's share closes the sum
  r.sum = UnmaskSum(received, f, r.modulus_bits);
  return r;
}

}  // namespace provdp
