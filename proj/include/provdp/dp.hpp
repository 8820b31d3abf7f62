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

// Per-provider clipping, the Gaussian mechanism, and a Renyi-DP accountant for
// compositions of Poisson-subsampled Gaussian mechanisms.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "provdp/error.hpp"
#include "provdp/random.hpp"

namespace provdp {

struct DpConfig {
  double epsilon_target = 8.0;
  double delta = 1e-5;
  double clip_norm = 1.0;
  // Negative: calibrate from epsilon_target.
  double noise_multiplier = -1.0;
  double q_client = 1.0;
  double q_provider = 1.0;
  int rounds = 10;
};

inline void ValidateDpConfig(const DpConfig& c) {
  Require(c.delta > 0.0 && c.delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  Require(c.clip_norm > 0.0, ErrorCode::kInvalidArgument, "clip_norm must be > 0");
  Require(c.q_client > 0.0 && c.q_client <= 1.0 && c.q_provider > 0.0 && c.q_provider <= 1.0,
          ErrorCode::kInvalidArgument, "sampling probabilities must lie in (0, 1]");
  Require(c.rounds >= 1, ErrorCode::kInvalidArgument, "rounds must be >= 1");
  Require(c.noise_multiplier >= 0.0 || c.epsilon_target > 0.0, ErrorCode::kInvalidArgument,
          "need a noise multiplier or a positive epsilon target");
}

inline double L2Norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Scales v to L2 norm at most C; vectors already inside the ball are returned
// bit-for-bit unchanged.
inline std::vector<double> ClipUpdate(std::span<const double> v, double clip_norm) {
  Require(clip_norm > 0.0, ErrorCode::kInvalidArgument, "clip norm must be > 0");
  const double norm = L2Norm(v);
  Require(std::isfinite(norm), ErrorCode::kNumerical, "non-finite update");
  std::vector<double> out(v.begin(), v.end());
  if (norm <= clip_norm) return out;
  const double scale = norm / clip_norm;
  for (double& x : out) x /= scale;
  // Rounding can leave the result a hair above C.
  while (L2Norm(out) > clip_norm) {
    for (double& x : out) x = std::nextafter(x, 0.0);
  }
  return out;
}

inline std::vector<double> GaussianNoise(std::size_t dim, double stddev, Rng& rng) {
  Require(stddev >= 0.0, ErrorCode::kInvalidArgument, "noise stddev must be >= 0");
  std::vector<double> out(dim, 0.0);
  if (stddev == 0.0) return out;
  std::normal_distribution<double> g(0.0, stddev);
  for (double& x : out) x = g(rng);
  return out;
}

// {1.5, 2, 2.5, ..., 63.5} plus {128, 256}.
inline std::vector<double> DefaultRdpOrders() {
  std::vector<double> orders;
  for (int i = 3; i <= 127; ++i) orders.push_back(0.5 * i);
  orders.push_back(128.0);
  orders.push_back(256.0);
  return orders;
}

struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> losses;
};

struct AccountantResult {
  double epsilon = 0.0;
  double best_order = 0.0;
  // Composed per-order losses (T times the single-step curve).
  RdpCurve composed;
  int mechanisms = 0;
};

namespace rdp_internal {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

inline double LogSub(double a, double b) {
  Require(a >= b, ErrorCode::kNumerical, "log-space subtraction of a larger term");
  if (b == kNegInf) return a;
  if (a == b) return kNegInf;
  return a + std::log1p(-std::exp(b - a));
}

inline double LogErfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  // Asymptotic expansion; erfc underflows past x ~ 26.
  const double r = 1.0 / (x * x);
  return -x * x - std::log(x) - 0.5 * std::log(M_PI) +
         std::log1p(-0.5 * r + 0.75 * r * r - 1.875 * r * r * r);
}

inline double LogBinomialInt(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log A_alpha for integer alpha (binomial expansion).
inline double LogAInt(double q, double sigma, int alpha) {
  double log_a = kNegInf;
  for (int i = 0; i <= alpha; ++i) {
    const double log_coef = LogBinomialInt(alpha, i) + i * std::log(q) + (alpha - i) * std::log1p(-q);
    log_a = LogAdd(log_a, log_coef + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma));
  }
  return log_a;
}

// log A_alpha for fractional alpha: two-sided series split at z0 with erfc
// tails; terms alternate in sign once i exceeds alpha.
inline double LogAFrac(double q, double sigma, double alpha) {
  double log_a0 = kNegInf, log_a1 = kNegInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  double log_coef = 0.0;  // log |binom(alpha, i)|
  double sign = 1.0;
  for (int i = 0;; ++i) {
    if (i > 0) {
      const double factor = (alpha - i + 1.0) / i;
      log_coef += std::log(std::abs(factor));
      if (factor < 0) sign = -sign;
    }
    const double j = alpha - i;
    const double log_t0 = log_coef + i * std::log(q) + j * std::log1p(-q);
    const double log_t1 = log_coef + j * std::log(q) + i * std::log1p(-q);
    const double log_e0 = std::log(0.5) + LogErfc((i - z0) / (std::sqrt(2.0) * sigma));
    const double log_e1 = std::log(0.5) + LogErfc((z0 - j) / (std::sqrt(2.0) * sigma));
    const double log_s0 = log_t0 + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (sign > 0) {
      log_a0 = LogAdd(log_a0, log_s0);
      log_a1 = LogAdd(log_a1, log_s1);
    } else {
      log_a0 = LogSub(log_a0, log_s0);
      log_a1 = LogSub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0 || i > 100000) break;
  }
  return LogAdd(log_a0, log_a1);
}

}  // namespace rdp_internal

// Renyi-DP of one Poisson-subsampled Gaussian step (sensitivity 1, noise
// multiplier sigma, sampling rate q) at each order. sigma = 0 yields +inf.
inline double RdpAtOrder(double sigma, double q, double alpha) {
  Require(q > 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "sampling rate must lie in (0, 1]");
  Require(alpha > 1.0, ErrorCode::kInvalidArgument, "Renyi orders must be > 1");
  Require(sigma >= 0.0, ErrorCode::kInvalidArgument, "sigma must be >= 0");
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  const double log_a = alpha == std::floor(alpha)
                           ? rdp_internal::LogAInt(q, sigma, static_cast<int>(alpha))
                           : rdp_internal::LogAFrac(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1.0));
}

inline RdpCurve ComputeRdpCurve(double sigma, double q, const std::vector<double>& orders = DefaultRdpOrders()) {
  RdpCurve curve;
  curve.orders = orders;
  curve.losses.reserve(orders.size());
  for (double a : orders) curve.losses.push_back(RdpAtOrder(sigma, q, a));
  return curve;
}

// T-fold composition, then the RDP -> (eps, delta) conversion
//   eps = T*rdp(a) + log1p(-1/a) - (log(delta) + log(a)) / (a - 1),
// minimized over the order grid.
inline AccountantResult ComposeAndConvert(const RdpCurve& curve, int steps, double delta) {
  Require(steps >= 1, ErrorCode::kInvalidArgument, "need at least one mechanism");
  Require(delta > 0.0 && delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  Require(!curve.orders.empty() && curve.orders.size() == curve.losses.size(),
          ErrorCode::kInvalidArgument, "malformed RDP curve");
  AccountantResult r;
  r.mechanisms = steps;
  r.composed.orders = curve.orders;
  r.epsilon = std::numeric_limits<double>::infinity();
  r.best_order = curve.orders.front();
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const double a = curve.orders[i];
    const double composed = steps * curve.losses[i];
    r.composed.losses.push_back(composed);
    const double eps = composed + std::log1p(-1.0 / a) - (std::log(delta) + std::log(a)) / (a - 1.0);
    if (eps < r.epsilon) {
      r.epsilon = eps;
      r.best_order = a;
    }
  }
  r.epsilon = std::max(0.0, r.epsilon);
  return r;
}

inline AccountantResult Account(double sigma, double q, int steps, double delta,
                                const std::vector<double>& orders = DefaultRdpOrders()) {
  return ComposeAndConvert(ComputeRdpCurve(sigma, q, orders), steps, delta);
}

// Smallest sigma (to within `tolerance`) whose composed epsilon does not
// exceed the target.
inline double CalibrateSigma(double epsilon_target, double delta, double q, int steps,
                             double tolerance = 1e-4,
                             const std::vector<double>& orders = DefaultRdpOrders()) {
  Require(epsilon_target > 0.0, ErrorCode::kInvalidArgument, "epsilon target must be > 0");
  auto eps_at = [&](double sigma) { return Account(sigma, q, steps, delta, orders).epsilon; };
  double lo = 0.0, hi = 1.0;
  while (eps_at(hi) > epsilon_target) {
    lo = hi;
    hi *= 2.0;
    Require(hi < 1e6, ErrorCode::kOutOfRange, "noise calibration search bounds exhausted");
  }
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) > epsilon_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

// Effective per-round sampling rate of the two-level (client, provider)
// Poisson sampling, accounted as one subsampling step.
inline double EffectiveSamplingRate(const DpConfig& c) { return c.q_client * c.q_provider; }

inline double ResolveNoiseMultiplier(const DpConfig& c) {
  ValidateDpConfig(c);
  if (c.noise_multiplier >= 0.0) return c.noise_multiplier;
  return CalibrateSigma(c.epsilon_target, c.delta, EffectiveSamplingRate(c), c.rounds);
}

}  // namespace provdp
