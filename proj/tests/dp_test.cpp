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

#include "provdp/dp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pld_oracle.hpp"

namespace provdp {
namespace {

constexpr double kSigma8 = 0.83251953125;
constexpr double kSigma1 = 3.3203125;
constexpr double kQ = 1000.0 / 4149.0;

TEST(Clip, Examples) {
  const std::vector<double> v = {3, 4};
  EXPECT_EQ(ClipUpdate(v, 10), v);
  const auto c = ClipUpdate(v, 1);
  EXPECT_NEAR(c[0], 0.6, 1e-15);
  EXPECT_NEAR(c[1], 0.8, 1e-15);
  EXPECT_EQ(ClipUpdate(std::vector<double>(5, 0.0), 1), std::vector<double>(5, 0.0));
  EXPECT_THROW(ClipUpdate(std::vector<double>{NAN, 1}, 1), Error);
  EXPECT_THROW(ClipUpdate(v, 0), Error);
}

TEST(Clip, IdempotentBoundedAndDirectionPreserving) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> scale(0.01, 100.0), cdist(0.01, 10.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> v(1 + i % 50);
    const double s = scale(rng);
    for (double& x : v) x = s * g(rng);
    const double c = cdist(rng);
    const auto once = ClipUpdate(v, c);
    EXPECT_LE(L2Norm(once), c);
    EXPECT_EQ(ClipUpdate(once, c), once);
    // Cosine of the angle to the input stays 1.
    double dot = 0;
    for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * once[k];
    if (L2Norm(v) > 0) {
      EXPECT_NEAR(dot / (L2Norm(v) * L2Norm(once)), 1.0, 1e-12);
    }
  }
}

TEST(Noise, ZeroStdAndDeterminism) {
  Rng a = MakeRng(3, "n"), b = MakeRng(3, "n");
  EXPECT_EQ(GaussianNoise(10, 0.0, a), std::vector<double>(10, 0.0));
  Rng c = MakeRng(3, "n");
  EXPECT_EQ(GaussianNoise(100, 1.5, b), GaussianNoise(100, 1.5, c));
  EXPECT_THROW(GaussianNoise(1, -1.0, a), Error);
}

TEST(Noise, EmpiricalStdWithinTwoPercent) {
  Rng rng = MakeRng(4, "n");
  const auto v = GaussianNoise(100000, 2.5, rng);
  double m = 0, s = 0;
  for (double x : v) m += x;
  m /= v.size();
  for (double x : v) s += (x - m) * (x - m);
  EXPECT_NEAR(std::sqrt(s / (v.size() - 1)), 2.5, 0.02 * 2.5);
  EXPECT_NEAR(m, 0.0, 0.05);
}

TEST(Rdp, ClosedFormWithoutSubsampling) {
  EXPECT_DOUBLE_EQ(RdpAtOrder(1, 1, 2), 1.0);
  for (double a : DefaultRdpOrders()) EXPECT_DOUBLE_EQ(RdpAtOrder(2.5, 1.0, a), a / (2 * 2.5 * 2.5));
  EXPECT_TRUE(std::isinf(RdpAtOrder(0, 0.5, 2)));
  EXPECT_LE(RdpAtOrder(1, 0.5, 2), RdpAtOrder(1, 1, 2));
  EXPECT_THROW(RdpAtOrder(1, 0, 2), Error);
  EXPECT_THROW(RdpAtOrder(1, 0.5, 1), Error);
}

TEST(Rdp, MatchesQuadratureOracle) {
  EXPECT_NEAR(RdpAtOrder(2, 0.1, 8) / oracle::RenyiByQuadrature(2, 0.1, 8), 1.0, 0.05);
  for (double sigma : {0.7, 1.3, 4.0}) {
    for (double q : {0.01, 0.2, 0.7}) {
      for (double a : {1.5, 2.0, 3.5, 7.0, 12.5}) {
        const double want = oracle::RenyiByQuadrature(sigma, q, a);
        EXPECT_NEAR(RdpAtOrder(sigma, q, a), want, 1e-7 + 1e-6 * want) << sigma << " " << q << " " << a;
      }
    }
  }
}

TEST(Account, VanishingNoiseRatio) { EXPECT_LT(Account(100, 1, 1, 1e-5).epsilon, 0.1); }

TEST(Account, ReferenceNoiseMultipliers) {
  const double e8 = Account(kSigma8, kQ, 10, 1e-5).epsilon;
  const double e1 = Account(kSigma1, kQ, 10, 1e-5).epsilon;
  EXPECT_GE(e8, 6.4);
  EXPECT_LE(e8, 11.2);
  EXPECT_GE(e1, 0.8);
  EXPECT_LE(e1, 1.4);
  const auto r = Account(kSigma8, kQ, 10, 1e-5);
  EXPECT_EQ(r.mechanisms, 10);
  ASSERT_EQ(r.composed.losses.size(), DefaultRdpOrders().size());
  EXPECT_DOUBLE_EQ(r.composed.losses[0], 10 * RdpAtOrder(kSigma8, kQ, 1.5));
}

TEST(Account, MonotoneOnGrid) {
  const std::vector<double> sigmas = {0.5, 0.7, 1.0, 1.5, 2.5, 4.0};
  const std::vector<double> qs = {0.01, 0.05, 0.2, 0.5, 1.0};
  const std::vector<int> ts = {1, 3, 10, 30};
  for (double q : qs) {
    for (int t : ts) {
      for (std::size_t i = 1; i < sigmas.size(); ++i) {
        EXPECT_LT(Account(sigmas[i], q, t, 1e-5).epsilon, Account(sigmas[i - 1], q, t, 1e-5).epsilon);
      }
    }
  }
  for (double s : sigmas) {
    for (int t : ts) {
      for (std::size_t i = 1; i < qs.size(); ++i) {
        EXPECT_GE(Account(s, qs[i], t, 1e-5).epsilon, Account(s, qs[i - 1], t, 1e-5).epsilon);
      }
    }
    for (double q : qs) {
      for (std::size_t i = 1; i < ts.size(); ++i) {
        EXPECT_GE(Account(s, q, ts[i], 1e-5).epsilon, Account(s, q, ts[i - 1], 1e-5).epsilon);
      }
    }
  }
}

// The privacy-loss oracle reproduces the exact Gaussian curve; RDP must
// never report less than it.
TEST(Account, UpperBoundsPrivacyLossOracle) {
  for (double sigma : {kSigma8, kSigma1}) {
    for (int t : {1, 10}) {
      const double exact = oracle::GaussianEpsilon(sigma, t, 1e-5);
      const double pld = oracle::PldEpsilon(sigma, 1.0, t, 1e-5);
      EXPECT_NEAR(pld / exact, 1.0, 0.01);
      EXPECT_GE(Account(sigma, 1.0, t, 1e-5).epsilon, exact);
      for (double q : {0.1, 0.241}) {
        const double tight = oracle::PldEpsilon(sigma, q, t, 1e-5);
        const double rdp = Account(sigma, q, t, 1e-5).epsilon;
        EXPECT_GE(rdp, tight * 0.999) << sigma << " " << q << " " << t;
        // Known looseness of the RDP conversion stays bounded.
        EXPECT_LE(rdp, tight * 1.35) << sigma << " " << q << " " << t;
      }
    }
  }
}

TEST(Calibrate, OrderingAndReference) {
  const double s1 = CalibrateSigma(1, 1e-5, 0.241, 10);
  const double s4 = CalibrateSigma(4, 1e-5, 0.241, 10);
  const double s8 = CalibrateSigma(8, 1e-5, 0.241, 10);
  EXPECT_GT(s1, s4);
  EXPECT_GT(s4, s8);
  EXPECT_NEAR(s8, kSigma8, 0.25 * kSigma8);
  for (double target : {1.0, 4.0, 8.0}) {
    const double e = Account(CalibrateSigma(target, 1e-5, 0.241, 10), 0.241, 10, 1e-5).epsilon;
    EXPECT_LE(e, target);
    EXPECT_GE(e, 0.95 * target);
  }
  EXPECT_THROW(CalibrateSigma(0, 1e-5, 0.2, 10), Error);
  EXPECT_THROW(CalibrateSigma(1e-9, 1e-5, 1.0, 1000), Error);
}

TEST(Calibrate, RoundTripOnRandomTuples) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> eps(0.5, 10), lq(std::log(0.01), 0.0);
  std::uniform_int_distribution<int> t(1, 100);
  for (int i = 0; i < 20; ++i) {
    const double target = eps(rng), q = std::exp(lq(rng));
    const int steps = t(rng);
    const double sigma = CalibrateSigma(target, 1e-5, q, steps);
    const double e = Account(sigma, q, steps, 1e-5).epsilon;
    EXPECT_LE(e, target);
    EXPECT_GE(e, 0.95 * target) << target << " " << q << " " << steps;
    EXPECT_GT(Account(sigma - 1e-4, q, steps, 1e-5).epsilon, target);
  }
}

TEST(Config, ValidationAndResolution) {
  DpConfig c;
  c.q_client = 0.2;
  c.q_provider = 0.5;
  EXPECT_DOUBLE_EQ(EffectiveSamplingRate(c), 0.1);
  c.noise_multiplier = 1.25;
  EXPECT_DOUBLE_EQ(ResolveNoiseMultiplier(c), 1.25);
  c.noise_multiplier = -1;
  EXPECT_DOUBLE_EQ(ResolveNoiseMultiplier(c), CalibrateSigma(8, 1e-5, 0.1, 10));
  for (auto bad : {+[](DpConfig& d) { d.delta = 1; }, +[](DpConfig& d) { d.clip_norm = 0; },
                   +[](DpConfig& d) { d.q_client = 0; }, +[](DpConfig& d) { d.q_provider = 1.5; },
                   +[](DpConfig& d) { d.rounds = 0; }}) {
    DpConfig d;
    bad(d);
    EXPECT_THROW(ValidateDpConfig(d), Error);
  }
}

}  // namespace
}  // namespace provdp
