// Copyright 2026 The ppml-audit Authors
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

#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "oracles.hpp"

namespace ppml_audit {
namespace {

using dp::kInfinity;
using testing::ThrowsCode;

TEST(Accountant, FullBatchClosedForm) {
  const std::vector<double> o2{2.0}, o4{4.0};
  EXPECT_NEAR(dp::ComputeRdp(1.0, 1.0, 1, o2)[0], 1.0, 1e-12);
  EXPECT_NEAR(dp::ComputeRdp(1.0, 2.0, 10, o4)[0], 5.0, 1e-12);
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const double sigma = 0.2 + 5.0 * rng.Uniform();
    const double order = 1.25 + 100.0 * rng.Uniform();
    const std::int64_t steps = 1 + static_cast<std::int64_t>(rng.UniformInt(1000));
    const std::vector<double> o{order};
    const double expected = static_cast<double>(steps) * order / (2.0 * sigma * sigma);
    EXPECT_NEAR(dp::ComputeRdp(1.0, sigma, steps, o)[0], expected, 1e-12 * expected);
  }
}

TEST(Accountant, MatchesQuadratureOracle) {
  const std::vector<double> orders{16.0};
  EXPECT_NEAR(dp::ComputeRdp(0.01, 1.5, 100, orders)[0],
              oracle::QuadratureRdp(0.01, 1.5, 16.0, 100), 1e-6);
  // Fractional orders take the series path.
  for (double order : {1.5, 2.75, 16.5, 40.25}) {
    const std::vector<double> o{order};
    EXPECT_NEAR(dp::ComputeRdp(0.01, 1.5, 100, o)[0],
                oracle::QuadratureRdp(0.01, 1.5, order, 100), 1e-6)
        << order;
  }
  for (double q : {0.001, 0.05, 0.3}) {
    for (double sigma : {0.8, 1.1, 4.0}) {
      for (double order : {2.0, 3.0, 8.0, 7.5}) {
        const std::vector<double> o{order};
        const double lib = dp::ComputeRdp(q, sigma, 1, o)[0];
        const double ref = oracle::QuadratureRdp(q, sigma, order, 1);
        EXPECT_NEAR(lib, ref, 1e-9 + 1e-7 * ref) << q << " " << sigma << " " << order;
      }
    }
  }
}

TEST(Accountant, NoNoiseIsInfinite) {
  const auto orders = dp::DefaultRdpOrders();
  const auto rdp = dp::ComputeRdp(0.1, 0.0, 10, orders);
  for (double r : rdp) EXPECT_TRUE(std::isinf(r));
  EXPECT_TRUE(std::isinf(dp::RdpToEpsilon(rdp, orders, 1e-5).epsilon));
}

TEST(Accountant, DefaultOrderGrid) {
  const auto orders = dp::DefaultRdpOrders();
  EXPECT_DOUBLE_EQ(orders.front(), 1.25);
  EXPECT_TRUE(std::is_sorted(orders.begin(), orders.end()));
  EXPECT_NE(std::find(orders.begin(), orders.end(), 63.0), orders.end());
  EXPECT_DOUBLE_EQ(orders.back(), 256.0);
}

TEST(Accountant, ClassicConversionPlugIn) {
  const std::vector<double> orders{2.0}, rdp{1.0};
  const auto r = dp::RdpToEpsilon(rdp, orders, std::exp(-1.0), dp::EpsilonConversion::kClassic);
  EXPECT_NEAR(r.epsilon, 2.0, 1e-12);
  EXPECT_EQ(r.order, 2.0);
}

TEST(Accountant, ImprovedConversionFormula) {
  const std::vector<double> orders{2.0, 10.0}, rdp{1.0, 3.0};
  const double delta = 1e-5;
  const double e2 = 1.0 + std::log1p(-0.5) - std::log(delta * 2.0);
  const double e10 = 3.0 + std::log1p(-0.1) - std::log(delta * 10.0) / 9.0;
  const auto r = dp::RdpToEpsilon(rdp, orders, delta);
  EXPECT_NEAR(r.epsilon, std::min(e2, e10), 1e-12);
  EXPECT_EQ(r.order, e10 < e2 ? 10.0 : 2.0);
  // Never looser than the classic bound.
  const auto classic = dp::RdpToEpsilon(rdp, orders, delta, dp::EpsilonConversion::kClassic);
  EXPECT_LE(r.epsilon, classic.epsilon);
}

TEST(Accountant, LargerDeltaNeverIncreasesEpsilon) {
  const auto orders = dp::DefaultRdpOrders();
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto rdp = dp::ComputeRdp(0.01 + 0.2 * rng.Uniform(), 0.5 + 2.0 * rng.Uniform(),
                                    1 + static_cast<std::int64_t>(rng.UniformInt(500)), orders);
    double previous = kInfinity;
    for (double delta : {1e-9, 1e-7, 1e-5, 1e-3, 0.1}) {
      const double eps = dp::RdpToEpsilon(rdp, orders, delta).epsilon;
      EXPECT_LE(eps, previous + 1e-12);
      previous = eps;
    }
  }
}

TEST(Accountant, InvalidInputs) {
  const std::vector<double> empty;
  EXPECT_TRUE(ThrowsCode([&] { dp::RdpToEpsilon(empty, empty, 1e-5); }, ErrorCode::kInput));
  const std::vector<double> o{2.0}, r{1.0};
  EXPECT_TRUE(ThrowsCode([&] { dp::RdpToEpsilon(r, o, 0.0); }, ErrorCode::kInput));
  EXPECT_TRUE(ThrowsCode([&] { dp::RdpToEpsilon(r, o, 1.0); }, ErrorCode::kInput));
  EXPECT_TRUE(ThrowsCode([&] { dp::ComputeRdp(1.5, 1.0, 1, o); }, ErrorCode::kInput));
  EXPECT_TRUE(ThrowsCode([&] { dp::ComputeRdp(0.5, 1.0, 0, o); }, ErrorCode::kInput));
  EXPECT_TRUE(ThrowsCode([&] { dp::MakeAccountingInputs(10, 20, 1, 1e-5); }, ErrorCode::kInput));
}

TEST(Accountant, MonotoneInStepsSamplingRateAndSigma) {
  const auto orders = dp::DefaultRdpOrders();
  const std::vector<std::int64_t> steps{1, 10, 100, 1000, 10000};
  const std::vector<double> sigmas{0.5, 0.8, 1.2, 2.0, 4.0};
  const std::vector<double> rates{0.001, 0.01, 0.05, 0.2, 1.0};
  for (double q : {0.004, 0.1}) {
    for (double sigma : sigmas) {
      double prev = 0.0;
      for (std::int64_t s : steps) {
        const double eps = dp::EpsilonFor(sigma, {q, s, 1e-5}, orders);
        EXPECT_GE(eps, prev - 1e-12);
        prev = eps;
      }
    }
    for (std::int64_t s : steps) {
      double prev = kInfinity;
      for (double sigma : sigmas) {
        const double eps = dp::EpsilonFor(sigma, {q, s, 1e-5}, orders);
        EXPECT_LE(eps, prev + 1e-12);
        prev = eps;
      }
    }
  }
  for (double sigma : sigmas) {
    double prev = 0.0;
    for (double q : rates) {
      const double eps = dp::EpsilonFor(sigma, {q, 100, 1e-5}, orders);
      EXPECT_GE(eps, prev - 1e-12);
      prev = eps;
    }
  }
}

TEST(Accountant, RdpNonDecreasingAsStepsAccumulate) {
  const auto orders = dp::DefaultRdpOrders();
  const auto one = dp::ComputeRdp(0.02, 1.1, 1, orders);
  const auto many = dp::ComputeRdp(0.02, 1.1, 50, orders);
  for (std::size_t i = 0; i < orders.size(); ++i) {
    EXPECT_GE(one[i], 0.0);
    EXPECT_GE(many[i], one[i]);
    EXPECT_NEAR(many[i], 50.0 * one[i], 1e-9 * many[i]);
  }
}

TEST(Calibration, ReferenceNoiseMultipliers) {
  const auto in = dp::MakeAccountingInputs(60000, 256, 30, 1e-5);
  EXPECT_EQ(in.steps, 235 * 30);
  const double s30 = dp::CalibrateSigma(30.0, in);
  const double s1 = dp::CalibrateSigma(1.0, in);
  EXPECT_NEAR(s30, 0.431, 0.0431);
  EXPECT_NEAR(s1, 1.626, 0.1626);
  EXPECT_LT(s30, s1);
}

TEST(Calibration, RoundTripWithinSlack) {
  const auto orders = dp::DefaultRdpOrders();
  for (double target : {0.5, 1.0, 3.0, 8.0, 30.0}) {
    const auto in = dp::MakeAccountingInputs(1000, 50, 10, 1e-5);
    const double sigma = dp::CalibrateSigma(target, in);
    const double eps = dp::EpsilonFor(sigma, in, orders);
    EXPECT_LE(eps, target);
    EXPECT_GE(eps, target * (1.0 - 1e-3));
  }
}

TEST(Calibration, LargerTargetNeedsLessNoise) {
  const auto in = dp::MakeAccountingInputs(5000, 100, 5, 1e-5);
  double prev = kInfinity;
  for (double target : {0.2, 0.5, 1.0, 2.0, 10.0, 50.0}) {
    const double s = dp::CalibrateSigma(target, in);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Calibration, UnattainableTargetIsCalibrationError) {
  const auto in = dp::MakeAccountingInputs(100, 100, 1000000, 1e-5);
  EXPECT_TRUE(ThrowsCode([&] { dp::CalibrateSigma(1e-6, in); }, ErrorCode::kCalibration));
  EXPECT_TRUE(ThrowsCode([&] { dp::CalibrateSigma(0.0, in); }, ErrorCode::kInput));
}

}  // namespace
}  // namespace ppml_audit
