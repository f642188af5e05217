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

// Renyi differential privacy accounting for the Poisson-subsampled Gaussian
// mechanism, conversion to (epsilon, delta), and noise calibration.

#ifndef PPML_AUDIT_ACCOUNTANT_HPP_
#define PPML_AUDIT_ACCOUNTANT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ppml_audit/error.hpp"

namespace ppml_audit::dp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// 1.25, 1.5, ..., 63 followed by the integers 64..256.
inline std::vector<double> DefaultRdpOrders() {
  std::vector<double> orders;
  for (int i = 5; i <= 252; ++i) orders.push_back(i * 0.25);
  for (int a = 64; a <= 256; ++a) orders.push_back(a);
  return orders;
}

namespace internal {

inline double LogAdd(double a, double b) {
  if (a == -kInfinity) return b;
  if (b == -kInfinity) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// log(exp(a) - exp(b)) for a >= b.
inline double LogSub(double a, double b) {
  if (b == -kInfinity) return a;
  if (a <= b) return -kInfinity;
  const double d = a - b;
  if (d > 700.0) return a;
  return std::log(std::expm1(d)) + b;
}

inline double LogErfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  // Asymptotic expansion; erfc underflows past x ~ 26.
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(std::numbers::pi) +
         std::log1p(-1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) -
                    15.0 / (8.0 * x2 * x2 * x2));
}

inline double LogBinomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log A_alpha for integer alpha via the binomial expansion.
inline double LogAInteger(double q, double sigma, int alpha) {
  double log_a = -kInfinity;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  for (int i = 0; i <= alpha; ++i) {
    const double term = LogBinomial(alpha, i) + i * log_q + (alpha - i) * log_1mq +
                        (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma);
    log_a = LogAdd(log_a, term);
  }
  return log_a;
}

// log A_alpha for fractional alpha via the two-sided series split at z0.
inline double LogAFractional(double q, double sigma, double alpha) {
  double log_a0 = -kInfinity;
  double log_a1 = -kInfinity;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double log_coef = 0.0;  // log |binom(alpha, i)|
  double sign = 1.0;
  for (int i = 0; i < 100000; ++i) {
    if (i > 0) {
      const double factor = (alpha - (i - 1)) / i;
      if (factor == 0.0) break;
      if (factor < 0.0) sign = -sign;
      log_coef += std::log(std::abs(factor));
    }
    const double j = alpha - i;
    const double log_t0 = log_coef + i * log_q + j * log_1mq;
    const double log_t1 = log_coef + j * log_q + i * log_1mq;
    const double log_e0 =
        std::log(0.5) + LogErfc((i - z0) / (std::numbers::sqrt2 * sigma));
    const double log_e1 =
        std::log(0.5) + LogErfc((z0 - j) / (std::numbers::sqrt2 * sigma));
    const double log_s0 = log_t0 + (static_cast<double>(i) * i - i) /
                                       (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (sign > 0.0) {
      log_a0 = LogAdd(log_a0, log_s0);
      log_a1 = LogAdd(log_a1, log_s1);
    } else {
      log_a0 = LogSub(log_a0, log_s0);
      log_a1 = LogSub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0) break;
  }
  return LogAdd(log_a0, log_a1);
}

}  // namespace internal

// RDP of a single step of the sampled Gaussian mechanism at one order.
inline double SampledGaussianRdp(double q, double sigma, double order) {
  Require(order > 1.0, ErrorCode::kInput, "RDP orders must exceed 1");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return kInfinity;
  if (q == 1.0) return order / (2.0 * sigma * sigma);
  if (std::isinf(order)) return kInfinity;
  const double log_a = order == std::floor(order) && order < 1e6
                           ? internal::LogAInteger(q, sigma, static_cast<int>(order))
                           : internal::LogAFractional(q, sigma, order);
  // A >= 1 analytically; clamp roundoff for very large sigma.
  return std::max(0.0, log_a / (order - 1.0));
}

// steps x per-step RDP at every order. Returns +inf entries when sigma = 0
// and q > 0 (no finite privacy guarantee).
inline std::vector<double> ComputeRdp(double q, double sigma, std::int64_t steps,
                                      std::span<const double> orders) {
  Require(q >= 0.0 && q <= 1.0, ErrorCode::kInput, "sampling rate must be in [0, 1]");
  Require(sigma >= 0.0, ErrorCode::kInput, "noise multiplier must be >= 0");
  Require(steps >= 1, ErrorCode::kInput, "steps must be >= 1");
  std::vector<double> rdp(orders.size());
  for (std::size_t i = 0; i < orders.size(); ++i)
    rdp[i] = static_cast<double>(steps) * SampledGaussianRdp(q, sigma, orders[i]);
  return rdp;
}

enum class EpsilonConversion {
  // eps = rdp + log(1/delta) / (order - 1).
  kClassic,
  // eps = rdp + log1p(-1/order) - log(delta * order) / (order - 1), with the
  // KL shortcut when delta^2 + expm1(-rdp) >= 0.
  kImproved,
};

struct EpsilonResult {
  double epsilon = kInfinity;
  double order = 0.0;
};

inline EpsilonResult RdpToEpsilon(std::span<const double> rdp,
                                  std::span<const double> orders, double delta,
                                  EpsilonConversion conversion =
                                      EpsilonConversion::kImproved) {
  Require(!orders.empty(), ErrorCode::kInput, "no RDP orders given");
  Require(rdp.size() == orders.size(), ErrorCode::kInput,
          "rdp and orders lengths differ");
  Require(delta > 0.0 && delta < 1.0, ErrorCode::kInput, "delta must be in (0, 1)");
  EpsilonResult best;
  best.order = orders[0];
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const double a = orders[i];
    const double r = rdp[i];
    Require(a > 1.0, ErrorCode::kInput, "RDP orders must exceed 1");
    Require(r >= 0.0, ErrorCode::kInput, "RDP values must be non-negative");
    double eps = kInfinity;
    if (std::isinf(r)) {
      eps = kInfinity;
    } else if (conversion == EpsilonConversion::kClassic) {
      eps = r + std::log(1.0 / delta) / (a - 1.0);
    } else if (delta * delta + std::expm1(-r) >= 0.0) {
      eps = 0.0;
    } else if (a > 1.01) {
      eps = r + std::log1p(-1.0 / a) - std::log(delta * a) / (a - 1.0);
    }
    eps = std::max(eps, 0.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.order = a;
    }
  }
  return best;
}

struct AccountingInputs {
  double sampling_rate = 0.0;  // q = batch_size / dataset_size
  std::int64_t steps = 0;
  double delta = 1e-5;
};

inline AccountingInputs MakeAccountingInputs(std::int64_t dataset_size,
                                             std::int64_t batch_size,
                                             std::int64_t epochs, double delta) {
  Require(dataset_size > 0 && batch_size > 0 && epochs > 0, ErrorCode::kInput,
          "dataset size, batch size and epochs must be positive");
  Require(batch_size <= dataset_size, ErrorCode::kInput,
          "batch size exceeds dataset size (q > 1)");
  const std::int64_t steps_per_epoch = (dataset_size + batch_size - 1) / batch_size;
  return {static_cast<double>(batch_size) / static_cast<double>(dataset_size),
          steps_per_epoch * epochs, delta};
}

inline double EpsilonFor(double sigma, const AccountingInputs& in,
                         std::span<const double> orders,
                         EpsilonConversion conversion = EpsilonConversion::kImproved) {
  const std::vector<double> rdp = ComputeRdp(in.sampling_rate, sigma, in.steps, orders);
  return RdpToEpsilon(rdp, orders, in.delta, conversion).epsilon;
}

struct CalibrationOptions {
  double sigma_min = 1e-3;
  double sigma_max = 1e3;
  double relative_tolerance = 1e-4;
  // The returned sigma achieves epsilon in [target (1 - slack), target].
  double epsilon_slack = 1e-3;
  EpsilonConversion conversion = EpsilonConversion::kImproved;
};

// Smallest noise multiplier (to within the tolerances) whose accumulated
// privacy loss does not exceed target_epsilon.
inline double CalibrateSigma(double target_epsilon, const AccountingInputs& in,
                             const CalibrationOptions& options = {}) {
  Require(target_epsilon > 0.0, ErrorCode::kInput, "target epsilon must be > 0");
  const std::vector<double> orders = DefaultRdpOrders();
  auto eps_at = [&](double sigma) {
    return EpsilonFor(sigma, in, orders, options.conversion);
  };
  double hi = options.sigma_max;
  if (eps_at(hi) > target_epsilon)
    throw Error(ErrorCode::kCalibration,
                "target epsilon " + std::to_string(target_epsilon) +
                    " unattainable with sigma <= " + std::to_string(hi));
  double lo = options.sigma_min;
  if (eps_at(lo) <= target_epsilon) return lo;
  double eps_hi = eps_at(hi);
  // Invariant: eps(lo) > target >= eps(hi).
  for (int iter = 0; iter < 200; ++iter) {
    const bool narrow = hi / lo - 1.0 < options.relative_tolerance;
    const bool tight = eps_hi >= target_epsilon * (1.0 - options.epsilon_slack);
    if (narrow && tight) break;
    const double mid = std::sqrt(lo * hi);
    const double eps_mid = eps_at(mid);
    if (eps_mid > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
      eps_hi = eps_mid;
    }
  }
  return hi;
}

}  // namespace ppml_audit::dp

#endif  // PPML_AUDIT_ACCOUNTANT_HPP_
