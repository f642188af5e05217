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

#ifndef PPML_AUDIT_DP_TRAIN_HPP_
#define PPML_AUDIT_DP_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppml_audit/accountant.hpp"
#include "ppml_audit/error.hpp"
#include "ppml_audit/nn.hpp"
#include "ppml_audit/random.hpp"

namespace ppml_audit::dp {

inline constexpr double kDefaultDelta = 1e-5;

struct PrivacyBudget {
  double epsilon = kInfinity;  // infinity means non-private training
  double delta = kDefaultDelta;

  static PrivacyBudget NonPrivate() { return {}; }
  static PrivacyBudget Private(double epsilon, double delta = kDefaultDelta) {
    return {epsilon, delta};
  }

  bool is_private() const { return std::isfinite(epsilon); }

  void Validate() const {
    Require(epsilon > 0.0, ErrorCode::kConfig, "epsilon must be > 0 or infinity");
    Require(delta > 0.0 && delta < 1.0, ErrorCode::kConfig, "delta must be in (0, 1)");
  }
};

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 30;
  double learning_rate = 0.005;
  double clip_norm = 1.0;
  // Calibrated from the budget when unset.
  std::optional<double> noise_multiplier;
  bool random_flip = true;
};

inline double GlobalNorm(std::span<const double> g) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  return std::sqrt(sq);
}

// Rescales g in place so that its L2 norm is at most clip_norm. Returns the
// norm before clipping.
inline double ClipInPlace(std::span<double> g, double clip_norm) {
  Require(clip_norm > 0.0, ErrorCode::kInput, "clip norm must be > 0");
  const double norm = GlobalNorm(g);
  Require(std::isfinite(norm), ErrorCode::kNumeric, "non-finite gradient");
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (double& v : g) v *= scale;
  }
  return norm;
}

inline nn::Gradient ClipGradient(const nn::Gradient& grad, double clip_norm) {
  nn::Gradient out = grad;
  ClipInPlace(out, clip_norm);
  return out;
}

// Adds N(0, (sigma C)^2) to every coordinate of sum. No-op for sigma = 0.
inline void AddGaussianNoise(std::span<double> sum, double clip_norm,
                             double noise_multiplier, Rng& rng) {
  if (noise_multiplier == 0.0) return;
  const double stddev = noise_multiplier * clip_norm;
  for (double& v : sum) v += stddev * rng.Normal();
}

// (sum_i clip(g_i, C) + N(0, sigma^2 C^2 I)) / B.
inline nn::Gradient NoisyAggregate(std::span<const nn::Gradient> per_example,
                                   double clip_norm, double noise_multiplier,
                                   Rng& rng) {
  Require(!per_example.empty(), ErrorCode::kInput, "empty batch");
  Require(noise_multiplier >= 0.0, ErrorCode::kInput, "sigma must be >= 0");
  const std::size_t dim = per_example.front().size();
  nn::Gradient sum(dim, 0.0), scratch;
  for (const nn::Gradient& g : per_example) {
    Require(g.size() == dim, ErrorCode::kShape, "gradient sizes differ");
    scratch = g;
    ClipInPlace(scratch, clip_norm);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += scratch[i];
  }
  AddGaussianNoise(sum, clip_norm, noise_multiplier, rng);
  const double b = static_cast<double>(per_example.size());
  for (double& v : sum) v /= b;
  return sum;
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update. The DP variant differs only in the
// gradient it is fed.
inline void AdamStep(AdamState& state, std::span<double> params,
                     std::span<const double> grad, double learning_rate,
                     const AdamOptions& opt = {}) {
  Require(state.m.size() == params.size() && state.v.size() == params.size() &&
              grad.size() == params.size(),
          ErrorCode::kShape, "optimizer state, params and gradient sizes differ");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * grad[i];
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
  }
}

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;  // running accuracy over the epoch
  std::vector<std::optional<double>> test_accuracy;
  // Largest per-example gradient norm after clipping (private runs only).
  std::vector<double> max_clipped_norm;
};

struct TrainResult {
  nn::ModelParams params;
  TrainHistory history;
  double noise_multiplier = 0.0;
  double epsilon_spent = kInfinity;
  std::size_t effective_batch_size = 0;
};

inline std::vector<std::size_t> PredictLabels(const nn::ModelParams& params,
                                              const Tensor& images) {
  const Tensor probs = nn::Predict(params, images);
  std::vector<std::size_t> out(images.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = probs.Row(i);
    out[i] = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

inline double Accuracy(std::span<const std::size_t> predicted,
                       std::span<const std::size_t> truth) {
  Require(!truth.empty() && predicted.size() == truth.size(), ErrorCode::kInput,
          "accuracy needs equally sized, non-empty label lists");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// Noise multiplier implied by the budget for this data size and schedule.
inline double NoiseMultiplierFor(const PrivacyBudget& budget, std::size_t dataset_size,
                                 std::size_t batch_size, std::size_t epochs) {
  if (!budget.is_private()) return 0.0;
  const AccountingInputs in = MakeAccountingInputs(
      static_cast<std::int64_t>(dataset_size), static_cast<std::int64_t>(batch_size),
      static_cast<std::int64_t>(epochs), budget.delta);
  return CalibrateSigma(budget.epsilon, in);
}

// Trains a fresh model on data[subset]. Private budgets clip every
// per-example gradient and add Gaussian noise before the Adam update; the
// non-private path feeds the plain batch mean. The batch size is capped at
// the subset size.
inline TrainResult Train(const nn::LabeledImages& data,
                         std::span<const std::size_t> subset,
                         const nn::LabeledImages* test,
                         const nn::ModelConfig& model_config,
                         const TrainConfig& config, const PrivacyBudget& budget,
                         std::uint64_t seed) {
  budget.Validate();
  model_config.Validate();
  Require(!subset.empty(), ErrorCode::kInput, "empty training set");
  Require(config.epochs >= 1, ErrorCode::kInput, "epochs must be >= 1");
  Require(config.batch_size >= 1, ErrorCode::kInput, "batch size must be >= 1");
  Require(config.learning_rate >= 0.0, ErrorCode::kInput, "learning rate must be >= 0");
  nn::detail::CheckBatch(model_config, data.images);
  for (std::size_t idx : subset)
    Require(idx < data.size(), ErrorCode::kInput, "subset index out of range");
  nn::detail::CheckLabels(model_config, data.labels, data.size());

  const std::size_t n = subset.size();
  const std::size_t batch = std::min(config.batch_size, n);
  const bool is_private = budget.is_private();

  TrainResult result;
  result.effective_batch_size = batch;
  if (is_private) {
    Require(config.clip_norm > 0.0, ErrorCode::kConfig, "clip norm must be > 0");
    result.noise_multiplier = config.noise_multiplier.has_value()
                                  ? *config.noise_multiplier
                                  : NoiseMultiplierFor(budget, n, batch, config.epochs);
    Require(result.noise_multiplier >= 0.0, ErrorCode::kConfig,
            "noise multiplier must be >= 0");
    const AccountingInputs in = MakeAccountingInputs(
        static_cast<std::int64_t>(n), static_cast<std::int64_t>(batch),
        static_cast<std::int64_t>(config.epochs), budget.delta);
    result.epsilon_spent =
        result.noise_multiplier > 0.0
            ? EpsilonFor(result.noise_multiplier, in, DefaultRdpOrders())
            : kInfinity;
  }

  result.params = nn::InitParams(model_config, seed);
  nn::ModelParams& params = result.params;
  const nn::ParamLayout layout = params.layout();
  const std::size_t dim = layout.total_size();
  AdamState adam(dim);
  Rng rng = Rng::Derive(seed, "train/order_and_flip");
  Rng noise_rng = Rng::Derive(seed, "train/dp_noise");

  std::vector<std::size_t> order(subset.begin(), subset.end());
  nn::Gradient grad(dim), sum(dim);
  nn::ExampleCache cache;
  nn::BackwardScratch scratch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t hits = 0;
    double max_norm = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(start + batch, n);
      std::fill(sum.begin(), sum.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        const std::size_t label = data.labels[idx];
        const bool flip = config.random_flip && rng.Bernoulli(0.5);
        nn::ForwardExample(params, layout, data.images.Row(idx), flip, cache);
        const double loss = nn::CrossEntropy(cache, label);
        Require(std::isfinite(loss), ErrorCode::kNumeric,
                "non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += loss;
        const auto predicted = static_cast<std::size_t>(
            std::max_element(cache.probs.begin(), cache.probs.end()) -
            cache.probs.begin());
        hits += predicted == label;
        nn::BackwardExample(params, layout, cache, label, grad, scratch);
        if (is_private) {
          ClipInPlace(grad, config.clip_norm);
          max_norm = std::max(max_norm, GlobalNorm(grad));
        }
        for (std::size_t i = 0; i < dim; ++i) sum[i] += grad[i];
      }
      if (is_private)
        AddGaussianNoise(sum, config.clip_norm, result.noise_multiplier, noise_rng);
      const double count = static_cast<double>(stop - start);
      for (double& v : sum) v /= count;
      AdamStep(adam, params.values, sum, config.learning_rate);
    }
    result.history.train_loss.push_back(loss_sum / static_cast<double>(n));
    result.history.train_accuracy.push_back(static_cast<double>(hits) /
                                            static_cast<double>(n));
    result.history.max_clipped_norm.push_back(max_norm);
    if (test != nullptr && !test->empty()) {
      result.history.test_accuracy.push_back(
          Accuracy(PredictLabels(params, test->images), test->labels));
    } else {
      result.history.test_accuracy.push_back(std::nullopt);
    }
  }
  return result;
}

inline TrainResult Train(const nn::LabeledImages& data, const nn::LabeledImages* test,
                         const nn::ModelConfig& model_config,
                         const TrainConfig& config, const PrivacyBudget& budget,
                         std::uint64_t seed) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return Train(data, all, test, model_config, config, budget, seed);
}

}  // namespace ppml_audit::dp

#endif  // PPML_AUDIT_DP_TRAIN_HPP_
