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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace ppml_audit {
namespace {

using testing::ThrowsCode;
using testing::TinyModel;

nn::LabeledImages SynthTensors(std::size_t classes, std::size_t per_class, double noise,
                               std::uint64_t seed, bool test_split = false,
                               double label_noise = 0.0) {
  data::SynthSpec spec;
  spec.label_noise = label_noise;
  spec.num_classes = classes;
  spec.train_per_class = per_class;
  spec.test_per_class = per_class;
  spec.noise_stddev = noise;
  const data::ImageDataset ds = data::SynthGenerate(spec, seed);
  const auto t = data::Preprocess(ds);
  return test_split ? t.test : t.train;
}

dp::TrainConfig FastConfig(std::size_t epochs) {
  dp::TrainConfig c;
  c.batch_size = 16;
  c.epochs = epochs;
  c.learning_rate = 0.01;
  return c;
}

TEST(Clip, ScalesDownToTheBound) {
  const nn::Gradient clipped = dp::ClipGradient({3.0, 4.0}, 1.0);
  EXPECT_NEAR(clipped[0], 0.6, 1e-15);
  EXPECT_NEAR(clipped[1], 0.8, 1e-15);
  EXPECT_EQ(dp::ClipGradient({0.3, 0.4}, 1.0), (nn::Gradient{0.3, 0.4}));
  EXPECT_EQ(dp::ClipGradient({0.0, 0.0, 0.0}, 1.0), (nn::Gradient{0.0, 0.0, 0.0}));
}

TEST(Clip, NonFiniteIsNumericError) {
  EXPECT_TRUE(ThrowsCode([] { dp::ClipGradient({1.0, std::nan("")}, 1.0); },
                         ErrorCode::kNumeric));
  EXPECT_TRUE(ThrowsCode([] { dp::ClipGradient({dp::kInfinity}, 1.0); }, ErrorCode::kNumeric));
}

TEST(Clip, PropertyNormIsMinAndDirectionKept) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.UniformInt(50);
    const double scale = std::pow(10.0, -3.0 + 6.0 * rng.Uniform());
    const double c = std::pow(10.0, -2.0 + 4.0 * rng.Uniform());
    nn::Gradient g(n);
    for (double& v : g) v = scale * rng.Normal();
    const nn::Gradient out = dp::ClipGradient(g, c);
    const double before = dp::GlobalNorm(g), after = dp::GlobalNorm(out);
    EXPECT_LE(after, c + 1e-9);
    EXPECT_NEAR(after, std::min(before, c), 1e-12 * std::max(1.0, before));
    if (before <= c) {
      EXPECT_EQ(out, g);
    } else {
      const double ratio = before / after;
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(g[i], out[i] * ratio, 1e-9 * before);
    }
  }
}

TEST(NoisyAggregate, NoNoiseAveragesClippedGradients) {
  Rng rng(2);
  const std::vector<nn::Gradient> grads{{3.0, 4.0}, {3.0, 4.0}};
  EXPECT_EQ(dp::NoisyAggregate(grads, 1.0, 0.0, rng), dp::ClipGradient(grads[0], 1.0));
  const std::vector<nn::Gradient> mixed{{0.1, 0.0}, {0.0, 10.0}};
  const nn::Gradient m = dp::NoisyAggregate(mixed, 1.0, 0.0, rng);
  EXPECT_DOUBLE_EQ(m[0], 0.05);
  EXPECT_DOUBLE_EQ(m[1], 0.5);
}

TEST(NoisyAggregate, EmptyBatchIsInputError) {
  Rng rng(3);
  const std::vector<nn::Gradient> none;
  EXPECT_TRUE(ThrowsCode([&] { dp::NoisyAggregate(none, 1.0, 1.0, rng); }, ErrorCode::kInput));
}

TEST(NoisyAggregate, MonteCarloNoiseStandardDeviation) {
  Rng rng(4);
  const std::vector<nn::Gradient> grads(256, nn::Gradient{0.0});
  const int draws = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = dp::NoisyAggregate(grads, 1.0, 10.0, rng)[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / draws;
  const double sd = std::sqrt(sq / draws - mean * mean);
  EXPECT_NEAR(sd, 10.0 / 256.0, 0.05 * 10.0 / 256.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  dp::AdamState state(1);
  std::vector<double> p{1.0};
  const std::vector<double> g{1.0};
  dp::AdamStep(state, p, g, 0.005);
  // m_hat = 1, v_hat = 1 after bias correction.
  EXPECT_NEAR(p[0], 1.0 - 0.005 / (1.0 + 1e-7), 1e-15);
}

TEST(Adam, HandComputedSecondStep) {
  dp::AdamState state(1);
  std::vector<double> p{0.0};
  dp::AdamStep(state, p, std::vector<double>{2.0}, 0.1);
  dp::AdamStep(state, p, std::vector<double>{-1.0}, 0.1);
  const double m1 = 0.1 * 2.0, v1 = 0.001 * 4.0;
  const double m2 = 0.9 * m1 + 0.1 * -1.0, v2 = 0.999 * v1 + 0.001 * 1.0;
  const double step1 = 0.1 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-7);
  const double step2 = 0.1 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-7);
  EXPECT_NEAR(p[0], -step1 - step2, 1e-14);
}

TEST(Adam, NoMovementCases) {
  dp::AdamState state(2);
  std::vector<double> p{1.0, -2.0};
  dp::AdamStep(state, p, std::vector<double>{0.0, 0.0}, 0.005);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
  dp::AdamStep(state, p, std::vector<double>{5.0, -3.0}, 0.0);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
  EXPECT_TRUE(ThrowsCode([&] { dp::AdamStep(state, p, std::vector<double>{1.0}, 0.1); },
                         ErrorCode::kShape));
}

TEST(Budget, Validation) {
  EXPECT_FALSE(dp::PrivacyBudget::NonPrivate().is_private());
  EXPECT_TRUE(dp::PrivacyBudget::Private(1.0).is_private());
  EXPECT_TRUE(ThrowsCode([] { dp::PrivacyBudget::Private(0.0).Validate(); }, ErrorCode::kConfig));
  EXPECT_TRUE(
      ThrowsCode([] { dp::PrivacyBudget::Private(1.0, 1.0).Validate(); }, ErrorCode::kConfig));
}

TEST(Train, SeparableDataReachesHighTrainAccuracy) {
  const nn::LabeledImages data = SynthTensors(2, 20, 5.0, 1);
  const dp::TrainResult r = dp::Train(data, nullptr, TinyModel(2), FastConfig(30),
                                      dp::PrivacyBudget::NonPrivate(), 42);
  EXPECT_GE(dp::Accuracy(dp::PredictLabels(r.params, data.images), data.labels), 0.95);
  EXPECT_EQ(r.history.train_loss.size(), 30u);
  EXPECT_EQ(r.history.train_accuracy.size(), 30u);
  EXPECT_EQ(r.history.test_accuracy.size(), 30u);
  EXPECT_LT(r.history.train_loss.back(), r.history.train_loss.front());
}

TEST(Train, DeterministicGivenSeed) {
  const nn::LabeledImages data = SynthTensors(3, 8, 30.0, 2);
  const auto a = dp::Train(data, nullptr, TinyModel(3), FastConfig(2),
                           dp::PrivacyBudget::Private(2.0), 7);
  const auto b = dp::Train(data, nullptr, TinyModel(3), FastConfig(2),
                           dp::PrivacyBudget::Private(2.0), 7);
  const auto c = dp::Train(data, nullptr, TinyModel(3), FastConfig(2),
                           dp::PrivacyBudget::Private(2.0), 8);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params, c.params);
}

TEST(Train, ZeroNoiseInfiniteClipEqualsNonPrivate) {
  const nn::LabeledImages data = SynthTensors(3, 8, 30.0, 3);
  dp::TrainConfig cfg = FastConfig(3);
  const auto plain =
      dp::Train(data, nullptr, TinyModel(3), cfg, dp::PrivacyBudget::NonPrivate(), 5);
  cfg.noise_multiplier = 0.0;
  cfg.clip_norm = dp::kInfinity;
  const auto priv = dp::Train(data, nullptr, TinyModel(3), cfg, dp::PrivacyBudget::Private(1.0), 5);
  EXPECT_EQ(plain.params.values, priv.params.values);
  EXPECT_EQ(plain.history.train_loss, priv.history.train_loss);
}

TEST(Train, ClippedNormsNeverExceedBound) {
  const nn::LabeledImages data = SynthTensors(3, 10, 30.0, 4);
  dp::TrainConfig cfg = FastConfig(3);
  cfg.clip_norm = 0.05;
  const auto r = dp::Train(data, nullptr, TinyModel(3), cfg, dp::PrivacyBudget::Private(5.0), 1);
  ASSERT_EQ(r.history.max_clipped_norm.size(), 3u);
  for (double n : r.history.max_clipped_norm) {
    EXPECT_LE(n, cfg.clip_norm + 1e-9);
    EXPECT_GT(n, 0.0);
  }
  EXPECT_GT(r.noise_multiplier, 0.0);
  EXPECT_LE(r.epsilon_spent, 5.0);
  EXPECT_GE(r.epsilon_spent, 5.0 * (1.0 - 1e-3));
}

TEST(Train, BatchCappedAtSubsetSize) {
  const nn::LabeledImages data = SynthTensors(2, 5, 30.0, 5);
  const std::vector<std::size_t> subset{0, 2, 4, 6};
  dp::TrainConfig cfg = FastConfig(1);
  cfg.batch_size = 256;
  const auto r = dp::Train(data, subset, nullptr, TinyModel(2), cfg,
                           dp::PrivacyBudget::Private(3.0), 1);
  EXPECT_EQ(r.effective_batch_size, 4u);
}

TEST(Train, InvalidInputs) {
  const nn::LabeledImages data = SynthTensors(3, 4, 30.0, 6);
  const std::vector<std::size_t> empty;
  EXPECT_TRUE(ThrowsCode(
      [&] {
        dp::Train(data, empty, nullptr, TinyModel(3), FastConfig(1),
                  dp::PrivacyBudget::NonPrivate(), 1);
      },
      ErrorCode::kInput));
  EXPECT_TRUE(ThrowsCode(
      [&] {
        dp::Train(data, nullptr, TinyModel(3), FastConfig(0), dp::PrivacyBudget::NonPrivate(), 1);
      },
      ErrorCode::kInput));
  EXPECT_TRUE(ThrowsCode(
      [&] {
        dp::Train(data, nullptr, TinyModel(2), FastConfig(1), dp::PrivacyBudget::NonPrivate(), 1);
      },
      ErrorCode::kInput));
}

// Strong privacy should not overfit more than plain training, on average.
TEST(Train, PrivateGapNoLargerThanNonPrivateGap) {
  double gap_plain = 0.0, gap_private = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    // Noisy training labels: memorizing them is what opens the gap.
    const nn::LabeledImages train = SynthTensors(2, 20, 60.0, 100 + seed, false, 0.3);
    const nn::LabeledImages test = SynthTensors(2, 20, 60.0, 100 + seed, true, 0.3);
    for (bool priv : {false, true}) {
      const auto budget = priv ? dp::PrivacyBudget::Private(1.0) : dp::PrivacyBudget::NonPrivate();
      const auto r = dp::Train(train, nullptr, TinyModel(2), FastConfig(30), budget, seed);
      const auto u = metrics::Utility(r.params, train, test);
      (priv ? gap_private : gap_plain) += u.train_test_gap / 5.0;
    }
  }
  EXPECT_GT(gap_plain, 0.0);
  EXPECT_LE(gap_private, gap_plain);
}

}  // namespace
}  // namespace ppml_audit
