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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "oracles.hpp"

namespace ppml_audit {
namespace {

using testing::ThrowsCode;
using testing::WarningCapture;

struct Samples {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  std::size_t classes = 0;

  Tensor AsTensor() const {
    std::vector<double> flat;
    for (const auto& row : x) flat.insert(flat.end(), row.begin(), row.end());
    return Tensor({x.size(), x.front().size()}, flat);
  }
  metrics::ClassMoments Moments() const { return metrics::MomentsOf(AsTensor(), y, classes); }
};

Samples RandomSamples(Rng& rng, std::size_t classes, std::size_t n, std::size_t dim) {
  Samples s;
  s.classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    std::vector<double> row(dim);
    for (std::size_t d = 0; d < dim; ++d) row[d] = 0.3 * k * (d % 2) + rng.Normal() * (1.0 + k);
    s.x.push_back(row);
    s.y.push_back(k);
  }
  return s;
}

TEST(Entropy, Examples) {
  EXPECT_EQ(metrics::ShannonEntropy(std::vector<std::uint8_t>(100, 7), 1), 0.0);
  std::vector<std::uint8_t> all(512);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint8_t>(i % 256);
  EXPECT_DOUBLE_EQ(metrics::ShannonEntropy(all, 1), 1.0);
  std::vector<std::uint8_t> two(64, 0);
  std::fill(two.begin(), two.begin() + 32, 200);
  EXPECT_DOUBLE_EQ(metrics::ShannonEntropy(two, 1), 0.125);
  EXPECT_TRUE(ThrowsCode([] { metrics::ShannonEntropy({}, 1); }, ErrorCode::kInput));
}

TEST(Entropy, AveragesChannels) {
  // Channel 0 constant, channel 1 two-valued, channel 2 uniform over 256.
  std::vector<std::uint8_t> px;
  for (int i = 0; i < 256; ++i) {
    px.push_back(1);
    px.push_back(i % 2 ? 9 : 0);
    px.push_back(static_cast<std::uint8_t>(i));
  }
  EXPECT_DOUBLE_EQ(metrics::ShannonEntropy(px, 3), (0.0 + 0.125 + 1.0) / 3.0);
}

TEST(Entropy, MatchesBruteForceAndStaysInRange) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const std::size_t channels = rng.Bernoulli(0.5) ? 1 : 3;
    const std::size_t levels = 1 + rng.UniformInt(256);
    std::vector<std::uint8_t> px(channels * (1 + rng.UniformInt(300)));
    for (auto& v : px) v = static_cast<std::uint8_t>(rng.UniformInt(levels));
    const double h = metrics::ShannonEntropy(px, channels);
    EXPECT_NEAR(h, oracle::Entropy(px, channels), 1e-12);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 1.0);
    if (levels < 256) EXPECT_LT(h, 1.0);
  }
}

TEST(Entropy, PermutationInvariant) {
  Rng rng(2);
  std::vector<std::uint8_t> px(32 * 32 * 3);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng.UniformInt(40));
  const double h = metrics::ShannonEntropy(px, 3);
  for (int t = 0; t < 10; ++t) {
    // Shuffle whole pixels so channels stay aligned.
    for (std::size_t i = px.size() / 3 - 1; i > 0; --i) {
      const std::size_t j = rng.UniformInt(i + 1);
      for (std::size_t c = 0; c < 3; ++c) std::swap(px[3 * i + c], px[3 * j + c]);
    }
    EXPECT_NEAR(metrics::ShannonEntropy(px, 3), h, 1e-12);
  }
}

TEST(Entropy, DatasetMeanOverTrainSplit) {
  data::ImageDataset ds;
  ds.class_names = {"a", "b"};
  ds.train = {2, 2, 1, {5, 5, 5, 5, 0, 0, 1, 1}, {0, 1}};
  ds.test = {2, 2, 1, {0, 1, 2, 3}, {0}};
  EXPECT_DOUBLE_EQ(metrics::DatasetEntropy(ds), 0.0625);
  ds.train = {2, 2, 1, {}, {}};
  EXPECT_TRUE(ThrowsCode([&] { metrics::DatasetEntropy(ds); }, ErrorCode::kInput));
}

TEST(Compression, ConstantBeatsNoise) {
  Rng rng(4);
  for (std::size_t channels : {1u, 3u}) {
    const std::vector<std::uint8_t> flat(32 * 32 * channels, 90);
    std::vector<std::uint8_t> noise(flat.size());
    for (auto& v : noise) v = static_cast<std::uint8_t>(rng.UniformInt(256));
    for (auto codec : {metrics::Codec::kLossless, metrics::Codec::kLossy}) {
      EXPECT_GT(metrics::CompressionRatio(flat, 32, 32, channels, codec),
                metrics::CompressionRatio(noise, 32, 32, channels, codec));
    }
  }
  const std::vector<std::uint8_t> flat(3072, 90);
  EXPECT_GT(metrics::CompressionRatio(flat, 32, 32, 3, metrics::Codec::kLossless), 5.0);
}

TEST(Compression, NumeratorIsRawSize) {
  const std::vector<std::uint8_t> flat(3072, 0);
  const auto png = codec::EncodePng(flat, 32, 32, 3);
  EXPECT_DOUBLE_EQ(metrics::CompressionRatio(flat, 32, 32, 3, metrics::Codec::kLossless),
                   3072.0 / png.size());
  const auto jpg = codec::EncodeJpeg(flat, 32, 32, 3, 75);
  EXPECT_DOUBLE_EQ(metrics::CompressionRatio(flat, 32, 32, 3, metrics::Codec::kLossy),
                   3072.0 / jpg.size());
}

TEST(Fdr, DegenerateCases) {
  Samples points;
  points.classes = 2;
  points.x = {{0, 0}, {0, 0}, {1, 2}, {1, 2}};
  points.y = {0, 0, 1, 1};
  EXPECT_TRUE(std::isinf(metrics::Fdr(points.Moments())));

  Samples same_mean;
  same_mean.classes = 2;
  same_mean.x = {{-1}, {1}, {-2}, {2}};
  same_mean.y = {0, 0, 1, 1};
  EXPECT_EQ(metrics::Fdr(same_mean.Moments()), 0.0);

  Samples missing = same_mean;
  missing.classes = 3;
  EXPECT_TRUE(ThrowsCode([&] { metrics::Fdr(missing.Moments()); }, ErrorCode::kInput));
  Samples one_class = same_mean;
  one_class.classes = 1;
  one_class.y = {0, 0, 0, 0};
  EXPECT_TRUE(ThrowsCode([&] { metrics::Fdr(one_class.Moments()); }, ErrorCode::kInput));
}

TEST(Fdr, GaussianPairMatchesBruteForce) {
  Rng rng(8);
  Samples s;
  s.classes = 2;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = i % 2;
    s.x.push_back({static_cast<double>(k) + rng.Normal(), rng.Normal()});
    s.y.push_back(k);
  }
  const double fdr = metrics::Fdr(s.Moments());
  const double expected = oracle::Fdr(s.x, s.y, s.classes);
  EXPECT_NEAR(fdr, expected, 0.01 * expected);
  // Population value: between 0.25 per sample, within 2 per sample.
  EXPECT_NEAR(fdr, 0.125, 0.01);
}

TEST(Fdr, RandomDataMatchesBruteForce) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const Samples s = RandomSamples(rng, 2 + rng.UniformInt(4), 20 + rng.UniformInt(50),
                                    1 + rng.UniformInt(6));
    const double expected = oracle::Fdr(s.x, s.y, s.classes);
    EXPECT_NEAR(metrics::Fdr(s.Moments()), expected, 1e-9 * expected);
  }
}

TEST(Fdr, TranslationInvariant) {
  Rng rng(10);
  for (int t = 0; t < 20; ++t) {
    Samples s = RandomSamples(rng, 3, 60, 4);
    const double before = metrics::Fdr(s.Moments());
    std::vector<double> shift(4);
    for (double& v : shift) v = 50.0 * rng.Normal();
    for (auto& row : s.x)
      for (std::size_t d = 0; d < 4; ++d) row[d] += shift[d];
    EXPECT_NEAR(metrics::Fdr(s.Moments()), before, 1e-8 * before);
  }
}

TEST(InClassStd, Examples) {
  Samples s;
  s.classes = 2;
  s.x = {{0}, {1}, {0}, {1}, {3}, {3}};
  s.y = {0, 0, 0, 0, 1, 1};
  // Class 0: std 0.5; class 1 identical samples: 0.
  EXPECT_DOUBLE_EQ(metrics::InClassStd(s.Moments()), 0.25);
  s.classes = 3;
  EXPECT_TRUE(ThrowsCode([&] { metrics::InClassStd(s.Moments()); }, ErrorCode::kInput));
}

TEST(InClassStd, MatchesTwoPassOnRandomData) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const Samples s = RandomSamples(rng, 2 + rng.UniformInt(4), 20 + rng.UniformInt(80),
                                    1 + rng.UniformInt(8));
    EXPECT_NEAR(metrics::InClassStd(s.Moments()), oracle::InClassStd(s.x, s.y, s.classes),
                1e-10);
  }
}

TEST(Characterize, FieldsWithinInvariants) {
  const data::ImageDataset ds = testing::RandomDataset(3, 6, 2, 32, 32, 3, 5);
  const metrics::DatasetCharacteristics c = metrics::Characterize(ds);
  EXPECT_GE(c.mean_entropy, 0.0);
  EXPECT_LE(c.mean_entropy, 1.0);
  EXPECT_GT(c.jpeg_ratio, 0.0);
  EXPECT_GT(c.png_ratio, 0.0);
  EXPECT_GE(c.fdr, 0.0);
  EXPECT_GE(c.in_class_std, 0.0);
  EXPECT_DOUBLE_EQ(c.mean_entropy, metrics::DatasetEntropy(ds));
}

TEST(Characterize, FeaturesArePreprocessedPixels) {
  // Two 1-channel 2x2 images per class; preprocessing upsamples to 32x32x3
  // and scales to [0, 1]. Constant images survive resizing exactly.
  data::ImageDataset ds;
  ds.class_names = {"a", "b"};
  ds.train = {2, 2, 1, {0, 0, 0, 0, 255, 255, 255, 255, 51, 51, 51, 51, 102, 102, 102, 102},
              {0, 0, 1, 1}};
  const metrics::ClassMoments m = metrics::MomentsOf(ds);
  EXPECT_EQ(m.dim(), 3072u);
  EXPECT_NEAR(metrics::InClassStd(m), (0.5 + 0.1) / 2.0, 1e-12);
}

TEST(Utility, PerfectPredictions) {
  const std::vector<std::size_t> y{0, 1, 2, 2, 1};
  EXPECT_EQ(metrics::MacroF1(y, y, 3), 1.0);
  const auto r = metrics::ComputeUtility(y, y, y, y, 3);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.f1_macro, 1.0);
  EXPECT_EQ(r.train_test_gap, 0.0);
}

TEST(Utility, HandComputedBinaryConfusion) {
  // Per class: TP=1, FP=1, FN=1, TN=1.
  const std::vector<std::size_t> truth{0, 0, 1, 1};
  const std::vector<std::size_t> pred{0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(metrics::MacroF1(pred, truth, 2), 0.5);
}

TEST(Utility, F1MatchesBruteForce) {
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.UniformInt(5);
    std::vector<std::size_t> truth, pred;
    for (std::size_t i = 0; i < k; ++i) truth.push_back(i);
    for (std::size_t i = 0; i < 40; ++i) truth.push_back(rng.UniformInt(k));
    for (std::size_t i = 0; i < truth.size(); ++i)
      pred.push_back(rng.Bernoulli(0.6) ? truth[i] : rng.UniformInt(k));
    EXPECT_NEAR(metrics::MacroF1(pred, truth, k), oracle::MacroF1(pred, truth, k), 1e-12);
  }
}

TEST(Utility, DiagonalConfusionGivesF1EqualAccuracy) {
  Rng rng(14);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 2 + rng.UniformInt(6);
    std::vector<std::size_t> y;
    for (std::size_t i = 0; i < k; ++i) y.push_back(i);
    for (int i = 0; i < 30; ++i) y.push_back(rng.UniformInt(k));
    EXPECT_EQ(metrics::MacroF1(y, y, k), dp::Accuracy(y, y));
  }
}

TEST(Utility, AbsentClassContributesZeroWithWarning) {
  const std::vector<std::size_t> y{0, 1, 0, 1};
  WarningCapture warnings;
  EXPECT_DOUBLE_EQ(metrics::MacroF1(y, y, 3), 2.0 / 3.0);
  ASSERT_EQ(warnings.messages().size(), 1u);
  EXPECT_NE(warnings.messages()[0].find("class 2"), std::string::npos);
}

TEST(Utility, GapIsTrainMinusTest) {
  const std::vector<std::size_t> truth{0, 1, 0, 1};
  const std::vector<std::size_t> test_pred{0, 0, 0, 1};
  const auto r = metrics::ComputeUtility(truth, truth, test_pred, truth, 2);
  EXPECT_DOUBLE_EQ(r.train_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r.train_test_gap, 0.25);
}

TEST(Utility, UniformRandomPredictor) {
  Rng rng(15);
  const std::size_t k = 10, n = 10000;
  std::vector<std::size_t> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = i % k;
    pred[i] = rng.UniformInt(k);
  }
  const double p = 1.0 / k;
  EXPECT_NEAR(dp::Accuracy(pred, truth), p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Utility, ModelOnDataset) {
  const data::ImageDataset ds = testing::RandomDataset(2, 4, 3, 32, 32, 3, 1);
  const nn::ModelParams model = nn::InitParams(testing::TinyModel(2), 3);
  const auto train = data::Preprocess(ds.train, 2);
  const auto test = data::Preprocess(ds.test, 2);
  const metrics::UtilityReport r = metrics::Utility(model, train, test);
  const auto pred = dp::PredictLabels(model, test.images);
  EXPECT_DOUBLE_EQ(r.accuracy, dp::Accuracy(pred, test.labels));
  EXPECT_GE(r.f1_macro, 0.0);
  EXPECT_LE(r.f1_macro, 1.0);
}

}  // namespace
}  // namespace ppml_audit
