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
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "oracles.hpp"

namespace ppml_audit {
namespace {

using testing::RandomDataset;
using testing::TempDir;
using testing::ThrowsCode;
using testing::WarningCapture;

std::vector<std::uint8_t> IdxBytes(std::uint8_t rank, const std::vector<std::uint32_t>& dims,
                                   const std::vector<std::uint8_t>& values) {
  std::vector<std::uint8_t> out{0, 0, 0x08, rank};
  for (std::uint32_t d : dims)
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
  out.insert(out.end(), values.begin(), values.end());
  return out;
}

data::ImageDataset Balanced(std::size_t classes, std::size_t per_class) {
  return RandomDataset(classes, per_class, 2, 2, 2, 1, 99);
}

TEST(Idx, ParsesImagesAndLabels) {
  std::vector<std::uint8_t> pixels(2 * 28 * 28);
  std::iota(pixels.begin(), pixels.end(), 0);
  const auto images = data::ParseIdx(IdxBytes(3, {2, 28, 28}, pixels));
  EXPECT_EQ(images.dims, (std::vector<std::uint32_t>{2, 28, 28}));
  const auto labels = data::ParseIdx(IdxBytes(1, {2}, {7, 3}));
  const data::ImageSplit s = data::IdxSplit(images, labels);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.channels, 1u);
  EXPECT_EQ(s.height, 28u);
  EXPECT_EQ(s.labels, (std::vector<std::uint32_t>{7, 3}));
  EXPECT_EQ(s.Image(1)[0], pixels[784]);
}

TEST(Idx, TruncatedOrMalformedIsFormatErrorWithOffset) {
  const auto full = IdxBytes(3, {2, 28, 28}, std::vector<std::uint8_t>(2 * 28 * 28, 1));
  const std::vector<std::uint8_t> truncated(full.begin(), full.end() - 10);
  try {
    data::ParseIdx(truncated);
    FAIL() << "no error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_EQ(e.offset(), 16u);
  }
  const std::vector<std::uint8_t> header_only{0, 0, 8, 3, 0, 0};
  EXPECT_TRUE(ThrowsCode([&] { data::ParseIdx(header_only); }, ErrorCode::kFormat));
  auto wrong_type = full;
  wrong_type[2] = 0x0D;
  EXPECT_TRUE(ThrowsCode([&] { data::ParseIdx(wrong_type); }, ErrorCode::kFormat));
  auto trailing = full;
  trailing.push_back(0);
  EXPECT_TRUE(ThrowsCode([&] { data::ParseIdx(trailing); }, ErrorCode::kFormat));
}

TEST(Idx, LoadsStandardFileNames) {
  TempDir dir("idx");
  std::vector<std::uint8_t> px(3 * 4 * 4, 9);
  io::WriteFileBytes(dir.path() / "train-images-idx3-ubyte", IdxBytes(3, {3, 4, 4}, px));
  io::WriteFileBytes(dir.path() / "train-labels-idx1-ubyte", IdxBytes(1, {3}, {0, 2, 1}));
  io::WriteFileBytes(dir.path() / "t10k-images-idx3-ubyte",
                     IdxBytes(3, {1, 4, 4}, std::vector<std::uint8_t>(16)));
  io::WriteFileBytes(dir.path() / "t10k-labels-idx1-ubyte", IdxBytes(1, {1}, {2}));
  const data::ImageDataset ds = data::LoadIdx(dir.path());
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"0", "1", "2"}));
  EXPECT_EQ(ds.train.size(), 3u);
  EXPECT_EQ(ds.test.size(), 1u);
}

TEST(ImageDir, LabelsFollowSortedDirectoryNames) {
  TempDir dir("imgdir");
  std::vector<std::uint8_t> px(8 * 8 * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i);
  for (const char* cls : {"zebra", "apple", "mango"}) {
    io::WriteFileBytes(dir.path() / cls / "a.png", codec::EncodePng(px, 8, 8, 3));
  }
  io::WriteFileBytes(dir.path() / "apple" / "b.png", codec::EncodePng(px, 8, 8, 3));
  const data::ImageDataset ds = data::LoadImageDir(dir.path());
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"apple", "mango", "zebra"}));
  EXPECT_EQ(ds.train.labels, (std::vector<std::uint32_t>{0, 0, 1, 2}));
  EXPECT_EQ(ds.train.Image(0)[5], 5);  // PNG is lossless
  EXPECT_TRUE(ds.test.empty());
}

TEST(ImageDir, SplitLayoutAndJpeg) {
  TempDir dir("imgsplit");
  std::vector<std::uint8_t> px(8 * 8, 128);
  io::WriteFileBytes(dir.path() / "train" / "b" / "0.jpg", codec::EncodeJpeg(px, 8, 8, 1));
  io::WriteFileBytes(dir.path() / "train" / "a" / "0.png", codec::EncodePng(px, 8, 8, 1));
  io::WriteFileBytes(dir.path() / "test" / "b" / "0.png", codec::EncodePng(px, 8, 8, 1));
  const data::ImageDataset ds = data::LoadImageDir(dir.path());
  EXPECT_EQ(ds.train.labels, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(ds.test.labels, (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(ds.train.channels, 1u);
}

TEST(Container, RoundTripAndTruncation) {
  const data::ImageDataset ds = RandomDataset(3, 4, 2, 5, 6, 3, 1);
  const auto bytes = data::SerializeDataset(ds);
  EXPECT_EQ(data::DeserializeDataset(bytes), ds);
  for (std::size_t cut : {std::size_t{4}, std::size_t{30}, bytes.size() - 1}) {
    EXPECT_TRUE(ThrowsCode([&] { data::DeserializeDataset({bytes.data(), cut}); },
                           ErrorCode::kFormat))
        << cut;
  }
  TempDir dir("container");
  data::SaveDataset(ds, dir.path() / "ds.bin");
  EXPECT_EQ(data::LoadDataset(dir.path() / "ds.bin"), ds);
}

TEST(Preprocess, GrayscaleIsUpscaledAndReplicated) {
  data::ImageSplit s{28, 28, 1, {}, {}};
  std::vector<std::uint8_t> img(28 * 28);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<std::uint8_t>(i % 256);
  s.Append(img, 0);
  const nn::LabeledImages t = data::Preprocess(s, 2);
  EXPECT_EQ(t.images.shape(), (Shape{1, 32, 32, 3}));
  auto row = t.images.Row(0);
  for (std::size_t p = 0; p < 32 * 32; ++p) {
    EXPECT_EQ(row[3 * p], row[3 * p + 1]);
    EXPECT_EQ(row[3 * p], row[3 * p + 2]);
    EXPECT_GE(row[3 * p], 0.0);
    EXPECT_LE(row[3 * p], 1.0);
  }
}

TEST(Preprocess, NativeSizeOnlyRescales) {
  data::ImageSplit s{32, 32, 3, {}, {}};
  std::vector<std::uint8_t> img(32 * 32 * 3);
  Rng rng(3);
  for (auto& v : img) v = static_cast<std::uint8_t>(rng.UniformInt(256));
  img[0] = 255;
  img[1] = 0;
  s.Append(img, 0);
  const nn::LabeledImages t = data::Preprocess(s, 1);
  EXPECT_EQ(t.images[0], 1.0);
  EXPECT_EQ(t.images[1], 0.0);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(t.images[i], img[i] / 255.0);
}

TEST(Preprocess, ConstantImageStaysConstantWhenResized) {
  for (std::size_t size : {7u, 28u, 64u}) {
    data::ImageSplit s{size, size, 3, std::vector<std::uint8_t>(size * size * 3, 51), {0}};
    data::PreprocessOptions opt;
    opt.allow_downscale = true;
    const nn::LabeledImages t = data::Preprocess(s, 1, opt);
    for (double v : t.images.vec()) EXPECT_NEAR(v, 0.2, 1e-12);
  }
}

TEST(Preprocess, LargerImagesNeedTheDownscaleFlag) {
  data::ImageSplit s{64, 64, 3, std::vector<std::uint8_t>(64 * 64 * 3, 0), {0}};
  EXPECT_TRUE(ThrowsCode([&] { data::Preprocess(s, 1); }, ErrorCode::kInput));
}

TEST(Grayscale, LuminanceWeights) {
  data::ImageDataset ds;
  ds.class_names = {"a"};
  ds.train = {1, 3, 3, {255, 255, 255, 255, 0, 0, 0, 0, 0}, {0}};
  ds.test = {1, 3, 3, {0, 255, 0, 0, 0, 255, 10, 20, 30}, {0}};
  const data::ImageDataset g = data::ToGrayscale(ds);
  EXPECT_EQ(g.train.channels, 1u);
  EXPECT_EQ(g.train.pixels, (std::vector<std::uint8_t>{255, 76, 0}));
  EXPECT_EQ(g.test.pixels, (std::vector<std::uint8_t>{150, 29, 18}));
}

TEST(Grayscale, AlreadyGrayIsNoOpWithWarning) {
  const data::ImageDataset ds = Balanced(3, 2);
  WarningCapture warnings;
  EXPECT_EQ(data::ToGrayscale(ds), ds);
  EXPECT_EQ(warnings.messages().size(), 1u);
}

TEST(ClassSize, ReducesEveryClassExactly) {
  const data::ImageDataset ds = Balanced(10, 60);
  const data::ImageDataset r = data::ReduceClassSize(ds, 50, 42);
  EXPECT_EQ(data::Histogram(r.train, 10), data::ClassHistogram(10, 50));
  EXPECT_EQ(r.test, ds.test);
  EXPECT_EQ(data::Histogram(data::ReduceClassSize(ds, 5, 42).train, 10),
            data::ClassHistogram(10, 5));
  // Deterministic per seed, different across seeds.
  EXPECT_EQ(data::ReduceClassSize(ds, 50, 42), r);
  EXPECT_NE(data::ReduceClassSize(ds, 50, 43).train, r.train);
}

TEST(ClassSize, AtMinimumKeepsEverySample) {
  const data::ImageDataset ds = Balanced(4, 6);
  const data::ImageDataset r = data::ReduceClassSize(ds, 6, 1);
  auto sorted = [](const data::ImageSplit& s) {
    std::multiset<std::vector<std::uint8_t>> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::vector<std::uint8_t> key(s.Image(i).begin(), s.Image(i).end());
      key.push_back(static_cast<std::uint8_t>(s.labels[i]));
      out.insert(key);
    }
    return out;
  };
  EXPECT_EQ(sorted(r.train), sorted(ds.train));
}

TEST(ClassSize, TooFewSamplesNamesTheClass) {
  data::ImageDataset ds = Balanced(3, 5);
  ds.class_names = {"cat", "dog", "eel"};
  ds.train.labels.back() = 0;  // eel now has 4
  try {
    data::ReduceClassSize(ds, 5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInput);
    EXPECT_NE(std::string(e.what()).find("eel"), std::string::npos);
  }
}

TEST(ClassCount, KeepsFirstAlphanumericLabels) {
  data::ImageDataset ds = Balanced(5, 3);
  ds.class_names = {"4", "2", "0", "3", "1"};
  const data::ImageDataset r = data::ReduceClassCount(ds, 3);
  EXPECT_EQ(r.class_names, (std::vector<std::string>{"0", "1", "2"}));
  // Old ids 2 ("0"), 4 ("1"), 1 ("2") map to 0, 1, 2.
  EXPECT_EQ(data::Histogram(r.train, 3), data::ClassHistogram(3, 3));
  EXPECT_EQ(data::Histogram(r.test, 3), data::ClassHistogram(3, 2));
  for (std::size_t i = 0; i < r.train.size(); ++i) {
    const std::string& name = r.class_names[r.train.labels[i]];
    EXPECT_TRUE(name == "0" || name == "1" || name == "2");
  }
}

TEST(ClassCount, StepsAndBounds) {
  data::ImageDataset ds = Balanced(47, 1);
  for (std::size_t n = 47; n >= 7; n -= 5) {
    ds = data::ReduceClassCount(ds, n);
    EXPECT_EQ(ds.num_classes(), n);
    EXPECT_EQ(ds.train.size(), n);
    if (n == 7) break;
  }
  ds = data::ReduceClassCount(ds, 3);
  EXPECT_EQ(ds.num_classes(), 3u);
  EXPECT_EQ(data::ReduceClassCount(ds, 3), ds);
  EXPECT_TRUE(ThrowsCode([&] { data::ReduceClassCount(ds, 2); }, ErrorCode::kInput));
  EXPECT_TRUE(ThrowsCode([&] { data::ReduceClassCount(ds, 4); }, ErrorCode::kInput));
}

TEST(ImbalanceLinear, ClosedFormHistograms) {
  const data::ClassHistogram balanced(10, 5000);
  EXPECT_EQ(data::LinearImbalanceSizes(balanced, 0.0), balanced);
  EXPECT_EQ(data::LinearImbalanceSizes(balanced, 0.9),
            (std::vector<std::size_t>{500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000}));
  for (double i : {0.1, 0.3, 0.6, 0.9}) {
    const auto sizes = data::LinearImbalanceSizes(balanced, i);
    for (std::size_t k = 0; k < 10; ++k) {
      const double expected = 5000.0 * (1.0 - i) + k * (5000.0 * i) / 9.0;
      EXPECT_EQ(sizes[k], static_cast<std::size_t>(std::llround(expected))) << i << " " << k;
    }
  }
  const auto s3 = data::LinearImbalanceSizes(balanced, 0.3);
  EXPECT_EQ(s3.front(), 3500u);
  EXPECT_EQ(s3.back(), 5000u);
}

TEST(ImbalanceLinear, RoundingCollisionsResolved) {
  // 10 classes of 20 with i = 0.1: raw sizes 18..20 collide.
  const auto sizes = data::LinearImbalanceSizes(data::ClassHistogram(10, 20), 0.1);
  for (std::size_t k = 1; k < sizes.size(); ++k) EXPECT_LT(sizes[k - 1], sizes[k]);
  EXPECT_EQ(sizes.back(), 20u);
}

TEST(ImbalanceLinear, AppliesToTrainOnly) {
  const data::ImageDataset ds = Balanced(4, 40);
  const data::ImageDataset r = data::ImbalanceLinear(ds, 0.75, 42);
  EXPECT_EQ(data::Histogram(r.train, 4), (data::ClassHistogram{10, 20, 30, 40}));
  EXPECT_EQ(r.test, ds.test);
  EXPECT_EQ(data::ImbalanceLinear(ds, 0.75, 42), r);
  EXPECT_TRUE(ThrowsCode([&] { data::ImbalanceLinear(Balanced(1, 4), 0.5, 1); },
                         ErrorCode::kInput));
}

TEST(ImbalanceNormal, ZeroFactorIsIdentity) {
  const data::ImageDataset ds = Balanced(5, 10);
  const data::ImageDataset r = data::ImbalanceNormal(ds, 0.0, 42);
  EXPECT_EQ(r, ds);
}

TEST(ImbalanceNormal, EmpiricalMeanMatchesClippedNormalIntegral) {
  Rng rng(42);
  const int draws = 10000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) sum += data::SampleNormalImbalanceFactor(0.9, rng);
  const double expected = oracle::ClippedNormalMean(0.1, 0.9, 0.05, 1.0);
  EXPECT_NEAR(sum / draws, expected, 0.02 * expected);
}

TEST(ImbalanceNormal, SizesWithinClipBounds) {
  const data::ImageDataset ds = Balanced(10, 100);
  for (double i : {0.2, 0.5, 0.9, 1.0}) {
    const data::ImageDataset r = data::ImbalanceNormal(ds, i, 7);
    const auto hist = data::Histogram(r.train, 10);
    EXPECT_EQ(std::accumulate(hist.begin(), hist.end(), std::size_t{0}), r.train.size());
    for (std::size_t c : hist) {
      EXPECT_GE(c, 5u);
      EXPECT_LE(c, 100u);
    }
    EXPECT_EQ(r.test, ds.test);
  }
}

TEST(Operators, HistogramsAlwaysSumToSplitSize) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 3 + rng.UniformInt(5);
    data::ImageDataset ds = Balanced(k, 10 + rng.UniformInt(20));
    ds = data::ReduceClassSize(ds, 10, rng.NextU64());
    if (rng.Bernoulli(0.5)) ds = data::ReduceClassCount(ds, 3 + rng.UniformInt(k - 2));
    ds = rng.Bernoulli(0.5) ? data::ImbalanceLinear(ds, rng.Uniform(), rng.NextU64())
                            : data::ImbalanceNormal(ds, rng.Uniform(), rng.NextU64());
    for (const data::ImageSplit* s : {&ds.train, &ds.test}) {
      const auto h = data::Histogram(*s, ds.num_classes());
      EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::size_t{0}), s->size());
    }
  }
}

TEST(Synth, DeterministicAndShaped) {
  data::SynthSpec spec;
  spec.num_classes = 3;
  spec.train_per_class = 5;
  spec.test_per_class = 2;
  const data::ImageDataset a = data::SynthGenerate(spec, 1);
  EXPECT_EQ(a, data::SynthGenerate(spec, 1));
  EXPECT_NE(a, data::SynthGenerate(spec, 2));
  EXPECT_EQ(a.train.size(), 15u);
  EXPECT_EQ(a.test.size(), 6u);
  EXPECT_EQ(a.train.height, 32u);
  EXPECT_EQ(data::Histogram(a.test, 3), data::ClassHistogram(3, 2));
}

}  // namespace
}  // namespace ppml_audit
