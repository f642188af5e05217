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

// Data-level characteristics (entropy, compression ratio, Fisher
// discriminant ratio, in-class spread) and utility metrics.

#ifndef PPML_AUDIT_METRICS_HPP_
#define PPML_AUDIT_METRICS_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ppml_audit/dataset.hpp"
#include "ppml_audit/dp_train.hpp"
#include "ppml_audit/error.hpp"
#include "ppml_audit/image_codec.hpp"
#include "ppml_audit/nn.hpp"

namespace ppml_audit::metrics {

// Histogram entropy of each channel in bits, averaged over channels and
// divided by 8 so the result lies in [0, 1].
inline double ShannonEntropy(std::span<const std::uint8_t> pixels, std::size_t channels) {
  Require(channels >= 1 && !pixels.empty() && pixels.size() % channels == 0,
          ErrorCode::kInput, "entropy needs a non-empty image");
  const std::size_t per_channel = pixels.size() / channels;
  double total = 0.0;
  std::array<std::size_t, 256> hist{};
  for (std::size_t ch = 0; ch < channels; ++ch) {
    hist.fill(0);
    for (std::size_t i = ch; i < pixels.size(); i += channels) ++hist[pixels[i]];
    double h = 0.0;
    for (std::size_t count : hist) {
      if (count == 0) continue;
      const double p = static_cast<double>(count) / static_cast<double>(per_channel);
      h -= p * std::log2(p);
    }
    total += h;
  }
  return total / static_cast<double>(channels) / 8.0;
}

// Mean per-image entropy over the train split.
inline double DatasetEntropy(const data::ImageDataset& ds) {
  Require(!ds.train.empty(), ErrorCode::kInput, "entropy of an empty dataset");
  double sum = 0.0;
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    sum += ShannonEntropy(ds.train.Image(i), ds.train.channels);
  return sum / static_cast<double>(ds.train.size());
}

enum class Codec { kLossy, kLossless };

// Raw byte size (H * W * C) over encoded size. Lossy is baseline JPEG at
// quality 75, lossless is PNG at the default zlib level.
inline double CompressionRatio(std::span<const std::uint8_t> pixels, std::size_t height,
                               std::size_t width, std::size_t channels, Codec codec) {
  const std::vector<std::uint8_t> encoded =
      codec == Codec::kLossy ? codec::EncodeJpeg(pixels, height, width, channels)
                             : codec::EncodePng(pixels, height, width, channels);
  Require(!encoded.empty(), ErrorCode::kCodec, "encoder produced no bytes");
  return static_cast<double>(height * width * channels) /
         static_cast<double>(encoded.size());
}

inline double DatasetCompressionRatio(const data::ImageDataset& ds, Codec codec) {
  Require(!ds.train.empty(), ErrorCode::kInput, "compression of an empty dataset");
  const auto& s = ds.train;
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    sum += CompressionRatio(s.Image(i), s.height, s.width, s.channels, codec);
  return sum / static_cast<double>(s.size());
}

// Per-class feature means and centered sums of squares, updated one sample
// at a time (Welford) so large datasets never need a dense feature matrix.
class ClassMoments {
 public:
  ClassMoments(std::size_t num_classes, std::size_t dim)
      : dim_(dim), counts_(num_classes, 0), means_(num_classes * dim, 0.0),
        m2_(num_classes * dim, 0.0) {}

  void Add(std::span<const double> features, std::size_t label) {
    Require(features.size() == dim_, ErrorCode::kShape, "feature length mismatch");
    Require(label < counts_.size(), ErrorCode::kInput, "label out of range");
    const double n = static_cast<double>(++counts_[label]);
    double* mean = &means_[label * dim_];
    double* m2 = &m2_[label * dim_];
    for (std::size_t d = 0; d < dim_; ++d) {
      const double delta = features[d] - mean[d];
      mean[d] += delta / n;
      m2[d] += delta * (features[d] - mean[d]);
    }
  }

  std::size_t num_classes() const { return counts_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t count(std::size_t k) const { return counts_[k]; }
  double mean(std::size_t k, std::size_t d) const { return means_[k * dim_ + d]; }
  // Sum over the class of (x_d - mean_d)^2.
  double centered_square(std::size_t k, std::size_t d) const { return m2_[k * dim_ + d]; }

 private:
  std::size_t dim_;
  std::vector<std::size_t> counts_;
  std::vector<double> means_;
  std::vector<double> m2_;
};

inline void RequireAllClassesPresent(const ClassMoments& m) {
  Require(m.num_classes() >= 2, ErrorCode::kInput, "needs at least two classes");
  for (std::size_t k = 0; k < m.num_classes(); ++k)
    Require(m.count(k) > 0, ErrorCode::kInput,
            "class " + std::to_string(k) + " has no samples");
}

// trace(S_between) / trace(S_within). Returns +infinity when the within-class
// scatter vanishes but the class means differ.
inline double Fdr(const ClassMoments& m) {
  RequireAllClassesPresent(m);
  std::size_t total = 0;
  for (std::size_t k = 0; k < m.num_classes(); ++k) total += m.count(k);
  double between = 0.0, within = 0.0;
  for (std::size_t d = 0; d < m.dim(); ++d) {
    double global = 0.0;
    for (std::size_t k = 0; k < m.num_classes(); ++k)
      global += static_cast<double>(m.count(k)) * m.mean(k, d);
    global /= static_cast<double>(total);
    for (std::size_t k = 0; k < m.num_classes(); ++k) {
      const double diff = m.mean(k, d) - global;
      between += static_cast<double>(m.count(k)) * diff * diff;
      within += m.centered_square(k, d);
    }
  }
  if (between <= 0.0) return 0.0;
  if (within <= 0.0) return std::numeric_limits<double>::infinity();
  return between / within;
}

// Per-class, per-feature population standard deviation, averaged over
// features and then over classes.
inline double InClassStd(const ClassMoments& m) {
  RequireAllClassesPresent(m);
  double acc = 0.0;
  for (std::size_t k = 0; k < m.num_classes(); ++k) {
    const double n = static_cast<double>(m.count(k));
    double class_sum = 0.0;
    for (std::size_t d = 0; d < m.dim(); ++d)
      class_sum += std::sqrt(m.centered_square(k, d) / n);
    acc += class_sum / static_cast<double>(m.dim());
  }
  return acc / static_cast<double>(m.num_classes());
}

// Moments of rows of an (N, D...) tensor.
inline ClassMoments MomentsOf(const Tensor& features, std::span<const std::size_t> labels,
                              std::size_t num_classes) {
  Require(features.rank() >= 1 && features.dim(0) == labels.size(), ErrorCode::kShape,
          "one label per feature row required");
  const std::size_t dim = labels.empty() ? 0 : features.size() / labels.size();
  ClassMoments m(num_classes, dim);
  for (std::size_t i = 0; i < labels.size(); ++i) m.Add(features.Row(i), labels[i]);
  return m;
}

// Moments of preprocessed, flattened train pixels.
inline ClassMoments MomentsOf(const data::ImageDataset& ds,
                              const data::PreprocessOptions& opt = {}) {
  ds.Validate();
  const std::size_t dim = opt.target_height * opt.target_width * opt.target_channels;
  ClassMoments m(ds.num_classes(), dim);
  std::vector<double> features(dim);
  const auto& s = ds.train;
  for (std::size_t i = 0; i < s.size(); ++i) {
    data::PreprocessImage(s.Image(i), s.height, s.width, s.channels, opt, features);
    m.Add(features, s.labels[i]);
  }
  return m;
}

struct DatasetCharacteristics {
  double mean_entropy = 0.0;
  double jpeg_ratio = 0.0;
  double png_ratio = 0.0;
  double fdr = 0.0;
  double in_class_std = 0.0;
};

inline DatasetCharacteristics Characterize(const data::ImageDataset& ds,
                                           const data::PreprocessOptions& opt = {}) {
  DatasetCharacteristics c;
  c.mean_entropy = DatasetEntropy(ds);
  c.jpeg_ratio = DatasetCompressionRatio(ds, Codec::kLossy);
  c.png_ratio = DatasetCompressionRatio(ds, Codec::kLossless);
  const ClassMoments m = MomentsOf(ds, opt);
  c.fdr = Fdr(m);
  c.in_class_std = InClassStd(m);
  return c;
}

// ---------------------------------------------------------------------------
// Utility

inline std::vector<std::vector<std::size_t>> ConfusionMatrix(
    std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
    std::size_t num_classes) {
  Require(predicted.size() == truth.size(), ErrorCode::kInput,
          "prediction and label counts differ");
  std::vector<std::vector<std::size_t>> cm(num_classes,
                                           std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    Require(truth[i] < num_classes && predicted[i] < num_classes, ErrorCode::kInput,
            "label out of range");
    ++cm[truth[i]][predicted[i]];
  }
  return cm;
}

// Unweighted mean of per-class F1. Classes without test samples contribute
// 0 (with a warning).
inline double MacroF1(std::span<const std::size_t> predicted,
                      std::span<const std::size_t> truth, std::size_t num_classes) {
  Require(!truth.empty(), ErrorCode::kInput, "F1 of an empty label set");
  const auto cm = ConfusionMatrix(predicted, truth, num_classes);
  double sum = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t tp = cm[k][k], fp = 0, fn = 0, support = 0;
    for (std::size_t j = 0; j < num_classes; ++j) {
      support += cm[k][j];
      if (j != k) {
        fn += cm[k][j];
        fp += cm[j][k];
      }
    }
    if (support == 0)
      Warn("class " + std::to_string(k) + " is absent from the labels; its F1 is 0");
    const std::size_t denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(num_classes);
}

struct UtilityReport {
  double accuracy = 0.0;  // test split
  double f1_macro = 0.0;  // test split
  double train_accuracy = 0.0;
  double train_test_gap = 0.0;  // train_accuracy - accuracy
};

inline UtilityReport ComputeUtility(std::span<const std::size_t> train_predicted,
                                    std::span<const std::size_t> train_truth,
                                    std::span<const std::size_t> test_predicted,
                                    std::span<const std::size_t> test_truth,
                                    std::size_t num_classes) {
  UtilityReport r;
  r.accuracy = dp::Accuracy(test_predicted, test_truth);
  r.f1_macro = MacroF1(test_predicted, test_truth, num_classes);
  r.train_accuracy = dp::Accuracy(train_predicted, train_truth);
  r.train_test_gap = r.train_accuracy - r.accuracy;
  return r;
}

inline UtilityReport Utility(const nn::ModelParams& model, const nn::LabeledImages& train,
                             const nn::LabeledImages& test) {
  Require(!test.empty(), ErrorCode::kInput, "utility needs a non-empty test split");
  const auto train_pred = dp::PredictLabels(model, train.images);
  const auto test_pred = dp::PredictLabels(model, test.images);
  return ComputeUtility(train_pred, train.labels, test_pred, test.labels,
                        model.config.num_classes);
}

}  // namespace ppml_audit::metrics

#endif  // PPML_AUDIT_METRICS_HPP_
