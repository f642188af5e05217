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

#ifndef PPML_AUDIT_DATASET_HPP_
#define PPML_AUDIT_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ppml_audit/error.hpp"
#include "ppml_audit/nn.hpp"
#include "ppml_audit/random.hpp"
#include "ppml_audit/tensor.hpp"

namespace ppml_audit::data {

inline constexpr std::uint64_t kDefaultSeed = 42;

// One split of 8-bit images sharing height, width and channel count.
struct ImageSplit {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;  // size() * height * width * channels
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t image_bytes() const { return height * width * channels; }

  std::span<const std::uint8_t> Image(std::size_t i) const {
    return std::span<const std::uint8_t>(pixels).subspan(i * image_bytes(),
                                                         image_bytes());
  }
  std::span<std::uint8_t> Image(std::size_t i) {
    return std::span<std::uint8_t>(pixels).subspan(i * image_bytes(), image_bytes());
  }

  void Append(std::span<const std::uint8_t> image, std::uint32_t label) {
    pixels.insert(pixels.end(), image.begin(), image.end());
    labels.push_back(label);
  }

  // Copy of the samples at the given indices, in that order.
  ImageSplit Select(std::span<const std::size_t> indices) const {
    ImageSplit out{height, width, channels, {}, {}};
    out.pixels.reserve(indices.size() * image_bytes());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.Append(Image(i), labels[i]);
    return out;
  }

  friend bool operator==(const ImageSplit&, const ImageSplit&) = default;
};

struct ImageDataset {
  ImageSplit train;
  ImageSplit test;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }

  void Validate() const {
    Require(!class_names.empty(), ErrorCode::kInput, "dataset has no classes");
    for (const ImageSplit* s : {&train, &test}) {
      Require(s->pixels.size() == s->size() * s->image_bytes(), ErrorCode::kInput,
              "pixel buffer does not match split size");
      for (std::uint32_t y : s->labels)
        Require(y < class_names.size(), ErrorCode::kInput,
                "label " + std::to_string(y) + " has no class name");
    }
  }

  friend bool operator==(const ImageDataset&, const ImageDataset&) = default;
};

using ClassHistogram = std::vector<std::size_t>;

inline ClassHistogram Histogram(const ImageSplit& split, std::size_t num_classes) {
  ClassHistogram h(num_classes, 0);
  for (std::uint32_t y : split.labels) {
    Require(y < num_classes, ErrorCode::kInput, "label out of range");
    ++h[y];
  }
  return h;
}

inline std::vector<std::vector<std::size_t>> IndicesByClass(const ImageSplit& split,
                                                            std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < split.size(); ++i) by_class[split.labels[i]].push_back(i);
  return by_class;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessOptions {
  std::size_t target_height = 32;
  std::size_t target_width = 32;
  std::size_t target_channels = 3;
  // Images larger than the target are rejected unless this is set; they are
  // then shrunk by area averaging.
  bool allow_downscale = false;
};

namespace detail {

// Bilinear resampling with half-pixel centers, per channel.
inline void ResizeBilinear(std::span<const double> in, std::size_t h, std::size_t w,
                           std::size_t c, std::size_t oh, std::size_t ow,
                           std::span<double> out) {
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double fx =
          std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = in[(y0 * w + x0) * c + ch];
        const double b = in[(y0 * w + x1) * c + ch];
        const double d = in[(y1 * w + x0) * c + ch];
        const double e = in[(y1 * w + x1) * c + ch];
        out[(y * ow + x) * c + ch] =
            (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * d + tx * e);
      }
    }
  }
}

// Box-filter resampling: each output pixel is the overlap-weighted mean of
// the input pixels its footprint covers.
inline void ResizeArea(std::span<const double> in, std::size_t h, std::size_t w,
                       std::size_t c, std::size_t oh, std::size_t ow,
                       std::span<double> out) {
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const double y_lo = y * sy, y_hi = (y + 1) * sy;
    for (std::size_t x = 0; x < ow; ++x) {
      const double x_lo = x * sx, x_hi = (x + 1) * sx;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0, area = 0.0;
        for (auto iy = static_cast<std::size_t>(y_lo);
             iy < h && static_cast<double>(iy) < y_hi; ++iy) {
          const double wy = std::min<double>(iy + 1, y_hi) - std::max<double>(iy, y_lo);
          for (auto ix = static_cast<std::size_t>(x_lo);
               ix < w && static_cast<double>(ix) < x_hi; ++ix) {
            const double wx =
                std::min<double>(ix + 1, x_hi) - std::max<double>(ix, x_lo);
            acc += wy * wx * in[(iy * w + ix) * c + ch];
            area += wy * wx;
          }
        }
        out[(y * ow + x) * c + ch] = acc / area;
      }
    }
  }
}

}  // namespace detail

// Normalizes to [0, 1], resizes to the target and replicates grayscale
// channels. Writes target_height * target_width * target_channels values.
inline void PreprocessImage(std::span<const std::uint8_t> image, std::size_t h,
                            std::size_t w, std::size_t c,
                            const PreprocessOptions& opt, std::span<double> out) {
  Require(c == 1 || c == opt.target_channels, ErrorCode::kInput,
          "cannot map " + std::to_string(c) + " channels to " +
              std::to_string(opt.target_channels));
  const bool larger = h > opt.target_height || w > opt.target_width;
  Require(!larger || opt.allow_downscale, ErrorCode::kInput,
          "image " + std::to_string(h) + "x" + std::to_string(w) +
              " exceeds the model input; enable downscaling explicitly");
  std::vector<double> scaled(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) scaled[i] = image[i] / 255.0;
  const std::size_t oh = opt.target_height, ow = opt.target_width;
  std::vector<double> resized;
  if (h == oh && w == ow) {
    resized = std::move(scaled);
  } else {
    resized.resize(oh * ow * c);
    if (larger) {
      detail::ResizeArea(scaled, h, w, c, oh, ow, resized);
    } else {
      detail::ResizeBilinear(scaled, h, w, c, oh, ow, resized);
    }
  }
  const std::size_t oc = opt.target_channels;
  for (std::size_t p = 0; p < oh * ow; ++p)
    for (std::size_t ch = 0; ch < oc; ++ch)
      out[p * oc + ch] = resized[p * c + (c == 1 ? 0 : ch)];
}

inline nn::LabeledImages Preprocess(const ImageSplit& split, std::size_t num_classes,
                                    const PreprocessOptions& opt = {}) {
  const std::size_t n = split.size();
  nn::LabeledImages out{
      Tensor({n, opt.target_height, opt.target_width, opt.target_channels}),
      std::vector<std::size_t>(split.labels.begin(), split.labels.end()), num_classes};
  for (std::size_t i = 0; i < n; ++i)
    PreprocessImage(split.Image(i), split.height, split.width, split.channels, opt,
                    out.images.Row(i));
  return out;
}

struct PreprocessedDataset {
  nn::LabeledImages train;
  nn::LabeledImages test;
};

inline PreprocessedDataset Preprocess(const ImageDataset& ds,
                                      const PreprocessOptions& opt = {}) {
  ds.Validate();
  return {Preprocess(ds.train, ds.num_classes(), opt),
          Preprocess(ds.test, ds.num_classes(), opt)};
}

// ---------------------------------------------------------------------------
// Modification operators. Each returns a new dataset; only the train split
// is modified, except ReduceClassCount which drops the removed classes from
// both splits.

// Luminance 0.299 R + 0.587 G + 0.114 B, rounded. Applies to both splits
// since the model must see one representation.
inline ImageDataset ToGrayscale(const ImageDataset& ds) {
  ds.Validate();
  if (ds.train.channels == 1 && (ds.test.empty() || ds.test.channels == 1)) {
    Warn("dataset is already grayscale; returning it unchanged");
    return ds;
  }
  auto convert = [](const ImageSplit& s) {
    Require(s.channels == 3 || s.empty(), ErrorCode::kInput,
            "grayscale conversion needs 3-channel images");
    ImageSplit out{s.height, s.width, 1, {}, s.labels};
    const std::size_t pixels = s.size() * s.height * s.width;
    out.pixels.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      const double lum = 0.299 * s.pixels[3 * p] + 0.587 * s.pixels[3 * p + 1] +
                         0.114 * s.pixels[3 * p + 2];
      out.pixels[p] = static_cast<std::uint8_t>(std::clamp(std::round(lum), 0.0, 255.0));
    }
    return out;
  };
  return {convert(ds.train), convert(ds.test), ds.class_names};
}

namespace detail {

// Keeps `keep` of the given indices chosen uniformly at random; the result
// is sorted so surviving samples retain their original order.
inline std::vector<std::size_t> SampleWithoutReplacement(std::vector<std::size_t> pool,
                                                         std::size_t keep, Rng& rng) {
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + rng.UniformInt(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(keep);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline ImageDataset KeepTrainCounts(const ImageDataset& ds,
                                    const std::vector<std::size_t>& target, Rng& rng) {
  const auto by_class = IndicesByClass(ds.train, ds.num_classes());
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto chosen = SampleWithoutReplacement(by_class[k], target[k], rng);
    keep.insert(keep.end(), chosen.begin(), chosen.end());
  }
  std::sort(keep.begin(), keep.end());
  return {ds.train.Select(keep), ds.test, ds.class_names};
}

}  // namespace detail

// Randomly removes train samples until every class has exactly c.
inline ImageDataset ReduceClassSize(const ImageDataset& ds, std::size_t c,
                                    std::uint64_t seed = kDefaultSeed) {
  ds.Validate();
  Require(c >= 1, ErrorCode::kInput, "class size must be >= 1");
  const ClassHistogram hist = Histogram(ds.train, ds.num_classes());
  for (std::size_t k = 0; k < hist.size(); ++k)
    Require(hist[k] >= c, ErrorCode::kInput,
            "class '" + ds.class_names[k] + "' has " + std::to_string(hist[k]) +
                " samples, fewer than " + std::to_string(c));
  Rng rng = Rng::Derive(seed, "reduce_class_size", static_cast<std::uint64_t>(c));
  return detail::KeepTrainCounts(ds, std::vector<std::size_t>(hist.size(), c), rng);
}

// Keeps the first n labels of the alphanumerically sorted class names and
// re-indexes them densely in that order.
inline ImageDataset ReduceClassCount(const ImageDataset& ds, std::size_t n) {
  ds.Validate();
  const std::size_t count = ds.num_classes();
  Require(n >= 3 && n <= count, ErrorCode::kInput,
          "class count must be in [3, " + std::to_string(count) + "], got " +
              std::to_string(n));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ds.class_names[a] < ds.class_names[b];
  });
  std::vector<std::int64_t> remap(count, -1);
  ImageDataset out;
  for (std::size_t r = 0; r < n; ++r) {
    remap[order[r]] = static_cast<std::int64_t>(r);
    out.class_names.push_back(ds.class_names[order[r]]);
  }
  auto filter = [&](const ImageSplit& s) {
    ImageSplit kept{s.height, s.width, s.channels, {}, {}};
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::int64_t y = remap[s.labels[i]];
      if (y >= 0) kept.Append(s.Image(i), static_cast<std::uint32_t>(y));
    }
    return kept;
  };
  out.train = filter(ds.train);
  out.test = filter(ds.test);
  return out;
}

// Target train sizes for linear imbalance. Classes are ranked by current
// size (ties by class id); rank k of K gets
//   round(S_min (1 - i) + k (S_max - S_min (1 - i)) / (K - 1)),
// capped at the class's current size. Equal neighbours are broken by
// decrementing the lower-ranked class so that all sizes differ for i > 0.
inline std::vector<std::size_t> LinearImbalanceSizes(const ClassHistogram& hist,
                                                     double factor) {
  const std::size_t k_count = hist.size();
  Require(k_count >= 2, ErrorCode::kInput, "imbalance needs at least 2 classes");
  Require(factor >= 0.0 && factor <= 1.0, ErrorCode::kInput,
          "imbalance factor must be in [0, 1]");
  std::vector<std::size_t> rank(k_count);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(),
                   [&](std::size_t a, std::size_t b) { return hist[a] < hist[b]; });
  const double smallest = static_cast<double>(hist[rank.front()]) * (1.0 - factor);
  const double largest = static_cast<double>(hist[rank.back()]);
  const double step = (largest - smallest) / static_cast<double>(k_count - 1);
  std::vector<std::int64_t> by_rank(k_count);
  for (std::size_t r = 0; r < k_count; ++r) {
    const auto v = static_cast<std::int64_t>(std::llround(smallest + r * step));
    by_rank[r] = std::min<std::int64_t>(v, static_cast<std::int64_t>(hist[rank[r]]));
  }
  if (factor > 0.0) {
    for (std::size_t r = k_count - 1; r-- > 0;)
      if (by_rank[r] >= by_rank[r + 1]) by_rank[r] = by_rank[r + 1] - 1;
  }
  std::vector<std::size_t> sizes(k_count);
  for (std::size_t r = 0; r < k_count; ++r) {
    Require(by_rank[r] >= 0, ErrorCode::kInput,
            "classes too small for the requested imbalance");
    sizes[rank[r]] = static_cast<std::size_t>(by_rank[r]);
  }
  return sizes;
}

inline ImageDataset ImbalanceLinear(const ImageDataset& ds, double factor,
                                    std::uint64_t seed = kDefaultSeed) {
  ds.Validate();
  const auto sizes = LinearImbalanceSizes(Histogram(ds.train, ds.num_classes()), factor);
  Rng rng = Rng::Derive(seed, "imbalance_linear", factor);
  return detail::KeepTrainCounts(ds, sizes, rng);
}

inline constexpr double kNormalFactorMin = 0.05;
inline constexpr double kNormalFactorMax = 1.0;

// Draws Normal(1 - i, i^2) clipped to [0.05, 1].
inline double SampleNormalImbalanceFactor(double factor, Rng& rng) {
  const double f = rng.Normal(1.0 - factor, factor);
  return std::clamp(f, kNormalFactorMin, kNormalFactorMax);
}

inline std::vector<std::size_t> NormalImbalanceSizes(const ClassHistogram& hist,
                                                     double factor, Rng& rng) {
  Require(hist.size() >= 2, ErrorCode::kInput, "imbalance needs at least 2 classes");
  Require(factor >= 0.0 && factor <= 1.0, ErrorCode::kInput,
          "imbalance factor must be in [0, 1]");
  std::vector<std::size_t> sizes(hist.size());
  for (std::size_t k = 0; k < hist.size(); ++k) {
    const double f = SampleNormalImbalanceFactor(factor, rng);
    sizes[k] = std::min<std::size_t>(
        hist[k], static_cast<std::size_t>(std::llround(f * static_cast<double>(hist[k]))));
  }
  return sizes;
}

inline ImageDataset ImbalanceNormal(const ImageDataset& ds, double factor,
                                    std::uint64_t seed = kDefaultSeed) {
  ds.Validate();
  Rng rng = Rng::Derive(seed, "imbalance_normal", factor);
  const auto sizes = NormalImbalanceSizes(Histogram(ds.train, ds.num_classes()), factor, rng);
  return detail::KeepTrainCounts(ds, sizes, rng);
}

// ---------------------------------------------------------------------------
// Synthetic class-conditional images for tests and desk-scale experiments.
//
// Class k draws a Gaussian blob whose center sits on a ring at angle
// 2 pi k / K and whose color is a class-specific hue. Each sample jitters
// the blob's position, width and brightness and adds i.i.d. pixel noise;
// a fraction of training labels can be replaced by random classes.
struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  double ring_radius = 8.0;  // pixels from the image center
  double blob_sigma = 4.0;   // pixels
  double jitter = 2.0;       // pixels, uniform
  double noise_stddev = 40.0;  // gray levels
  double label_noise = 0.0;  // fraction of train labels randomized

  void Validate() const {
    Require(num_classes >= 2, ErrorCode::kInput, "synthetic data needs >= 2 classes");
    Require(channels == 1 || channels == 3, ErrorCode::kInput,
            "synthetic images must have 1 or 3 channels");
    Require(height >= 4 && width >= 4, ErrorCode::kInput, "synthetic images too small");
    Require(label_noise >= 0.0 && label_noise <= 1.0, ErrorCode::kInput,
            "label noise must be in [0, 1]");
  }
};

inline ImageDataset SynthGenerate(const SynthSpec& spec,
                                  std::uint64_t seed = kDefaultSeed) {
  spec.Validate();
  ImageDataset ds;
  for (std::size_t k = 0; k < spec.num_classes; ++k)
    ds.class_names.push_back("class_" + std::to_string(k));
  Rng rng = Rng::Derive(seed, "synth_generate");
  const std::size_t h = spec.height, w = spec.width, c = spec.channels;
  std::vector<std::uint8_t> image(h * w * c);

  auto render = [&](std::size_t k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(spec.num_classes);
    const double cy = 0.5 * (h - 1) + spec.ring_radius * std::sin(angle) +
                      spec.jitter * (2.0 * rng.Uniform() - 1.0);
    const double cx = 0.5 * (w - 1) + spec.ring_radius * std::cos(angle) +
                      spec.jitter * (2.0 * rng.Uniform() - 1.0);
    const double sigma = spec.blob_sigma * (0.75 + 0.5 * rng.Uniform());
    const double brightness = 150.0 + 100.0 * rng.Uniform();
    // Hue on the color wheel; grayscale images use the mean intensity.
    double color[3];
    for (int ch = 0; ch < 3; ++ch)
      color[ch] = 0.5 + 0.5 * std::cos(angle - 2.0 * std::numbers::pi * ch / 3.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = y - cy, dx = x - cx;
        const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double tint = c == 1 ? 1.0 : color[ch];
          const double v = 40.0 + brightness * tint * blob +
                           spec.noise_stddev * rng.Normal();
          image[(y * w + x) * c + ch] =
              static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
        }
      }
  };

  for (ImageSplit* split : {&ds.train, &ds.test}) {
    split->height = h;
    split->width = w;
    split->channels = c;
    const bool is_train = split == &ds.train;
    const std::size_t per = is_train ? spec.train_per_class : spec.test_per_class;
    for (std::size_t k = 0; k < spec.num_classes; ++k)
      for (std::size_t i = 0; i < per; ++i) {
        render(k);
        auto label = static_cast<std::uint32_t>(k);
        if (is_train && spec.label_noise > 0.0 && rng.Bernoulli(spec.label_noise))
          label = static_cast<std::uint32_t>(rng.UniformInt(spec.num_classes));
        split->Append(image, label);
      }
  }
  return ds;
}

}  // namespace ppml_audit::data

#endif  // PPML_AUDIT_DATASET_HPP_
