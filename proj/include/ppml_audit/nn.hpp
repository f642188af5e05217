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

// Convolutional classifier with exact per-example gradients.
//
// Architecture: [random horizontal flip] -> 3 x (conv same-padding -> group
// norm -> ReLU -> 2x2 max pool) -> dense hidden -> ReLU -> dense logits ->
// softmax. All activations are stored channels-last (H, W, C).

#ifndef PPML_AUDIT_NN_HPP_
#define PPML_AUDIT_NN_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppml_audit/error.hpp"
#include "ppml_audit/random.hpp"
#include "ppml_audit/tensor.hpp"

namespace ppml_audit::nn {

inline constexpr std::size_t kNumConvBlocks = 3;
inline constexpr double kGroupNormEpsilon = 1e-5;

struct ModelConfig {
  std::array<std::size_t, kNumConvBlocks> conv_channels{32, 64, 128};
  std::size_t kernel_size = 3;
  std::size_t groupnorm_groups = 8;
  std::size_t hidden_units = 128;
  std::size_t num_classes = 10;
  // Height, width, channels.
  std::array<std::size_t, 3> input_shape{32, 32, 3};

  void Validate() const {
    Require(num_classes >= 2, ErrorCode::kConfig, "num_classes must be >= 2");
    Require(kernel_size >= 1 && kernel_size % 2 == 1, ErrorCode::kConfig,
            "kernel_size must be odd and positive");
    Require(groupnorm_groups >= 1, ErrorCode::kConfig,
            "groupnorm_groups must be >= 1");
    Require(hidden_units >= 1, ErrorCode::kConfig, "hidden_units must be >= 1");
    for (std::size_t c : conv_channels) {
      Require(c >= 1, ErrorCode::kConfig, "conv channels must be >= 1");
      Require(c % groupnorm_groups == 0, ErrorCode::kConfig,
              std::to_string(groupnorm_groups) + " groups do not divide " +
                  std::to_string(c) + " channels");
    }
    const std::size_t factor = std::size_t{1} << kNumConvBlocks;
    Require(input_shape[0] % factor == 0 && input_shape[1] % factor == 0 &&
                input_shape[0] > 0 && input_shape[1] > 0,
            ErrorCode::kConfig, "input height/width must be multiples of 8");
    Require(input_shape[2] >= 1, ErrorCode::kConfig, "input needs >= 1 channel");
  }

  std::size_t InputSize() const {
    return input_shape[0] * input_shape[1] * input_shape[2];
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Position of one learnable tensor inside the flat parameter vector.
struct ParamEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size() const { return NumElements(shape); }
};

// Parameter tensors in forward order. For block b (1-based):
//   conv{b}/kernel (k, k, Cin, Cout), conv{b}/bias (Cout),
//   norm{b}/gamma (Cout), norm{b}/beta (Cout)
// followed by dense1/kernel, dense1/bias, dense2/kernel, dense2/bias.
class ParamLayout {
 public:
  static constexpr std::size_t kEntriesPerBlock = 4;

  explicit ParamLayout(const ModelConfig& config) {
    config.Validate();
    const std::size_t k = config.kernel_size;
    std::size_t in_ch = config.input_shape[2];
    for (std::size_t b = 0; b < kNumConvBlocks; ++b) {
      const std::size_t out_ch = config.conv_channels[b];
      const std::string id = std::to_string(b + 1);
      Add("conv" + id + "/kernel", {k, k, in_ch, out_ch});
      Add("conv" + id + "/bias", {out_ch});
      Add("norm" + id + "/gamma", {out_ch});
      Add("norm" + id + "/beta", {out_ch});
      in_ch = out_ch;
    }
    const std::size_t pooled_h = config.input_shape[0] >> kNumConvBlocks;
    const std::size_t pooled_w = config.input_shape[1] >> kNumConvBlocks;
    flat_features_ = pooled_h * pooled_w * in_ch;
    Add("dense1/kernel", {flat_features_, config.hidden_units});
    Add("dense1/bias", {config.hidden_units});
    Add("dense2/kernel", {config.hidden_units, config.num_classes});
    Add("dense2/bias", {config.num_classes});
  }

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry& entry(std::size_t i) const { return entries_.at(i); }
  std::size_t total_size() const { return total_; }
  std::size_t flat_features() const { return flat_features_; }

  std::size_t ConvKernel(std::size_t block) const { return block * kEntriesPerBlock; }
  std::size_t ConvBias(std::size_t block) const { return block * kEntriesPerBlock + 1; }
  std::size_t NormGamma(std::size_t block) const { return block * kEntriesPerBlock + 2; }
  std::size_t NormBeta(std::size_t block) const { return block * kEntriesPerBlock + 3; }
  std::size_t Dense1Kernel() const { return kNumConvBlocks * kEntriesPerBlock; }
  std::size_t Dense1Bias() const { return Dense1Kernel() + 1; }
  std::size_t Dense2Kernel() const { return Dense1Kernel() + 2; }
  std::size_t Dense2Bias() const { return Dense1Kernel() + 3; }

  // Which entry a flat coordinate belongs to.
  std::size_t EntryOf(std::size_t flat_index) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (flat_index < entries_[i].offset + entries_[i].size()) return i;
    }
    throw Error(ErrorCode::kInput, "parameter index out of range");
  }

 private:
  void Add(std::string name, Shape shape) {
    ParamEntry e{std::move(name), std::move(shape), total_};
    total_ += e.size();
    entries_.push_back(std::move(e));
  }

  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
  std::size_t flat_features_ = 0;
};

// Model-ready images (N, H, W, C) in [0, 1] with their class ids.
struct LabeledImages {
  Tensor images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

// Parameters and gradients share the same flat layout.
using Gradient = std::vector<double>;

struct ModelParams {
  ModelConfig config;
  std::vector<double> values;

  ParamLayout layout() const { return ParamLayout(config); }

  std::span<const double> Slice(const ParamEntry& e) const {
    return std::span<const double>(values).subspan(e.offset, e.size());
  }
  std::span<double> Slice(const ParamEntry& e) {
    return std::span<double>(values).subspan(e.offset, e.size());
  }
  // Tensor copy of the i-th parameter (forward order).
  Tensor TensorAt(std::size_t i) const {
    const ParamLayout l = layout();
    const ParamEntry& e = l.entry(i);
    auto s = Slice(e);
    return Tensor(e.shape, std::vector<double>(s.begin(), s.end()));
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// He-style uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)) for kernels,
// zeros for biases and shifts, ones for group-norm scales.
inline ModelParams InitParams(const ModelConfig& config, std::uint64_t seed) {
  const ParamLayout layout(config);
  ModelParams params{config, std::vector<double>(layout.total_size(), 0.0)};
  Rng rng = Rng::Derive(seed, "init_params");
  for (const ParamEntry& e : layout.entries()) {
    auto slice = params.Slice(e);
    if (e.name.ends_with("/kernel")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 0; d + 1 < e.shape.size(); ++d) fan_in *= e.shape[d];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : slice) v = (2.0 * rng.Uniform() - 1.0) * bound;
    } else if (e.name.ends_with("/gamma")) {
      std::fill(slice.begin(), slice.end(), 1.0);
    }
  }
  return params;
}

namespace layers {

// Mirror an (H, W, C) image along its vertical axis.
inline void FlipHorizontal(std::span<const double> in, std::size_t h,
                           std::size_t w, std::size_t c, std::span<double> out) {
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      std::copy_n(&in[(y * w + x) * c], c, &out[(y * w + (w - 1 - x)) * c]);
}

// Stride-1 convolution with zero "same" padding. kernel is (k, k, Cin, Cout).
inline void Conv2dSame(std::span<const double> in, std::size_t h, std::size_t w,
                       std::size_t cin, std::span<const double> kernel,
                       std::span<const double> bias, std::size_t k,
                       std::size_t cout, std::span<double> out) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double* o = &out[static_cast<std::size_t>(y * W + x) * cout];
      std::copy_n(bias.data(), cout, o);
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pad;
        if (iy < 0 || iy >= H) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = x + static_cast<std::ptrdiff_t>(kx) - pad;
          if (ix < 0 || ix >= W) continue;
          const double* src = &in[static_cast<std::size_t>(iy * W + ix) * cin];
          const double* wk = &kernel[(ky * k + kx) * cin * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = src[ci];
            if (v == 0.0) continue;
            const double* wrow = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += v * wrow[co];
          }
        }
      }
    }
  }
}

// Accumulates kernel/bias gradients; writes the input gradient when
// grad_in is non-empty.
inline void Conv2dSameBackward(std::span<const double> in, std::size_t h,
                               std::size_t w, std::size_t cin,
                               std::span<const double> kernel, std::size_t k,
                               std::size_t cout, std::span<const double> grad_out,
                               std::span<double> grad_kernel,
                               std::span<double> grad_bias,
                               std::span<double> grad_in) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);
  const bool want_input = !grad_in.empty();
  if (want_input) std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      const double* g = &grad_out[static_cast<std::size_t>(y * W + x) * cout];
      for (std::size_t co = 0; co < cout; ++co) grad_bias[co] += g[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pad;
        if (iy < 0 || iy >= H) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = x + static_cast<std::ptrdiff_t>(kx) - pad;
          if (ix < 0 || ix >= W) continue;
          const std::size_t pix = static_cast<std::size_t>(iy * W + ix) * cin;
          const double* src = &in[pix];
          const std::size_t woff = (ky * k + kx) * cin * cout;
          const double* wk = &kernel[woff];
          double* gk = &grad_kernel[woff];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = src[ci];
            const double* wrow = wk + ci * cout;
            double* grow = gk + ci * cout;
            if (want_input) {
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) {
                grow[co] += v * g[co];
                acc += wrow[co] * g[co];
              }
              grad_in[pix + ci] += acc;
            } else if (v != 0.0) {
              for (std::size_t co = 0; co < cout; ++co) grow[co] += v * g[co];
            }
          }
        }
      }
    }
  }
}

// Normalizes (pixels, C) activations over each group of C/groups channels.
// Writes the normalized values (before scale/shift) and each group's
// 1/sqrt(var + eps).
inline void GroupNormalize(std::span<const double> in, std::size_t pixels,
                           std::size_t channels, std::size_t groups,
                           std::span<double> normalized,
                           std::span<double> inv_std) {
  const std::size_t per = channels / groups;
  const double count = static_cast<double>(pixels * per);
  for (std::size_t g = 0; g < groups; ++g) {
    double mean = 0.0;
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = g * per; c < (g + 1) * per; ++c) mean += in[p * channels + c];
    mean /= count;
    double var = 0.0;
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
        const double d = in[p * channels + c] - mean;
        var += d * d;
      }
    var /= count;
    const double is = 1.0 / std::sqrt(var + kGroupNormEpsilon);
    inv_std[g] = is;
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        normalized[p * channels + c] = (in[p * channels + c] - mean) * is;
  }
}

// Given dL/d(normalized), writes dL/d(input) for one sample.
inline void GroupNormalizeBackward(std::span<const double> normalized,
                                   std::span<const double> inv_std,
                                   std::span<const double> grad_normalized,
                                   std::size_t pixels, std::size_t channels,
                                   std::size_t groups, std::span<double> grad_in) {
  const std::size_t per = channels / groups;
  const double count = static_cast<double>(pixels * per);
  for (std::size_t g = 0; g < groups; ++g) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
        const std::size_t i = p * channels + c;
        sum_g += grad_normalized[i];
        sum_gx += grad_normalized[i] * normalized[i];
      }
    const double mean_g = sum_g / count;
    const double mean_gx = sum_gx / count;
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
        const std::size_t i = p * channels + c;
        grad_in[i] = inv_std[g] *
                     (grad_normalized[i] - mean_g - normalized[i] * mean_gx);
      }
  }
}

// 2x2 stride-2 max pool; argmax holds the flat input index of each output.
inline void MaxPool2x2(std::span<const double> in, std::size_t h, std::size_t w,
                       std::size_t c, std::span<double> out,
                       std::span<std::uint32_t> argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * y) * w + 2 * x) * c + ch;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (y * ow + x) * c + ch;
        out[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
}

// Numerically stable softmax; returns log-sum-exp.
inline double Softmax(std::span<const double> logits, std::span<double> probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return mx + std::log(sum);
}

}  // namespace layers

// Activations retained for one example between forward and backward.
struct ExampleCache {
  std::vector<double> input;  // after the optional flip
  bool flipped = false;
  std::array<std::vector<double>, kNumConvBlocks> normalized;
  std::array<std::vector<double>, kNumConvBlocks> inv_std;
  std::array<std::vector<double>, kNumConvBlocks> activated;  // after scale/shift
  std::array<std::vector<std::uint32_t>, kNumConvBlocks> argmax;
  std::array<std::vector<double>, kNumConvBlocks> pooled;
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> probs;
  double log_normalizer = 0.0;
};

using ForwardCache = std::vector<ExampleCache>;

// Scratch buffers for backward, reused across examples.
struct BackwardScratch {
  std::vector<double> a, b, c;
};

namespace detail {

inline void CheckImage(const ModelConfig& config, std::size_t size) {
  Require(size == config.InputSize(), ErrorCode::kShape,
          "example has " + std::to_string(size) + " values, model expects " +
              std::to_string(config.InputSize()));
}

}  // namespace detail

// Forward pass for one (H, W, C) example.
inline void ForwardExample(const ModelParams& params, const ParamLayout& layout,
                           std::span<const double> image, bool flip,
                           ExampleCache& cache) {
  const ModelConfig& cfg = params.config;
  detail::CheckImage(cfg, image.size());
  std::size_t h = cfg.input_shape[0], w = cfg.input_shape[1];
  std::size_t cin = cfg.input_shape[2];
  cache.input.resize(image.size());
  cache.flipped = flip;
  if (flip) {
    layers::FlipHorizontal(image, h, w, cin, cache.input);
  } else {
    std::copy(image.begin(), image.end(), cache.input.begin());
  }
  const std::size_t groups = cfg.groupnorm_groups;
  std::vector<double> conv_out;
  std::span<const double> current = cache.input;
  for (std::size_t b = 0; b < kNumConvBlocks; ++b) {
    const std::size_t cout = cfg.conv_channels[b];
    const std::size_t pixels = h * w;
    conv_out.assign(pixels * cout, 0.0);
    layers::Conv2dSame(current, h, w, cin,
                       params.Slice(layout.entry(layout.ConvKernel(b))),
                       params.Slice(layout.entry(layout.ConvBias(b))),
                       cfg.kernel_size, cout, conv_out);
    cache.normalized[b].resize(pixels * cout);
    cache.inv_std[b].resize(groups);
    layers::GroupNormalize(conv_out, pixels, cout, groups, cache.normalized[b],
                           cache.inv_std[b]);
    auto gamma = params.Slice(layout.entry(layout.NormGamma(b)));
    auto beta = params.Slice(layout.entry(layout.NormBeta(b)));
    auto& act = cache.activated[b];
    act.resize(pixels * cout);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = 0; c < cout; ++c) {
        const double v = gamma[c] * cache.normalized[b][p * cout + c] + beta[c];
        act[p * cout + c] = v;
        conv_out[p * cout + c] = v > 0.0 ? v : 0.0;  // reuse as ReLU output
      }
    cache.pooled[b].resize((h / 2) * (w / 2) * cout);
    cache.argmax[b].resize(cache.pooled[b].size());
    layers::MaxPool2x2(conv_out, h, w, cout, cache.pooled[b], cache.argmax[b]);
    current = cache.pooled[b];
    h /= 2;
    w /= 2;
    cin = cout;
  }
  const std::size_t features = layout.flat_features();
  const std::size_t hidden = cfg.hidden_units;
  const std::size_t classes = cfg.num_classes;
  auto w1 = params.Slice(layout.entry(layout.Dense1Kernel()));
  auto b1 = params.Slice(layout.entry(layout.Dense1Bias()));
  cache.hidden_pre.assign(b1.begin(), b1.end());
  for (std::size_t i = 0; i < features; ++i) {
    const double v = current[i];
    if (v == 0.0) continue;
    const double* row = &w1[i * hidden];
    for (std::size_t j = 0; j < hidden; ++j) cache.hidden_pre[j] += v * row[j];
  }
  cache.hidden.resize(hidden);
  for (std::size_t j = 0; j < hidden; ++j)
    cache.hidden[j] = cache.hidden_pre[j] > 0.0 ? cache.hidden_pre[j] : 0.0;
  auto w2 = params.Slice(layout.entry(layout.Dense2Kernel()));
  auto b2 = params.Slice(layout.entry(layout.Dense2Bias()));
  cache.logits.assign(b2.begin(), b2.end());
  for (std::size_t j = 0; j < hidden; ++j) {
    const double v = cache.hidden[j];
    if (v == 0.0) continue;
    const double* row = &w2[j * classes];
    for (std::size_t k = 0; k < classes; ++k) cache.logits[k] += v * row[k];
  }
  cache.probs.resize(classes);
  cache.log_normalizer = layers::Softmax(cache.logits, cache.probs);
}

// Cross-entropy loss of a cached forward pass.
inline double CrossEntropy(const ExampleCache& cache, std::size_t label) {
  return cache.log_normalizer - cache.logits[label];
}

// Backward pass for one example; writes the full gradient (overwriting grad).
inline void BackwardExample(const ModelParams& params, const ParamLayout& layout,
                            const ExampleCache& cache, std::size_t label,
                            std::span<double> grad, BackwardScratch& scratch) {
  const ModelConfig& cfg = params.config;
  std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t features = layout.flat_features();
  const std::size_t hidden = cfg.hidden_units;
  const std::size_t classes = cfg.num_classes;

  std::vector<double>& dlogits = scratch.a;
  dlogits.assign(cache.probs.begin(), cache.probs.end());
  dlogits[label] -= 1.0;

  const ParamEntry& e_w2 = layout.entry(layout.Dense2Kernel());
  const ParamEntry& e_b2 = layout.entry(layout.Dense2Bias());
  auto w2 = params.Slice(e_w2);
  std::vector<double>& dhidden = scratch.b;
  dhidden.assign(hidden, 0.0);
  for (std::size_t j = 0; j < hidden; ++j) {
    const double hv = cache.hidden[j];
    const double* row = &w2[j * classes];
    double* grow = &grad[e_w2.offset + j * classes];
    double acc = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      grow[k] = hv * dlogits[k];
      acc += row[k] * dlogits[k];
    }
    dhidden[j] = cache.hidden_pre[j] > 0.0 ? acc : 0.0;
  }
  for (std::size_t k = 0; k < classes; ++k) grad[e_b2.offset + k] = dlogits[k];

  const ParamEntry& e_w1 = layout.entry(layout.Dense1Kernel());
  const ParamEntry& e_b1 = layout.entry(layout.Dense1Bias());
  auto w1 = params.Slice(e_w1);
  const std::vector<double>& flat = cache.pooled[kNumConvBlocks - 1];
  std::vector<double>& dflat = scratch.c;
  dflat.assign(features, 0.0);
  for (std::size_t i = 0; i < features; ++i) {
    const double v = flat[i];
    const double* row = &w1[i * hidden];
    double* grow = &grad[e_w1.offset + i * hidden];
    double acc = 0.0;
    for (std::size_t j = 0; j < hidden; ++j) {
      grow[j] = v * dhidden[j];
      acc += row[j] * dhidden[j];
    }
    dflat[i] = acc;
  }
  for (std::size_t j = 0; j < hidden; ++j) grad[e_b1.offset + j] = dhidden[j];

  // dflat holds the gradient w.r.t. the last pooled output.
  std::vector<double> dpooled = std::move(dflat);
  std::vector<double> dact, dnorm, dconv;
  for (std::size_t bb = kNumConvBlocks; bb-- > 0;) {
    const std::size_t cout = cfg.conv_channels[bb];
    const std::size_t h = cfg.input_shape[0] >> bb;
    const std::size_t w = cfg.input_shape[1] >> bb;
    const std::size_t pixels = h * w;
    const std::size_t cin = bb == 0 ? cfg.input_shape[2] : cfg.conv_channels[bb - 1];
    // Max pool and ReLU.
    dact.assign(pixels * cout, 0.0);
    for (std::size_t o = 0; o < dpooled.size(); ++o) {
      const std::uint32_t src = cache.argmax[bb][o];
      if (cache.activated[bb][src] > 0.0) dact[src] += dpooled[o];
    }
    // Scale/shift.
    const ParamEntry& e_gamma = layout.entry(layout.NormGamma(bb));
    const ParamEntry& e_beta = layout.entry(layout.NormBeta(bb));
    auto gamma = params.Slice(e_gamma);
    dnorm.resize(pixels * cout);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = 0; c < cout; ++c) {
        const std::size_t i = p * cout + c;
        grad[e_gamma.offset + c] += dact[i] * cache.normalized[bb][i];
        grad[e_beta.offset + c] += dact[i];
        dnorm[i] = dact[i] * gamma[c];
      }
    dconv.resize(pixels * cout);
    layers::GroupNormalizeBackward(cache.normalized[bb], cache.inv_std[bb], dnorm,
                                   pixels, cout, cfg.groupnorm_groups, dconv);
    const ParamEntry& e_k = layout.entry(layout.ConvKernel(bb));
    const ParamEntry& e_b = layout.entry(layout.ConvBias(bb));
    std::span<const double> conv_in =
        bb == 0 ? std::span<const double>(cache.input)
                : std::span<const double>(cache.pooled[bb - 1]);
    std::vector<double> dinput;
    if (bb > 0) dinput.resize(conv_in.size());
    layers::Conv2dSameBackward(
        conv_in, h, w, cin, params.Slice(e_k), cfg.kernel_size, cout, dconv,
        grad.subspan(e_k.offset, e_k.size()), grad.subspan(e_b.offset, e_b.size()),
        dinput);
    dpooled = std::move(dinput);
  }
}

struct ForwardResult {
  Tensor probabilities;  // (B, num_classes)
  ForwardCache cache;
};

namespace detail {

inline std::size_t CheckBatch(const ModelConfig& cfg, const Tensor& batch) {
  Require(batch.rank() == 4 && batch.dim(1) == cfg.input_shape[0] &&
              batch.dim(2) == cfg.input_shape[1] &&
              batch.dim(3) == cfg.input_shape[2],
          ErrorCode::kShape,
          "batch shape " + ShapeToString(batch.shape()) + " does not match (B," +
              std::to_string(cfg.input_shape[0]) + "," +
              std::to_string(cfg.input_shape[1]) + "," +
              std::to_string(cfg.input_shape[2]) + ")");
  return batch.dim(0);
}

}  // namespace detail

// Batched forward. In train mode each image is flipped horizontally with
// probability 1/2, drawing from rng; rng may be null when train_mode is off.
inline ForwardResult Forward(const ModelParams& params, const Tensor& batch,
                             bool train_mode, Rng* rng) {
  const std::size_t n = detail::CheckBatch(params.config, batch);
  Require(!train_mode || rng != nullptr, ErrorCode::kInput,
          "train mode requires a random stream");
  const ParamLayout layout = params.layout();
  const std::size_t classes = params.config.num_classes;
  ForwardResult result{Tensor({n, classes}), ForwardCache(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const bool flip = train_mode && rng->Bernoulli(0.5);
    ForwardExample(params, layout, batch.Row(i), flip, result.cache[i]);
    std::copy(result.cache[i].probs.begin(), result.cache[i].probs.end(),
              result.probabilities.Row(i).begin());
  }
  return result;
}

// Eval-mode class probabilities without retaining a cache.
inline Tensor Predict(const ModelParams& params, const Tensor& batch) {
  const std::size_t n = detail::CheckBatch(params.config, batch);
  const ParamLayout layout = params.layout();
  Tensor probs({n, params.config.num_classes});
  ExampleCache cache;
  for (std::size_t i = 0; i < n; ++i) {
    ForwardExample(params, layout, batch.Row(i), false, cache);
    std::copy(cache.probs.begin(), cache.probs.end(), probs.Row(i).begin());
  }
  return probs;
}

struct PerExampleGradients {
  std::vector<double> losses;
  std::vector<Gradient> grads;
};

namespace detail {

inline void CheckLabels(const ModelConfig& cfg, std::span<const std::size_t> labels,
                        std::size_t n) {
  Require(labels.size() == n, ErrorCode::kInput,
          "got " + std::to_string(labels.size()) + " labels for " +
              std::to_string(n) + " examples");
  for (std::size_t y : labels)
    Require(y < cfg.num_classes, ErrorCode::kInput,
            "label " + std::to_string(y) + " out of range [0, " +
                std::to_string(cfg.num_classes) + ")");
}

}  // namespace detail

// Softmax cross-entropy and its gradient for every example of the batch
// (no augmentation).
inline PerExampleGradients LossAndPerExampleGradients(
    const ModelParams& params, const Tensor& batch,
    std::span<const std::size_t> labels) {
  const std::size_t n = detail::CheckBatch(params.config, batch);
  detail::CheckLabels(params.config, labels, n);
  const ParamLayout layout = params.layout();
  PerExampleGradients out;
  out.losses.resize(n);
  out.grads.assign(n, Gradient(layout.total_size()));
  ExampleCache cache;
  BackwardScratch scratch;
  for (std::size_t i = 0; i < n; ++i) {
    ForwardExample(params, layout, batch.Row(i), false, cache);
    out.losses[i] = CrossEntropy(cache, labels[i]);
    BackwardExample(params, layout, cache, labels[i], out.grads[i], scratch);
  }
  return out;
}

// Gradient of the mean loss over the batch.
inline Gradient BatchGradient(const ModelParams& params, const Tensor& batch,
                              std::span<const std::size_t> labels) {
  PerExampleGradients per = LossAndPerExampleGradients(params, batch, labels);
  Gradient total(params.values.size(), 0.0);
  for (const Gradient& g : per.grads)
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += g[i];
  for (double& v : total) v /= static_cast<double>(per.grads.size());
  return total;
}

// (f(theta + h e_i) - f(theta - h e_i)) / 2h for an arbitrary scalar loss.
template <typename LossFn>
double CentralDifference(LossFn&& loss, std::vector<double> theta,
                         std::size_t index, double h) {
  Require(h > 0.0 && std::isfinite(h), ErrorCode::kInput, "step h must be > 0");
  Require(index < theta.size(), ErrorCode::kInput,
          "coordinate " + std::to_string(index) + " out of range");
  const double original = theta[index];
  theta[index] = original + h;
  const double plus = loss(std::as_const(theta));
  theta[index] = original - h;
  const double minus = loss(std::as_const(theta));
  return (plus - minus) / (2.0 * h);
}

// Central-difference derivative of one example's loss w.r.t. one parameter.
inline double FiniteDifferenceGradient(const ModelParams& params,
                                       std::span<const double> example,
                                       std::size_t label, std::size_t param_index,
                                       double h) {
  detail::CheckImage(params.config, example.size());
  Require(label < params.config.num_classes, ErrorCode::kInput,
          "label out of range");
  const ParamLayout layout = params.layout();
  ModelParams probe = params;
  ExampleCache cache;
  auto loss = [&](const std::vector<double>& theta) {
    probe.values = theta;
    ForwardExample(probe, layout, example, false, cache);
    return CrossEntropy(cache, label);
  };
  return CentralDifference(loss, params.values, param_index, h);
}

}  // namespace ppml_audit::nn

#endif  // PPML_AUDIT_NN_HPP_
