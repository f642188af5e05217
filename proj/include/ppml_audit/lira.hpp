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

// Offline likelihood-ratio membership inference: shadow models trained on
// random halves of the data, per-sample Gaussians fitted to the confidences
// of models that did not train on the sample, and a one-sided test of the
// target model's confidence against them.

#ifndef PPML_AUDIT_LIRA_HPP_
#define PPML_AUDIT_LIRA_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ppml_audit/dp_train.hpp"
#include "ppml_audit/error.hpp"
#include "ppml_audit/nn.hpp"
#include "ppml_audit/parallel.hpp"
#include "ppml_audit/random.hpp"

namespace ppml_audit::lira {

inline constexpr double kConfidenceClamp = 1e-7;
inline constexpr double kStdFloor = 1e-3;

using Mask = std::vector<std::uint8_t>;  // 1 = sample used for training

// Each model's mask selects floor(size / 2) samples uniformly without
// replacement.
inline std::vector<Mask> SampleMembershipMasks(std::size_t num_models, std::size_t size,
                                               Rng& rng) {
  Require(num_models >= 2, ErrorCode::kInput, "need at least 2 shadow models");
  Require(size >= 2, ErrorCode::kInput, "need at least 2 samples");
  std::vector<Mask> masks(num_models, Mask(size, 0));
  std::vector<std::size_t> pool(size);
  for (Mask& mask : masks) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < size / 2; ++i) {
      const std::size_t j = i + rng.UniformInt(size - i);
      std::swap(pool[i], pool[j]);
      mask[pool[i]] = 1;
    }
  }
  return masks;
}

// log(p / (1 - p)) with p clamped to [1e-7, 1 - 1e-7].
inline double LogitScale(double p) {
  p = std::clamp(p, kConfidenceClamp, 1.0 - kConfidenceClamp);
  return std::log(p) - std::log1p(-p);
}

// Logit-scaled true-class confidence of a model on every sample (no
// augmentation at query time).
inline std::vector<double> ScaledConfidences(const nn::ModelParams& model,
                                             const nn::LabeledImages& data) {
  const Tensor probs = nn::Predict(model, data.images);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = LogitScale(probs.Row(i)[data.labels[i]]);
  return out;
}

struct ShadowEnsemble {
  std::vector<nn::ModelParams> models;
  std::vector<Mask> membership;               // models x samples
  std::vector<std::vector<double>> confidences;  // logit-scaled, models x samples
  std::uint64_t base_seed = 0;

  std::size_t size() const { return models.size(); }
  std::size_t num_samples() const {
    return membership.empty() ? 0 : membership.front().size();
  }
};

inline ShadowEnsemble MakeEnsemble(std::vector<nn::ModelParams> models,
                                   std::vector<Mask> membership,
                                   const nn::LabeledImages& data,
                                   std::size_t workers = 1) {
  Require(models.size() == membership.size(), ErrorCode::kInput,
          "one membership mask per model required");
  for (const Mask& m : membership)
    Require(m.size() == data.size(), ErrorCode::kInput, "mask length != dataset size");
  ShadowEnsemble e{std::move(models), std::move(membership), {}, 0};
  e.confidences.resize(e.models.size());
  ParallelFor(e.models.size(), workers, [&](std::size_t m) {
    e.confidences[m] = ScaledConfidences(e.models[m], data);
  });
  return e;
}

struct ShadowTrainingOptions {
  std::size_t num_models = 32;
  std::uint64_t base_seed = 42;
  std::size_t workers = 1;
};

// Model m trains on its mask's half of the data with seed base_seed + m.
inline ShadowEnsemble TrainShadows(const nn::LabeledImages& data,
                                   const nn::ModelConfig& model_config,
                                   const dp::TrainConfig& train_config,
                                   const dp::PrivacyBudget& budget,
                                   const ShadowTrainingOptions& opt) {
  Rng mask_rng = Rng::Derive(opt.base_seed, "membership_masks",
                             static_cast<std::uint64_t>(opt.num_models));
  std::vector<Mask> masks = SampleMembershipMasks(opt.num_models, data.size(), mask_rng);
  // Calibrate once: every shadow has the same subset size and schedule.
  dp::TrainConfig cfg = train_config;
  if (budget.is_private() && !cfg.noise_multiplier.has_value()) {
    const std::size_t n = data.size() / 2;
    cfg.noise_multiplier = dp::NoiseMultiplierFor(
        budget, n, std::min(cfg.batch_size, n), cfg.epochs);
  }
  std::vector<nn::ModelParams> models(opt.num_models);
  ParallelFor(opt.num_models, opt.workers, [&](std::size_t m) {
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (masks[m][i]) subset.push_back(i);
    try {
      models[m] = dp::Train(data, subset, nullptr, model_config, cfg, budget,
                            opt.base_seed + m)
                      .params;
    } catch (const Error& e) {
      throw Error(e.code(), "shadow model " + std::to_string(m) + ": " + e.what());
    }
  });
  ShadowEnsemble ensemble = MakeEnsemble(std::move(models), std::move(masks), data,
                                         opt.workers);
  ensemble.base_seed = opt.base_seed;
  return ensemble;
}

struct GaussianFit {
  double mean = 0.0;
  double stddev = 0.0;  // floored at kStdFloor
  std::size_t count = 0;  // OUT observations used
};

// Mean and standard deviation of all OUT observations, excluding one model.
// Used when a sample has fewer than two OUT observations of its own.
inline GaussianFit GlobalOutFit(const ShadowEnsemble& e,
                                std::optional<std::size_t> exclude_model) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < e.size(); ++m) {
    if (exclude_model && *exclude_model == m) continue;
    for (std::size_t s = 0; s < e.num_samples(); ++s) {
      if (e.membership[m][s]) continue;
      sum += e.confidences[m][s];
      ++n;
    }
  }
  GaussianFit fit;
  fit.count = n;
  if (n == 0) {
    fit.stddev = kStdFloor;
    return fit;
  }
  fit.mean = sum / static_cast<double>(n);
  for (std::size_t m = 0; m < e.size(); ++m) {
    if (exclude_model && *exclude_model == m) continue;
    for (std::size_t s = 0; s < e.num_samples(); ++s) {
      if (e.membership[m][s]) continue;
      const double d = e.confidences[m][s] - fit.mean;
      sq += d * d;
    }
  }
  fit.stddev = n >= 2 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
  fit.stddev = std::max(fit.stddev, kStdFloor);
  return fit;
}

// Unbiased Gaussian fit to the sample's confidences under models that did
// not train on it. With fewer than two such models the global OUT spread is
// used (and the global mean when there are none).
inline GaussianFit FitOutGaussian(std::size_t sample, const ShadowEnsemble& e,
                                  std::optional<std::size_t> exclude_model,
                                  const GaussianFit& global) {
  Require(sample < e.num_samples(), ErrorCode::kInput, "sample index out of range");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < e.size(); ++m) {
    if ((exclude_model && *exclude_model == m) || e.membership[m][sample]) continue;
    sum += e.confidences[m][sample];
    ++n;
  }
  GaussianFit fit;
  fit.count = n;
  if (n == 0) return {global.mean, std::max(global.stddev, kStdFloor), 0};
  fit.mean = sum / static_cast<double>(n);
  if (n < 2) {
    fit.stddev = std::max(global.stddev, kStdFloor);
    return fit;
  }
  double sq = 0.0;
  for (std::size_t m = 0; m < e.size(); ++m) {
    if ((exclude_model && *exclude_model == m) || e.membership[m][sample]) continue;
    const double d = e.confidences[m][sample] - fit.mean;
    sq += d * d;
  }
  fit.stddev = std::max(std::sqrt(sq / static_cast<double>(n - 1)), kStdFloor);
  return fit;
}

inline GaussianFit FitOutGaussian(std::size_t sample, const ShadowEnsemble& e,
                                  std::optional<std::size_t> exclude_model) {
  return FitOutGaussian(sample, e, exclude_model, GlobalOutFit(e, exclude_model));
}

inline double StandardNormalCdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// Phi((logit - mean) / stddev): the probability mass of the OUT Gaussian
// below the target's observation. Higher means more likely a member.
inline double LiraScoreFromLogit(double target_logit, double mean, double stddev) {
  return StandardNormalCdf((target_logit - mean) / std::max(stddev, kStdFloor));
}

inline double LiraScore(double target_confidence, double mean, double stddev) {
  return LiraScoreFromLogit(LogitScale(target_confidence), mean, stddev);
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct AttackReport {
  std::vector<RocPoint> roc;
  double auc = 0.0;
  double tpr_at_fpr_0_1 = 0.0;
  double tpr_at_fpr_0_001 = 0.0;
};

// Linear interpolation of the ROC at a fixed FPR. At vertical segments the
// highest TPR reached at that FPR is used.
inline double TprAtFpr(std::span<const RocPoint> roc, double fpr) {
  Require(!roc.empty(), ErrorCode::kEvaluation, "empty ROC");
  std::size_t i = 0;
  while (i + 1 < roc.size() && roc[i + 1].fpr <= fpr) ++i;
  if (roc[i].fpr >= fpr || i + 1 == roc.size()) return roc[i].tpr;
  const RocPoint& a = roc[i];
  const RocPoint& b = roc[i + 1];
  const double t = (fpr - a.fpr) / (b.fpr - a.fpr);
  return a.tpr + t * (b.tpr - a.tpr);
}

inline double TrapezoidArea(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
  return area;
}

// Threshold sweep over the distinct scores (descending); tied scores move
// the curve diagonally.
inline AttackReport EvaluateAttack(std::span<const double> scores,
                                   std::span<const std::uint8_t> is_member) {
  Require(scores.size() == is_member.size(), ErrorCode::kEvaluation,
          "scores and membership lengths differ");
  std::size_t positives = 0;
  for (std::uint8_t t : is_member) positives += t ? 1 : 0;
  const std::size_t negatives = is_member.size() - positives;
  Require(positives > 0 && negatives > 0, ErrorCode::kEvaluation,
          "attack evaluation needs both members and non-members");
  for (double s : scores)
    Require(!std::isnan(s), ErrorCode::kEvaluation, "NaN attack score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  AttackReport report;
  report.roc.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      if (is_member[order[i]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    report.roc.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                          static_cast<double>(tp) / static_cast<double>(positives)});
  }
  report.auc = TrapezoidArea(report.roc);
  report.tpr_at_fpr_0_1 = TprAtFpr(report.roc, 0.1);
  report.tpr_at_fpr_0_001 = TprAtFpr(report.roc, 0.001);
  return report;
}

struct ScoreRecord {
  std::size_t sample_id = 0;
  std::size_t target_model = 0;
  double score = 0.0;
  bool is_member = false;
};

struct RoundRobinResult {
  AttackReport average;  // metric means; ROC vertically averaged
  std::vector<AttackReport> per_target;
  std::vector<ScoreRecord> scores;
};

// FPR grid for vertically averaged ROC curves: dense log spacing below 0.01
// plus a uniform grid on [0, 1].
inline std::vector<double> AveragingFprGrid() {
  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i) grid.push_back(i / 200.0);
  for (int i = 0; i < 40; ++i) grid.push_back(std::pow(10.0, -4.0 + 2.0 * i / 40.0));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

inline AttackReport AverageReports(std::span<const AttackReport> reports) {
  Require(!reports.empty(), ErrorCode::kEvaluation, "no reports to average");
  AttackReport avg;
  const double n = static_cast<double>(reports.size());
  for (const AttackReport& r : reports) {
    avg.auc += r.auc / n;
    avg.tpr_at_fpr_0_1 += r.tpr_at_fpr_0_1 / n;
    avg.tpr_at_fpr_0_001 += r.tpr_at_fpr_0_001 / n;
  }
  for (double fpr : AveragingFprGrid()) {
    double tpr = 0.0;
    for (const AttackReport& r : reports) tpr += TprAtFpr(r.roc, fpr) / n;
    avg.roc.push_back({fpr, tpr});
  }
  return avg;
}

// Scores every sample against one target's confidences using the OUT
// statistics of all ensemble members except `exclude_model`.
inline std::vector<double> ScoreSamples(std::span<const double> target_logits,
                                        const ShadowEnsemble& e,
                                        std::optional<std::size_t> exclude_model) {
  const GaussianFit global = GlobalOutFit(e, exclude_model);
  std::vector<double> scores(e.num_samples());
  for (std::size_t s = 0; s < scores.size(); ++s) {
    const GaussianFit fit = FitOutGaussian(s, e, exclude_model, global);
    scores[s] = LiraScoreFromLogit(target_logits[s], fit.mean, fit.stddev);
  }
  return scores;
}

// Every ensemble member in turn is the target; the others act as shadows.
// Only OUT observations are ever consumed.
inline RoundRobinResult RoundRobinAttack(const ShadowEnsemble& e) {
  Require(e.size() >= 3, ErrorCode::kInput, "round-robin attack needs >= 3 models");
  RoundRobinResult result;
  for (std::size_t m = 0; m < e.size(); ++m) {
    const std::vector<double> scores = ScoreSamples(e.confidences[m], e, m);
    try {
      result.per_target.push_back(EvaluateAttack(scores, e.membership[m]));
    } catch (const Error& err) {
      throw Error(err.code(), "target model " + std::to_string(m) + ": " + err.what());
    }
    for (std::size_t s = 0; s < scores.size(); ++s)
      result.scores.push_back({s, m, scores[s], e.membership[m][s] != 0});
  }
  result.average = AverageReports(result.per_target);
  return result;
}

// Attacks an external target model with the whole ensemble as shadows.
inline AttackReport AttackTarget(const nn::ModelParams& target,
                                 std::span<const std::uint8_t> target_membership,
                                 const ShadowEnsemble& e, const nn::LabeledImages& data) {
  Require(target_membership.size() == data.size() && data.size() == e.num_samples(),
          ErrorCode::kInput, "target membership, data and ensemble sizes differ");
  const std::vector<double> logits = ScaledConfidences(target, data);
  const std::vector<double> scores = ScoreSamples(logits, e, std::nullopt);
  return EvaluateAttack(scores, target_membership);
}

// CSV with header sample_id,target_model,score,is_member.
inline void WriteScoresCsv(std::ostream& os, std::span<const ScoreRecord> records) {
  os << "sample_id,target_model,score,is_member\n";
  char buf[64];
  for (const ScoreRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.score);
    os << r.sample_id << ',' << r.target_model << ',' << buf << ','
       << (r.is_member ? 1 : 0) << '\n';
  }
}

}  // namespace ppml_audit::lira

#endif  // PPML_AUDIT_LIRA_HPP_
