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

// Experiment orchestration: configuration, the train -> evaluate -> attack
// procedure per dataset variant and privacy budget, and report emission.

#ifndef PPML_AUDIT_PIPELINE_HPP_
#define PPML_AUDIT_PIPELINE_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppml_audit/binary_io.hpp"
#include "ppml_audit/checkpoint.hpp"
#include "ppml_audit/dataset.hpp"
#include "ppml_audit/dataset_io.hpp"
#include "ppml_audit/dp_train.hpp"
#include "ppml_audit/lira.hpp"
#include "ppml_audit/metrics.hpp"
#include "ppml_audit/random.hpp"

namespace ppml_audit::pipeline {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Formatting

// Reports carry 4 decimal places so runs can be diffed.
inline Json Fixed4(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  const double r = std::round(v * 1e4) / 1e4;
  return r == 0.0 ? 0.0 : r;  // no "-0.0"
}

inline std::string Fixed4Text(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", std::round(v * 1e4) / 1e4);
  std::string s = buf;
  return s == "-0.0000" ? "0.0000" : s;
}

inline std::string BudgetTag(double epsilon) {
  if (std::isinf(epsilon)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", epsilon);
  return buf;
}

inline double ParseBudget(const Json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "infinity" || s == "none") return dp::kInfinity;
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, "invalid privacy budget '" + s + "'");
    }
  }
  if (j.is_number()) return j.get<double>();
  throw Error(ErrorCode::kConfig, "privacy budget must be a number or \"inf\"");
}

inline Json BudgetJson(double epsilon) {
  if (std::isinf(epsilon)) return "inf";
  return epsilon;
}

// ---------------------------------------------------------------------------
// Configuration

struct OperatorSpec {
  enum class Kind { kClassSize, kClassCount, kImbalance, kGrayscale };
  Kind kind = Kind::kClassSize;
  std::size_t count = 0;   // c for class size, n for class count
  double factor = 0.0;     // imbalance factor i
  std::string mode;        // "linear" or "normal"

  friend bool operator==(const OperatorSpec&, const OperatorSpec&) = default;
};

struct VariantSpec {
  std::string name = "baseline";
  std::vector<OperatorSpec> operators;

  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

struct DatasetSource {
  std::string kind = "synthetic";  // synthetic | idx | image_dir | container
  std::string path;
  data::SynthSpec synthetic;
};

struct ExperimentConfig {
  DatasetSource dataset;
  bool allow_downscale = false;
  std::vector<VariantSpec> variants{VariantSpec{}};
  std::vector<double> budgets{dp::kInfinity, 30.0, 1.0};
  double delta = dp::kDefaultDelta;
  // num_classes is taken from the (modified) dataset at run time.
  nn::ModelConfig model;
  dp::TrainConfig train;
  std::size_t shadows = 32;  // 0 disables the attack stage
  std::uint64_t seed = data::kDefaultSeed;
  std::string output_dir = "run";

  void Validate() const {
    static const std::vector<std::string> kinds{"synthetic", "idx", "image_dir",
                                                "container"};
    Require(std::find(kinds.begin(), kinds.end(), dataset.kind) != kinds.end(),
            ErrorCode::kConfig, "unknown dataset source '" + dataset.kind + "'");
    Require(dataset.kind == "synthetic" || !dataset.path.empty(), ErrorCode::kConfig,
            "dataset path is required for source '" + dataset.kind + "'");
    if (dataset.kind == "synthetic") dataset.synthetic.Validate();
    Require(!variants.empty(), ErrorCode::kConfig, "at least one variant required");
    for (const VariantSpec& v : variants) {
      Require(!v.name.empty() && v.name.find('/') == std::string::npos,
              ErrorCode::kConfig, "variant names must be non-empty without '/'");
      for (const OperatorSpec& op : v.operators) {
        if (op.kind == OperatorSpec::Kind::kImbalance) {
          Require(op.factor >= 0.0 && op.factor <= 1.0, ErrorCode::kConfig,
                  "imbalance factor must be in [0, 1]");
          Require(op.mode == "linear" || op.mode == "normal", ErrorCode::kConfig,
                  "imbalance mode must be 'linear' or 'normal'");
        }
        if (op.kind == OperatorSpec::Kind::kClassCount)
          Require(op.count >= 3, ErrorCode::kConfig, "class count must be >= 3");
        if (op.kind == OperatorSpec::Kind::kClassSize)
          Require(op.count >= 1, ErrorCode::kConfig, "class size must be >= 1");
      }
    }
    Require(!budgets.empty(), ErrorCode::kConfig, "at least one budget required");
    for (double b : budgets)
      Require(b > 0.0, ErrorCode::kConfig, "budgets must be positive or inf");
    Require(delta > 0.0 && delta < 1.0, ErrorCode::kConfig, "delta must be in (0, 1)");
    Require(shadows == 0 || shadows >= 3, ErrorCode::kConfig,
            "shadows must be 0 (no attack) or >= 3");
    Require(train.epochs >= 1 && train.batch_size >= 1, ErrorCode::kConfig,
            "epochs and batch size must be >= 1");
    Require(train.clip_norm > 0.0, ErrorCode::kConfig, "clip norm must be > 0");
    nn::ModelConfig probe = model;
    probe.num_classes = std::max<std::size_t>(probe.num_classes, 2);
    probe.Validate();
  }
};

namespace detail {

inline void CheckKeys(const Json& j, std::initializer_list<std::string_view> allowed,
                      std::string_view where) {
  Require(j.is_object(), ErrorCode::kConfig, std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    Require(ok, ErrorCode::kConfig,
            "unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void Read(const Json& j, std::string_view key, T& out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kConfig, "invalid value for '" + std::string(key) + "'");
  }
}

}  // namespace detail

inline Json OperatorToJson(const OperatorSpec& op) {
  switch (op.kind) {
    case OperatorSpec::Kind::kClassSize: return {{"op", "class_size"}, {"c", op.count}};
    case OperatorSpec::Kind::kClassCount: return {{"op", "class_count"}, {"n", op.count}};
    case OperatorSpec::Kind::kImbalance:
      return {{"op", "imbalance"}, {"factor", op.factor}, {"mode", op.mode}};
    case OperatorSpec::Kind::kGrayscale: return {{"op", "grayscale"}};
  }
  return {};
}

inline OperatorSpec OperatorFromJson(const Json& j) {
  Require(j.is_object() && j.contains("op") && j["op"].is_string(), ErrorCode::kConfig,
          "operators need an \"op\" field");
  const std::string name = j["op"].get<std::string>();
  OperatorSpec op;
  if (name == "class_size") {
    detail::CheckKeys(j, {"op", "c"}, "class_size operator");
    op.kind = OperatorSpec::Kind::kClassSize;
    detail::Read(j, "c", op.count);
  } else if (name == "class_count") {
    detail::CheckKeys(j, {"op", "n"}, "class_count operator");
    op.kind = OperatorSpec::Kind::kClassCount;
    detail::Read(j, "n", op.count);
  } else if (name == "imbalance") {
    detail::CheckKeys(j, {"op", "factor", "mode"}, "imbalance operator");
    op.kind = OperatorSpec::Kind::kImbalance;
    op.mode = "linear";
    detail::Read(j, "factor", op.factor);
    detail::Read(j, "mode", op.mode);
  } else if (name == "grayscale") {
    detail::CheckKeys(j, {"op"}, "grayscale operator");
    op.kind = OperatorSpec::Kind::kGrayscale;
  } else {
    throw Error(ErrorCode::kConfig, "unknown operator '" + name + "'");
  }
  return op;
}

inline Json SynthToJson(const data::SynthSpec& s) {
  return {{"num_classes", s.num_classes},   {"train_per_class", s.train_per_class},
          {"test_per_class", s.test_per_class}, {"height", s.height},
          {"width", s.width},               {"channels", s.channels},
          {"ring_radius", s.ring_radius},   {"blob_sigma", s.blob_sigma},
          {"jitter", s.jitter},             {"noise_stddev", s.noise_stddev},
          {"label_noise", s.label_noise}};
}

inline data::SynthSpec SynthFromJson(const Json& j) {
  detail::CheckKeys(j, {"num_classes", "train_per_class", "test_per_class", "height",
                        "width", "channels", "ring_radius", "blob_sigma", "jitter",
                        "noise_stddev", "label_noise"},
                    "synthetic");
  data::SynthSpec s;
  detail::Read(j, "num_classes", s.num_classes);
  detail::Read(j, "train_per_class", s.train_per_class);
  detail::Read(j, "test_per_class", s.test_per_class);
  detail::Read(j, "height", s.height);
  detail::Read(j, "width", s.width);
  detail::Read(j, "channels", s.channels);
  detail::Read(j, "ring_radius", s.ring_radius);
  detail::Read(j, "blob_sigma", s.blob_sigma);
  detail::Read(j, "jitter", s.jitter);
  detail::Read(j, "noise_stddev", s.noise_stddev);
  detail::Read(j, "label_noise", s.label_noise);
  return s;
}

inline Json ModelToJson(const nn::ModelConfig& m) {
  return {{"conv_channels", m.conv_channels},
          {"kernel_size", m.kernel_size},
          {"groupnorm_groups", m.groupnorm_groups},
          {"hidden_units", m.hidden_units}};
}

inline Json TrainToJson(const dp::TrainConfig& t) {
  Json j = {{"batch_size", t.batch_size},       {"epochs", t.epochs},
            {"learning_rate", t.learning_rate}, {"clip_norm", t.clip_norm},
            {"random_flip", t.random_flip}};
  if (t.noise_multiplier) j["noise_multiplier"] = *t.noise_multiplier;
  return j;
}

// Canonical JSON form; output_dir is included but not hashed.
inline Json ConfigToJson(const ExperimentConfig& c) {
  Json dataset = {{"source", c.dataset.kind}};
  if (c.dataset.kind == "synthetic") {
    dataset["synthetic"] = SynthToJson(c.dataset.synthetic);
  } else {
    dataset["path"] = c.dataset.path;
  }
  Json variants = Json::array();
  for (const VariantSpec& v : c.variants) {
    Json ops = Json::array();
    for (const OperatorSpec& op : v.operators) ops.push_back(OperatorToJson(op));
    variants.push_back({{"name", v.name}, {"operators", ops}});
  }
  Json budgets = Json::array();
  for (double b : c.budgets) budgets.push_back(BudgetJson(b));
  return {{"schema_version", kConfigSchemaVersion},
          {"dataset", dataset},
          {"allow_downscale", c.allow_downscale},
          {"variants", variants},
          {"budgets", budgets},
          {"delta", c.delta},
          {"model", ModelToJson(c.model)},
          {"train", TrainToJson(c.train)},
          {"shadows", c.shadows},
          {"seed", c.seed},
          {"output_dir", c.output_dir}};
}

inline ExperimentConfig ConfigFromJson(const Json& j) {
  detail::CheckKeys(j, {"schema_version", "dataset", "allow_downscale", "variants",
                        "budgets", "delta", "model", "train", "shadows", "seed",
                        "output_dir"},
                    "experiment config");
  int version = 0;
  detail::Read(j, "schema_version", version);
  Require(version == kConfigSchemaVersion, ErrorCode::kConfig,
          "unsupported config schema_version " + std::to_string(version));
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const Json& d = j["dataset"];
    detail::CheckKeys(d, {"source", "path", "synthetic"}, "dataset");
    detail::Read(d, "source", c.dataset.kind);
    detail::Read(d, "path", c.dataset.path);
    if (d.contains("synthetic")) c.dataset.synthetic = SynthFromJson(d["synthetic"]);
  }
  detail::Read(j, "allow_downscale", c.allow_downscale);
  if (j.contains("variants")) {
    c.variants.clear();
    for (const Json& v : j["variants"]) {
      detail::CheckKeys(v, {"name", "operators"}, "variant");
      VariantSpec spec;
      detail::Read(v, "name", spec.name);
      if (v.contains("operators"))
        for (const Json& op : v["operators"]) spec.operators.push_back(OperatorFromJson(op));
      c.variants.push_back(std::move(spec));
    }
  }
  if (j.contains("budgets")) {
    c.budgets.clear();
    for (const Json& b : j["budgets"]) c.budgets.push_back(ParseBudget(b));
  }
  detail::Read(j, "delta", c.delta);
  if (j.contains("model")) {
    const Json& m = j["model"];
    detail::CheckKeys(m, {"conv_channels", "kernel_size", "groupnorm_groups",
                          "hidden_units"},
                      "model");
    detail::Read(m, "conv_channels", c.model.conv_channels);
    detail::Read(m, "kernel_size", c.model.kernel_size);
    detail::Read(m, "groupnorm_groups", c.model.groupnorm_groups);
    detail::Read(m, "hidden_units", c.model.hidden_units);
  }
  if (j.contains("train")) {
    const Json& t = j["train"];
    detail::CheckKeys(t, {"batch_size", "epochs", "learning_rate", "clip_norm",
                          "random_flip", "noise_multiplier"},
                      "train");
    detail::Read(t, "batch_size", c.train.batch_size);
    detail::Read(t, "epochs", c.train.epochs);
    detail::Read(t, "learning_rate", c.train.learning_rate);
    detail::Read(t, "clip_norm", c.train.clip_norm);
    detail::Read(t, "random_flip", c.train.random_flip);
    if (t.contains("noise_multiplier")) {
      double sigma = 0.0;
      detail::Read(t, "noise_multiplier", sigma);
      c.train.noise_multiplier = sigma;
    }
  }
  detail::Read(j, "shadows", c.shadows);
  detail::Read(j, "seed", c.seed);
  detail::Read(j, "output_dir", c.output_dir);
  c.Validate();
  return c;
}

inline ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return ConfigFromJson(j);
}

// FNV-1a of the canonical config without output_dir, as 16 hex digits.
inline std::string ConfigHash(const ExperimentConfig& c) {
  Json j = ConfigToJson(c);
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a().Update(j.dump()).digest()));
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset plumbing

inline data::ImageDataset LoadSource(const DatasetSource& src, std::uint64_t seed) {
  if (src.kind == "synthetic") return data::SynthGenerate(src.synthetic, seed);
  if (src.kind == "idx") return data::LoadIdx(src.path);
  if (src.kind == "image_dir") return data::LoadImageDir(src.path);
  if (src.kind == "container") return data::LoadDataset(src.path);
  throw Error(ErrorCode::kConfig, "unknown dataset source '" + src.kind + "'");
}

inline data::ImageDataset ApplyOperator(const data::ImageDataset& ds,
                                        const OperatorSpec& op, std::uint64_t seed) {
  switch (op.kind) {
    case OperatorSpec::Kind::kClassSize: return data::ReduceClassSize(ds, op.count, seed);
    case OperatorSpec::Kind::kClassCount: return data::ReduceClassCount(ds, op.count);
    case OperatorSpec::Kind::kImbalance:
      return op.mode == "normal" ? data::ImbalanceNormal(ds, op.factor, seed)
                                 : data::ImbalanceLinear(ds, op.factor, seed);
    case OperatorSpec::Kind::kGrayscale: return data::ToGrayscale(ds);
  }
  return ds;
}

inline data::ImageDataset ApplyOperators(data::ImageDataset ds,
                                         const std::vector<OperatorSpec>& ops,
                                         std::uint64_t seed) {
  for (const OperatorSpec& op : ops) ds = ApplyOperator(ds, op, seed);
  return ds;
}

// ---------------------------------------------------------------------------
// Report serialization

inline Json CharacteristicsToJson(const metrics::DatasetCharacteristics& c) {
  auto inverse = [](double r) { return r > 0.0 ? 1.0 / r : dp::kInfinity; };
  return {{"mean_entropy", Fixed4(c.mean_entropy)},
          {"jpeg_ratio", Fixed4(c.jpeg_ratio)},
          {"png_ratio", Fixed4(c.png_ratio)},
          {"fdr", Fixed4(c.fdr)},
          {"in_class_std", Fixed4(c.in_class_std)},
          {"compression",
           {{"jpeg_compressed_over_raw", Fixed4(inverse(c.jpeg_ratio))},
            {"jpeg_savings", Fixed4(1.0 - inverse(c.jpeg_ratio))},
            {"png_compressed_over_raw", Fixed4(inverse(c.png_ratio))},
            {"png_savings", Fixed4(1.0 - inverse(c.png_ratio))}}}};
}

inline Json UtilityToJson(const metrics::UtilityReport& u) {
  return {{"accuracy", Fixed4(u.accuracy)},
          {"f1_macro", Fixed4(u.f1_macro)},
          {"train_accuracy", Fixed4(u.train_accuracy)},
          {"train_test_gap", Fixed4(u.train_test_gap)}};
}

inline Json AttackToJson(const lira::AttackReport& r) {
  return {{"auc", Fixed4(r.auc)},
          {"tpr_at_fpr_0_1", Fixed4(r.tpr_at_fpr_0_1)},
          {"tpr_at_fpr_0_001", Fixed4(r.tpr_at_fpr_0_001)}};
}

inline std::string RocCsv(const lira::AttackReport& r) {
  std::ostringstream os;
  os << "fpr,tpr\n";
  for (const lira::RocPoint& p : r.roc) os << Fixed4Text(p.fpr) << ',' << Fixed4Text(p.tpr) << '\n';
  return os.str();
}

inline std::string HistoryCsv(const dp::TrainHistory& h) {
  std::ostringstream os;
  os << "epoch,train_loss,train_accuracy,test_accuracy\n";
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    os << e + 1 << ',' << Fixed4Text(h.train_loss[e]) << ','
       << Fixed4Text(h.train_accuracy[e]) << ','
       << (h.test_accuracy[e] ? Fixed4Text(*h.test_accuracy[e]) : std::string()) << '\n';
  }
  return os.str();
}

inline Json HistoryToJson(const dp::TrainHistory& h) {
  Json epochs = Json::array();
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    epochs.push_back({{"epoch", e + 1},
                      {"train_loss", Fixed4(h.train_loss[e])},
                      {"train_accuracy", Fixed4(h.train_accuracy[e])},
                      {"test_accuracy", h.test_accuracy[e] ? Fixed4(*h.test_accuracy[e])
                                                           : Json(nullptr)}});
  }
  return epochs;
}

inline void WriteJson(const std::filesystem::path& path, const Json& j) {
  io::WriteFileText(path, j.dump(2) + "\n");
}

inline Json ReadJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Merged table: one row per (variant, budget).

inline constexpr const char* kReportColumns =
    "variant,budget,mean_entropy,jpeg_ratio,png_ratio,fdr,in_class_std,accuracy,"
    "f1_macro,train_test_gap,auc,tpr_at_fpr_0_1,tpr_at_fpr_0_001";

struct ReportRow {
  std::string variant;
  double epsilon = dp::kInfinity;
  metrics::DatasetCharacteristics characteristics;
  metrics::UtilityReport utility;
  std::optional<lira::AttackReport> attack;
};

inline std::string ReportTable(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << kReportColumns << '\n';
  for (const ReportRow& r : rows) {
    const auto& c = r.characteristics;
    const auto& u = r.utility;
    os << r.variant << ',' << BudgetTag(r.epsilon) << ',' << Fixed4Text(c.mean_entropy)
       << ',' << Fixed4Text(c.jpeg_ratio) << ',' << Fixed4Text(c.png_ratio) << ','
       << Fixed4Text(c.fdr) << ',' << Fixed4Text(c.in_class_std) << ','
       << Fixed4Text(u.accuracy) << ',' << Fixed4Text(u.f1_macro) << ','
       << Fixed4Text(u.train_test_gap) << ',';
    if (r.attack) {
      os << Fixed4Text(r.attack->auc) << ',' << Fixed4Text(r.attack->tpr_at_fpr_0_1) << ','
         << Fixed4Text(r.attack->tpr_at_fpr_0_001);
    } else {
      os << ",,";
    }
    os << '\n';
  }
  return os.str();
}

namespace detail {

inline double NumberOr(const Json& j, std::string_view key, double fallback) {
  auto it = j.find(std::string(key));
  if (it == j.end() || it->is_null()) return fallback;
  if (it->is_string()) return ParseBudget(*it);
  return it->get<double>();
}

}  // namespace detail

// Rebuilds the merged table from the per-variant JSON files of a run
// directory. Budgets missing utility.json are skipped.
inline std::vector<ReportRow> CollectReportRows(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  const Json config = ReadJson(run_dir / "config.json");
  Require(config.contains("variants") && config.contains("budgets"), ErrorCode::kFormat,
          "config.json lacks variants or budgets");
  std::vector<ReportRow> rows;
  for (const Json& v : config["variants"]) {
    const std::string name = v.at("name").get<std::string>();
    const fs::path vdir = run_dir / name;
    if (!fs::exists(vdir / "characteristics.json")) continue;
    const Json cj = ReadJson(vdir / "characteristics.json");
    metrics::DatasetCharacteristics c;
    c.mean_entropy = detail::NumberOr(cj, "mean_entropy", NAN);
    c.jpeg_ratio = detail::NumberOr(cj, "jpeg_ratio", NAN);
    c.png_ratio = detail::NumberOr(cj, "png_ratio", NAN);
    c.fdr = detail::NumberOr(cj, "fdr", NAN);
    c.in_class_std = detail::NumberOr(cj, "in_class_std", NAN);
    for (const Json& b : config["budgets"]) {
      const double eps = ParseBudget(b);
      const fs::path bdir = vdir / ("eps_" + BudgetTag(eps));
      if (!fs::exists(bdir / "utility.json")) continue;
      ReportRow row;
      row.variant = name;
      row.epsilon = eps;
      row.characteristics = c;
      const Json uj = ReadJson(bdir / "utility.json");
      row.utility.accuracy = detail::NumberOr(uj, "accuracy", NAN);
      row.utility.f1_macro = detail::NumberOr(uj, "f1_macro", NAN);
      row.utility.train_accuracy = detail::NumberOr(uj, "train_accuracy", NAN);
      row.utility.train_test_gap = detail::NumberOr(uj, "train_test_gap", NAN);
      if (fs::exists(bdir / "attack.json")) {
        const Json aj = ReadJson(bdir / "attack.json");
        lira::AttackReport a;
        a.auc = detail::NumberOr(aj, "auc", NAN);
        a.tpr_at_fpr_0_1 = detail::NumberOr(aj, "tpr_at_fpr_0_1", NAN);
        a.tpr_at_fpr_0_001 = detail::NumberOr(aj, "tpr_at_fpr_0_001", NAN);
        row.attack = a;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Running

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  bool ok = true;
  std::string error;
};

struct BudgetResult {
  double epsilon = dp::kInfinity;
  double noise_multiplier = 0.0;
  metrics::UtilityReport utility;
  std::optional<lira::AttackReport> attack;
};

struct VariantResult {
  std::string name;
  data::ClassHistogram train_histogram;
  metrics::DatasetCharacteristics characteristics;
  std::vector<BudgetResult> budgets;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string failed_stage;
  std::string error;
  std::vector<StageRecord> stages;
  std::vector<std::string> artifacts;  // relative to the output directory
  std::vector<VariantResult> results;
};

inline Json ManifestToJson(const RunManifest& m) {
  Json stages = Json::array();
  for (const StageRecord& s : m.stages) {
    Json j = {{"name", s.name}, {"status", s.ok ? "ok" : "failed"}, {"seconds", s.seconds}};
    if (!s.ok) j["error"] = s.error;
    stages.push_back(j);
  }
  Json j = {{"schema_version", kReportSchemaVersion},
            {"config_hash", m.config_hash},
            {"seed", m.seed},
            {"status", m.ok ? "ok" : "failed"}};
  if (!m.ok) {
    j["failed_stage"] = m.failed_stage;
    j["error"] = m.error;
  }
  j["stages"] = stages;
  j["artifacts"] = m.artifacts;
  return j;
}

struct RunOptions {
  std::size_t workers = 1;
  // Progress lines ("stage ..."); silent when empty.
  std::function<void(const std::string&)> log;
};

// Runs every variant x budget: train on the full train split, measure
// utility on the test split, then train the shadow ensemble and run the
// round-robin attack. Writes all reports under config.output_dir. A failing
// stage stops the run; outputs written so far are kept and the manifest
// records the stage.
inline RunManifest RunExperiment(const ExperimentConfig& config,
                                 const RunOptions& options = {}) {
  config.Validate();
  namespace fs = std::filesystem;
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  RunManifest manifest;
  manifest.config_hash = ConfigHash(config);
  manifest.seed = config.seed;

  auto write_text = [&](const fs::path& rel, const std::string& text) {
    io::WriteFileText(out / rel, text);
    manifest.artifacts.push_back(rel.generic_string());
  };
  auto write_json = [&](const fs::path& rel, const Json& j) {
    write_text(rel, j.dump(2) + "\n");
  };
  auto stage = [&](const std::string& name, auto&& body) {
    if (options.log) options.log("stage " + name);
    const auto start = std::chrono::steady_clock::now();
    StageRecord rec;
    rec.name = name;
    try {
      body();
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest.stages.push_back(rec);
    if (!rec.ok) {
      manifest.ok = false;
      manifest.failed_stage = name;
      manifest.error = rec.error;
    }
    return rec.ok;
  };
  auto finish = [&]() {
    WriteJson(out / "manifest.json", ManifestToJson(manifest));
    return manifest;
  };

  write_json("config.json", ConfigToJson(config));
  data::ImageDataset source;
  if (!stage("load", [&] { source = LoadSource(config.dataset, config.seed); }))
    return finish();
  const data::PreprocessOptions prep{32, 32, 3, config.allow_downscale};

  for (const VariantSpec& variant : config.variants) {
    VariantResult vr;
    vr.name = variant.name;
    data::ImageDataset ds;
    data::PreprocessedDataset tensors;
    if (!stage("modify:" + variant.name, [&] {
          ds = ApplyOperators(source, variant.operators, config.seed);
          vr.train_histogram = data::Histogram(ds.train, ds.num_classes());
          tensors = data::Preprocess(ds, prep);
        }))
      return finish();
    if (!stage("characterize:" + variant.name, [&] {
          vr.characteristics = metrics::Characterize(ds, prep);
          Json j = CharacteristicsToJson(vr.characteristics);
          j["train_histogram"] = vr.train_histogram;
          j["class_names"] = ds.class_names;
          write_json(fs::path(variant.name) / "characteristics.json", j);
        }))
      return finish();

    nn::ModelConfig model = config.model;
    model.num_classes = ds.num_classes();
    for (double eps : config.budgets) {
      const std::string tag = "eps_" + BudgetTag(eps);
      const fs::path dir = fs::path(variant.name) / tag;
      const std::string where = variant.name + ":" + tag;
      const dp::PrivacyBudget budget{eps, config.delta};
      BudgetResult br;
      br.epsilon = eps;
      dp::TrainResult trained;
      if (!stage("train:" + where, [&] {
            trained = dp::Train(tensors.train, &tensors.test, model, config.train,
                                budget, config.seed);
            br.noise_multiplier = trained.noise_multiplier;
            const std::string ckpt = (dir / "model.bin").generic_string();
            nn::SaveParams(trained.params, out / ckpt);
            manifest.artifacts.push_back(ckpt);
            write_text(dir / "history.csv", HistoryCsv(trained.history));
            write_json(dir / "training.json",
                       {{"epsilon", BudgetJson(eps)},
                        {"delta", config.delta},
                        {"noise_multiplier", Fixed4(trained.noise_multiplier)},
                        {"epsilon_spent", Fixed4(trained.epsilon_spent)},
                        {"batch_size", trained.effective_batch_size},
                        {"history", HistoryToJson(trained.history)}});
          }))
        return finish();
      if (!stage("utility:" + where, [&] {
            br.utility = metrics::Utility(trained.params, tensors.train, tensors.test);
            write_json(dir / "utility.json", UtilityToJson(br.utility));
          }))
        return finish();
      if (config.shadows >= 3) {
        lira::ShadowEnsemble ensemble;
        if (!stage("shadows:" + where, [&] {
              ensemble = lira::TrainShadows(
                  tensors.train, model, config.train, budget,
                  {config.shadows, config.seed + 1, options.workers});
            }))
          return finish();
        if (!stage("attack:" + where, [&] {
              const lira::RoundRobinResult rr = lira::RoundRobinAttack(ensemble);
              br.attack = rr.average;
              Json j = AttackToJson(rr.average);
              Json per = Json::array();
              for (const auto& r : rr.per_target) per.push_back(AttackToJson(r));
              j["num_shadows"] = config.shadows;
              j["per_target"] = per;
              write_json(dir / "attack.json", j);
              write_text(dir / "roc.csv", RocCsv(rr.average));
              std::ostringstream scores;
              lira::WriteScoresCsv(scores, rr.scores);
              write_text(dir / "scores.csv", scores.str());
            }))
          return finish();
      }
      vr.budgets.push_back(br);
    }
    manifest.results.push_back(std::move(vr));
  }
  stage("report", [&] {
    std::vector<ReportRow> rows;
    for (const VariantResult& v : manifest.results)
      for (const BudgetResult& b : v.budgets)
        rows.push_back({v.name, b.epsilon, v.characteristics, b.utility, b.attack});
    write_text("report.csv", ReportTable(rows));
  });
  return finish();
}

}  // namespace ppml_audit::pipeline

#endif  // PPML_AUDIT_PIPELINE_HPP_
