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

// ppml-audit command line: dataset analysis and modification, DP training,
// membership inference, and full experiment runs.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ppml_audit.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ppml_audit;
using pipeline::Json;

double ParseEpsilon(const std::string& s) {
  return pipeline::ParseBudget(Json(s));
}

// Directories are read as IDX files when they hold the standard MNIST names,
// otherwise as class-per-folder images; files are dataset containers.
data::ImageDataset LoadAny(const fs::path& input) {
  if (fs::is_directory(input)) {
    for (const char* name : {"train-images-idx3-ubyte", "train-images.idx3-ubyte",
                             "train-images-idx3-ubyte.idx"})
      if (fs::exists(input / name)) return data::LoadIdx(input);
    return data::LoadImageDir(input);
  }
  return data::LoadDataset(input);
}

void Emit(const std::string& text, const std::string& output) {
  if (output.empty() || output == "-") {
    std::cout << text;
  } else {
    io::WriteFileText(output, text);
  }
}

struct ModelFlags {
  std::vector<std::size_t> channels{32, 64, 128};
  std::size_t groups = 8;
  std::size_t hidden = 128;

  void Add(CLI::App* app) {
    app->add_option("--channels", channels, "conv channels of the three blocks")
        ->delimiter(',')
        ->expected(3);
    app->add_option("--groups", groups, "GroupNorm groups");
    app->add_option("--hidden", hidden, "dense hidden units");
  }
  nn::ModelConfig Make(std::size_t num_classes) const {
    nn::ModelConfig m;
    std::copy(channels.begin(), channels.end(), m.conv_channels.begin());
    m.groupnorm_groups = groups;
    m.hidden_units = hidden;
    m.num_classes = num_classes;
    return m;
  }
};

struct TrainFlags {
  std::string epsilon = "inf";
  double delta = dp::kDefaultDelta;
  dp::TrainConfig config;
  std::optional<double> sigma;

  void Add(CLI::App* app) {
    app->add_option("--epsilon", epsilon, "privacy budget, or inf");
    app->add_option("--delta", delta, "privacy delta");
    app->add_option("--epochs", config.epochs);
    app->add_option("--batch-size", config.batch_size);
    app->add_option("--lr", config.learning_rate, "Adam learning rate");
    app->add_option("--clip", config.clip_norm, "per-example clipping norm");
    app->add_option("--noise-multiplier", sigma, "override the calibrated sigma");
    app->add_flag("!--no-flip", config.random_flip, "disable random horizontal flips");
  }
  dp::TrainConfig Config() const {
    dp::TrainConfig c = config;
    c.noise_multiplier = sigma;
    return c;
  }
  dp::PrivacyBudget Budget() const { return {ParseEpsilon(epsilon), delta}; }
};

int Run(int argc, char** argv) {
  CLI::App app{"Privacy auditing for image classifiers trained with DP-SGD"};
  app.require_subcommand(1);
  std::size_t workers = WorkersFromEnv();

  // analyze
  CLI::App* analyze = app.add_subcommand("analyze", "dataset characteristics as JSON");
  std::string an_input, an_output;
  bool an_downscale = false;
  analyze->add_option("--input", an_input, "container, IDX or image directory")->required();
  analyze->add_option("--output", an_output, "JSON path (stdout by default)");
  analyze->add_flag("--allow-downscale", an_downscale);

  // modify
  CLI::App* modify = app.add_subcommand("modify", "apply dataset operators");
  std::string mo_input, mo_output, mo_mode = "linear";
  std::optional<std::size_t> mo_class_size, mo_class_count;
  std::optional<double> mo_imbalance;
  bool mo_gray = false;
  std::uint64_t mo_seed = data::kDefaultSeed;
  modify->add_option("--input", mo_input)->required();
  modify->add_option("--output", mo_output, "dataset container path")->required();
  modify->add_option("--class-size", mo_class_size, "samples kept per class");
  modify->add_option("--class-count", mo_class_count, "classes kept (>= 3)");
  modify->add_option("--imbalance", mo_imbalance, "imbalance factor in [0, 1]");
  modify->add_option("--mode", mo_mode, "imbalance mode")
      ->check(CLI::IsMember({"linear", "normal"}));
  modify->add_flag("--grayscale", mo_gray);
  modify->add_option("--seed", mo_seed);

  // synth
  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset container");
  data::SynthSpec sy_spec;
  std::string sy_output;
  std::uint64_t sy_seed = data::kDefaultSeed;
  synth->add_option("--output", sy_output)->required();
  synth->add_option("--classes", sy_spec.num_classes);
  synth->add_option("--train-per-class", sy_spec.train_per_class);
  synth->add_option("--test-per-class", sy_spec.test_per_class);
  synth->add_option("--noise", sy_spec.noise_stddev, "pixel noise stddev");
  synth->add_option("--label-noise", sy_spec.label_noise, "fraction of flipped labels");
  synth->add_option("--seed", sy_seed);

  // train
  CLI::App* train = app.add_subcommand("train", "train a model, optionally with DP");
  std::string tr_input, tr_output, tr_history;
  std::uint64_t tr_seed = data::kDefaultSeed;
  bool tr_downscale = false;
  ModelFlags tr_model;
  TrainFlags tr_flags;
  train->add_option("--input", tr_input)->required();
  train->add_option("--output", tr_output, "checkpoint path")->required();
  train->add_option("--history", tr_history, "per-epoch CSV path");
  train->add_option("--seed", tr_seed);
  train->add_flag("--allow-downscale", tr_downscale);
  tr_model.Add(train);
  tr_flags.Add(train);

  // attack
  CLI::App* attack = app.add_subcommand("attack", "shadow-model membership inference");
  std::string at_input, at_output, at_roc, at_scores;
  std::size_t at_shadows = 32;
  std::uint64_t at_seed = data::kDefaultSeed + 1;
  bool at_downscale = false;
  ModelFlags at_model;
  TrainFlags at_flags;
  attack->add_option("--input", at_input)->required();
  attack->add_option("--output", at_output, "AttackReport JSON (stdout by default)");
  attack->add_option("--roc", at_roc, "averaged ROC CSV path");
  attack->add_option("--scores", at_scores, "per-sample score CSV path");
  attack->add_option("--shadows", at_shadows, "number of shadow models")
      ->check(CLI::Range(std::size_t{3}, std::size_t{1} << 20));
  attack->add_option("--seed", at_seed, "base seed of the shadow models");
  attack->add_flag("--allow-downscale", at_downscale);
  at_model.Add(attack);
  at_flags.Add(attack);

  // report
  CLI::App* report = app.add_subcommand("report", "merge a finished run into one table");
  std::string re_run, re_output;
  report->add_option("--run", re_run, "experiment output directory")->required();
  report->add_option("--output", re_output, "CSV path (stdout by default)");

  // experiment
  CLI::App* experiment = app.add_subcommand("experiment", "run a full experiment config");
  std::string ex_config, ex_output_dir;
  bool ex_print_default = false;
  experiment->add_option("--config", ex_config, "experiment JSON");
  experiment->add_option("--output-dir", ex_output_dir, "override output_dir");
  experiment->add_flag("--print-default-config", ex_print_default);

  for (CLI::App* sub : {analyze, modify, train, attack, experiment})
    sub->add_option("--workers", workers, "parallel shadow trainings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (analyze->parsed()) {
    const data::ImageDataset ds = LoadAny(an_input);
    data::PreprocessOptions prep;
    prep.allow_downscale = an_downscale;
    const auto c = metrics::Characterize(ds, prep);
    Json j = pipeline::CharacteristicsToJson(c);
    j["train_histogram"] = data::Histogram(ds.train, ds.num_classes());
    j["class_names"] = ds.class_names;
    Emit(j.dump(2) + "\n", an_output);
  } else if (modify->parsed()) {
    data::ImageDataset ds = LoadAny(mo_input);
    // Operators apply in the order class-size, class-count, imbalance, grayscale.
    if (mo_class_size) ds = data::ReduceClassSize(ds, *mo_class_size, mo_seed);
    if (mo_class_count) ds = data::ReduceClassCount(ds, *mo_class_count);
    if (mo_imbalance) {
      ds = mo_mode == "normal" ? data::ImbalanceNormal(ds, *mo_imbalance, mo_seed)
                               : data::ImbalanceLinear(ds, *mo_imbalance, mo_seed);
    }
    if (mo_gray) ds = data::ToGrayscale(ds);
    data::SaveDataset(ds, mo_output);
    Json j = {{"output", mo_output},
              {"class_names", ds.class_names},
              {"train_histogram", data::Histogram(ds.train, ds.num_classes())},
              {"test_histogram", data::Histogram(ds.test, ds.num_classes())}};
    std::cout << j.dump(2) << "\n";
  } else if (synth->parsed()) {
    data::SaveDataset(data::SynthGenerate(sy_spec, sy_seed), sy_output);
  } else if (train->parsed()) {
    const data::ImageDataset ds = LoadAny(tr_input);
    data::PreprocessOptions prep;
    prep.allow_downscale = tr_downscale;
    const data::PreprocessedDataset t = data::Preprocess(ds, prep);
    const dp::TrainResult r =
        dp::Train(t.train, &t.test, tr_model.Make(ds.num_classes()), tr_flags.Config(),
                  tr_flags.Budget(), tr_seed);
    nn::SaveParams(r.params, tr_output);
    if (!tr_history.empty()) io::WriteFileText(tr_history, pipeline::HistoryCsv(r.history));
    const metrics::UtilityReport u = metrics::Utility(r.params, t.train, t.test);
    Json j = {{"epsilon", pipeline::BudgetJson(tr_flags.Budget().epsilon)},
              {"delta", tr_flags.delta},
              {"noise_multiplier", pipeline::Fixed4(r.noise_multiplier)},
              {"epsilon_spent", pipeline::Fixed4(r.epsilon_spent)},
              {"batch_size", r.effective_batch_size},
              {"utility", pipeline::UtilityToJson(u)}};
    std::cout << j.dump(2) << "\n";
  } else if (attack->parsed()) {
    const data::ImageDataset ds = LoadAny(at_input);
    data::PreprocessOptions prep;
    prep.allow_downscale = at_downscale;
    const data::PreprocessedDataset t = data::Preprocess(ds, prep);
    const lira::ShadowEnsemble e =
        lira::TrainShadows(t.train, at_model.Make(ds.num_classes()), at_flags.Config(),
                           at_flags.Budget(), {at_shadows, at_seed, workers});
    const lira::RoundRobinResult rr = lira::RoundRobinAttack(e);
    Json j = pipeline::AttackToJson(rr.average);
    j["num_shadows"] = at_shadows;
    Emit(j.dump(2) + "\n", at_output);
    if (!at_roc.empty()) io::WriteFileText(at_roc, pipeline::RocCsv(rr.average));
    if (!at_scores.empty()) {
      std::ostringstream os;
      lira::WriteScoresCsv(os, rr.scores);
      io::WriteFileText(at_scores, os.str());
    }
  } else if (report->parsed()) {
    Emit(pipeline::ReportTable(pipeline::CollectReportRows(re_run)), re_output);
  } else if (experiment->parsed()) {
    if (ex_print_default) {
      std::cout << pipeline::ConfigToJson(pipeline::ExperimentConfig{}).dump(2) << "\n";
      return 0;
    }
    if (ex_config.empty()) {
      std::cerr << "experiment: --config is required\n";
      return 2;
    }
    pipeline::ExperimentConfig config = pipeline::LoadConfig(ex_config);
    if (!ex_output_dir.empty()) config.output_dir = ex_output_dir;
    pipeline::RunOptions opt;
    opt.workers = workers;
    opt.log = [](const std::string& line) { std::cerr << line << "\n"; };
    const pipeline::RunManifest m = pipeline::RunExperiment(config, opt);
    if (!m.ok) {
      std::cerr << "stage " << m.failed_stage << " failed: " << m.error << "\n";
      return 1;
    }
    std::cout << (fs::path(config.output_dir) / "report.csv").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const ppml_audit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
