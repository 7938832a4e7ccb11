/* Copyright 2026 The OodSeg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "oodseg/cli.h"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "oodseg/error.h"
#include "oodseg/io.h"
#include "oodseg/kernels.h"
#include "oodseg/logging.h"
#include "oodseg/metrics.h"
#include "oodseg/parallel.h"
#include "oodseg/scoring.h"
#include "oodseg/synth.h"
#include "oodseg/toytrain.h"

namespace oodseg::cli {
namespace {

namespace fs = std::filesystem;

constexpr char kMasksSuffix[] = ".masks.npy";
constexpr char kClassesSuffix[] = ".classes.npy";

struct CommonOptions {
  fs::path out;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct ScoreOptions {
  std::vector<std::string> inputs;
  std::string method = "eel";
  double alpha = 1.0;
};

struct EvalOptions {
  std::vector<std::string> scores;
  std::string labels;
  std::string mode = "exact";
  std::size_t bins = 65536;
  double lo = 0.0;
  double hi = 1.0;
  bool curve = false;
};

struct SynthOptions {
  std::string images;
  std::string cutouts;
  std::string replay;
  int num_classes = 19;
  int anomaly_id = 20;
  std::vector<int> ground = {0};
  double scale_min = 0.5;
  double scale_max = 1.0;
  bool match_luminance = true;
  int feather = 0;
  int max_draws = 1000;
};

struct ToyOptions {
  int steps = 200;
  double step_size = 1.0;
  int pretrain_steps = 300;
  double pretrain_step_size = 0.5;
  int hidden = 16;
  int train_scenes = 8;
  int heldout_scenes = 8;
  double alpha = 1.0;
  double lambda = 0.05;
  std::string inlier_entropy_sign = "as_printed";
};

struct ReportOptions {
  std::vector<std::string> entries;
};

std::string FormatReal(double v) { return fmt::format("{:.17g}", v); }

std::string FormatOptional(const std::optional<double>& v) {
  return v ? FormatReal(*v) : std::string();
}

void RequireExisting(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("{} not found: {}", what, path.string()));
  }
}

bool EndsWith(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

// Expands directories to their files ending in `suffix`; plain files are kept.
// The result is sorted so that outputs never depend on argument order.
std::vector<fs::path> ExpandInputs(const std::vector<std::string>& inputs,
                                   std::string_view suffix) {
  std::vector<fs::path> files;
  for (const std::string& item : inputs) {
    const fs::path path(item);
    RequireExisting(path, "input");
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() &&
            EndsWith(entry.path().filename().string(), suffix)) {
          files.push_back(entry.path());
        }
      }
    } else {
      files.push_back(path);
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

std::string StemWithSuffix(const fs::path& path, std::string_view suffix) {
  const std::string name = path.filename().string();
  if (!EndsWith(name, suffix)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("expected a '{}' file, got {}", suffix,
                            path.string()));
  }
  return name.substr(0, name.size() - suffix.size());
}

void RequireUniqueStems(const std::vector<std::string>& stems) {
  std::map<std::string, int> seen;
  for (const std::string& stem : stems) {
    if (++seen[stem] > 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("two inputs share the stem '{}'", stem));
    }
  }
}

void PrepareOutDir(const fs::path& out) {
  if (out.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--out is required");
  }
  if (fs::exists(out) && !fs::is_directory(out)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("--out is not a directory: {}", out.string()));
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, fmt::format("cannot create {}: {}",
                                            out.string(), ec.message()));
  }
}

std::vector<std::uint8_t> EncodeScoreMap(const ScoreMap<double>& map) {
  const auto& v = map.values();
  const std::vector<Index> shape = {v.rows(), v.cols()};
  return encode_npy(shape, std::span<const double>(v.data(), v.size()));
}

ScoreMap<double> ScoreOne(ScoreMethod method, const ScoreConfig<double>& cfg,
                          const fs::path& input) {
  if (method != ScoreMethod::kMaskwise) {
    return score_logits(method, load_logits(input), cfg);
  }
  const std::string stem = StemWithSuffix(input, kMasksSuffix);
  const fs::path classes_path = input.parent_path() / (stem + kClassesSuffix);
  const NpyArray masks = read_npy(input);
  const NpyArray classes = read_npy(classes_path);
  const kernels::Buffer scores = kernels::maskwise_score_buffer(
      {masks.data, masks.shape}, {classes.data, classes.shape});
  return ScoreMap<double>(Eigen::Map<const PlaneMatrix<double>>(
      scores.data.data(), scores.shape[0], scores.shape[1]));
}

void RunScore(const CommonOptions& common, const ScoreOptions& opts,
              std::ostream& out) {
  const ScoreMethod method = ParseScoreMethod(opts.method);
  const ScoreConfig<double> cfg{opts.alpha};
  cfg.Validate();
  const bool maskwise = method == ScoreMethod::kMaskwise;
  const std::vector<fs::path> inputs =
      ExpandInputs(opts.inputs, maskwise ? kMasksSuffix : ".npy");
  if (inputs.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no input files found");
  }
  std::vector<std::string> stems;
  for (const fs::path& input : inputs) {
    if (maskwise) {
      const std::string stem = StemWithSuffix(input, kMasksSuffix);
      RequireExisting(input.parent_path() / (stem + kClassesSuffix),
                      "class scores");
      stems.push_back(stem);
    } else {
      stems.push_back(input.stem().string());
    }
  }
  RequireUniqueStems(stems);
  PrepareOutDir(common.out);

  OutputSet outputs;
  ParallelFor(inputs.size(), common.jobs, [&](std::size_t i) {
    const ScoreMap<double> map = ScoreOne(method, cfg, inputs[i]);
    outputs.Write(common.out / (stems[i] + ".npy"), EncodeScoreMap(map));
  });
  outputs.Commit();
  out << fmt::format("scored {} file(s) with method {}\n", inputs.size(),
                     opts.method);
}

void RunEval(const CommonOptions& common, const EvalOptions& opts,
             std::ostream& out) {
  const EvalMode mode = ParseEvalMode(opts.mode);
  const BinConfig bins{opts.lo, opts.hi, opts.bins};
  if (mode == EvalMode::kQuantized) bins.Validate();
  const fs::path label_dir(opts.labels);
  RequireExisting(label_dir, "label directory");
  const std::vector<fs::path> score_files = ExpandInputs(opts.scores, ".npy");
  std::vector<fs::path> label_files;
  std::vector<std::string> stems;
  for (const fs::path& score : score_files) {
    const std::string stem = score.stem().string();
    const fs::path label = label_dir / (stem + ".png");
    if (!fs::exists(label)) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("score map {} has no matching label {}",
                              score.string(), label.string()));
    }
    stems.push_back(stem);
    label_files.push_back(label);
  }
  if (score_files.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no score/label pairs found");
  }
  RequireUniqueStems(stems);
  PrepareOutDir(common.out);

  const auto fresh = [&] {
    return mode == EvalMode::kExact ? EvalAccumulator::Exact()
                                    : EvalAccumulator::Quantized(bins);
  };
  std::vector<EvalAccumulator> shards(score_files.size(), fresh());
  ParallelFor(score_files.size(), common.jobs, [&](std::size_t i) {
    shards[i].add(load_scores(score_files[i]), load_labels(label_files[i]));
  });
  EvalAccumulator total = fresh();
  for (const EvalAccumulator& shard : shards) total.merge_from(shard);
  if (total.clamped() > 0) {
    logging::Warn(fmt::format("{} score(s) outside [{}, {}] were clamped",
                              total.clamped(), bins.lo, bins.hi));
  }

  const std::string json = summarize(total).ToJson();
  OutputSet outputs;
  outputs.Write(common.out / "metrics.json", json);
  if (opts.curve) {
    outputs.Write(common.out / "pr_curve.csv", export_pr_curve(total).ToCsv());
  }
  outputs.Commit();
  out << json;
}

SynthConfig MakeSynthConfig(const CommonOptions& common,
                            const SynthOptions& opts) {
  SynthConfig cfg;
  cfg.num_classes = opts.num_classes;
  cfg.anomaly_id = opts.anomaly_id;
  cfg.ground_classes.clear();
  for (int id : opts.ground) {
    if (id < 0 || id > 254) {
      throw Error(ErrorCode::kConfig,
                  fmt::format("ground class id {} out of range", id));
    }
    cfg.ground_classes.push_back(static_cast<std::uint8_t>(id));
  }
  cfg.scale_min = opts.scale_min;
  cfg.scale_max = opts.scale_max;
  cfg.match_luminance = opts.match_luminance;
  cfg.feather_radius = opts.feather;
  cfg.max_placement_draws = opts.max_draws;
  cfg.seed = common.seed;
  cfg.Validate();
  return cfg;
}

void RunSynth(const CommonOptions& common, const SynthOptions& opts,
              std::ostream& out) {
  const SynthConfig cfg = MakeSynthConfig(common, opts);
  RequireExisting(opts.cutouts, "cutout library");
  if (opts.replay.empty()) {
    if (opts.images.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "synth needs --images (or --replay)");
    }
    RequireExisting(opts.images, "inlier manifest");
  } else {
    RequireExisting(opts.replay, "replay manifest");
  }
  PrepareOutDir(common.out);

  OutputSet outputs;
  const SynthSummary summary =
      opts.replay.empty()
          ? synthesize_dataset(opts.images, opts.cutouts, cfg, common.out,
                               outputs, common.jobs)
          : replay_dataset(opts.replay, opts.cutouts, cfg, common.out, outputs,
                           common.jobs);
  outputs.Commit();
  out << fmt::format("wrote {} composite(s), skipped {}\n",
                     summary.records.size(), summary.skipped.size());
}

InlierEntropySign ParseEntropySign(std::string_view name) {
  if (name == "as_printed") return InlierEntropySign::kAsPrinted;
  if (name == "penalize") return InlierEntropySign::kPenalize;
  throw Error(ErrorCode::kConfig,
              fmt::format("unknown inlier entropy sign '{}' (expected "
                          "as_printed, penalize)",
                          name));
}

void RunTrainToy(const CommonOptions& common, const ToyOptions& opts,
                 std::ostream& out) {
  ToyExperimentConfig cfg;
  if (opts.steps < 1 || opts.pretrain_steps < 0 || opts.hidden < 1 ||
      opts.train_scenes < 1 || opts.heldout_scenes < 1) {
    throw Error(ErrorCode::kConfig,
                "steps, hidden and scene counts must be positive");
  }
  cfg.steps = opts.steps;
  cfg.step_size = opts.step_size;
  cfg.pretrain_steps = opts.pretrain_steps;
  cfg.pretrain_step_size = opts.pretrain_step_size;
  cfg.hidden = opts.hidden;
  cfg.train_scenes = static_cast<std::size_t>(opts.train_scenes);
  cfg.heldout_scenes = static_cast<std::size_t>(opts.heldout_scenes);
  cfg.hp.alpha = opts.alpha;
  cfg.hp.lambda = opts.lambda;
  cfg.hp.inlier_entropy_sign = ParseEntropySign(opts.inlier_entropy_sign);
  cfg.hp.Validate();
  cfg.spec.Validate();
  PrepareOutDir(common.out);

  const LossVariant variants[] = {LossVariant::kEel, LossVariant::kLinear};
  const ToyExperimentResult result =
      run_toy_experiment(cfg, common.seed, variants);

  std::string trace = "variant,step,loss\n";
  std::string gaps = "seed,model,energy_gap,auprc_eel,auprc_msp,fpr95_eel\n";
  gaps += fmt::format("{},pretrained,{},,,\n", result.seed,
                      FormatReal(result.pretrained_gap));
  OutputSet outputs;
  for (const ToyVariantOutcome& v : result.variants) {
    const std::string_view name = LossVariantName(v.variant);
    const auto& loss = v.result.loss_trace;
    for (std::size_t s = 0; s < loss.size(); ++s) {
      trace += fmt::format("{},{},{}\n", name, s, FormatReal(loss[s]));
    }
    gaps += fmt::format("{},{},{},{},{},{}\n", result.seed, name,
                        FormatReal(v.energy_gap), FormatReal(v.auprc_eel),
                        FormatReal(v.auprc_msp), FormatReal(v.fpr95_eel));
    const auto& params = v.result.model.params();
    const std::vector<Index> shape = {params.size()};
    outputs.Write(common.out / fmt::format("model_{}.npy", name),
                  encode_npy(shape, std::span<const double>(params.data(),
                                                            params.size())));
  }
  outputs.Write(common.out / "loss_trace.csv", trace);
  outputs.Write(common.out / "gaps.csv", gaps);
  outputs.Commit();
  out << gaps;
}

void RunReport(const CommonOptions& common, const ReportOptions& opts,
               std::ostream& out) {
  std::vector<std::pair<std::string, fs::path>> rows;
  for (const std::string& entry : opts.entries) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == entry.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("report entries look like subset=metrics.json, "
                              "got '{}'",
                              entry));
    }
    rows.emplace_back(entry.substr(0, eq), fs::path(entry.substr(eq + 1)));
    RequireExisting(rows.back().second, "metrics file");
  }
  std::string csv =
      "subset,auprc,fpr95,num_pos,num_neg,num_void,clamped,mode\n";
  for (const auto& [subset, path] : rows) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    const MetricsReport r =
        MetricsReport::FromJson(std::string(bytes.begin(), bytes.end()));
    csv += fmt::format("{},{},{},{},{},{},{},{}\n", subset,
                       FormatOptional(r.auprc), FormatOptional(r.fpr95),
                       r.num_pos, r.num_neg, r.num_void, r.clamped,
                       EvalModeName(r.mode));
  }
  PrepareOutDir(common.out);
  OutputSet outputs;
  outputs.Write(common.out / "report.csv", csv);
  outputs.Commit();
  out << csv;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Energy-entropy anomaly segmentation tools", "oodseg"};
  app.set_version_flag("--version", std::string(kernels::version()));
  app.set_config("--config", "", "TOML/INI config file (flags override it)");
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  app.add_option("--out", common.out, "Output directory");
  app.add_option("--seed", common.seed, "Seed for all randomness");
  app.add_option("--jobs", common.jobs, "Worker threads")
      ->check(CLI::PositiveNumber);

  ScoreOptions score;
  CLI::App* score_cmd = app.add_subcommand("score", "Logits NPY -> score NPY");
  score_cmd->add_option("inputs", score.inputs, "Logit files or directories")
      ->required();
  score_cmd->add_option("--method", score.method,
                        "msp | energy | entropy | eel | maskwise");
  score_cmd->add_option("--alpha", score.alpha, "Entropy weight for eel");

  EvalOptions eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Score maps + label PNGs -> metrics");
  eval_cmd->add_option("scores", eval.scores, "Score files or directories")
      ->required();
  eval_cmd->add_option("--labels", eval.labels, "Directory of label PNGs")
      ->required();
  eval_cmd->add_option("--mode", eval.mode, "exact | quantized");
  eval_cmd->add_option("--bins", eval.bins, "Histogram bins (quantized)");
  eval_cmd->add_option("--lo", eval.lo, "Lowest binned score (quantized)");
  eval_cmd->add_option("--hi", eval.hi, "Highest binned score (quantized)");
  eval_cmd->add_flag("--curve", eval.curve, "Also write pr_curve.csv");

  SynthOptions synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Paste cutouts into inlier images");
  synth_cmd->add_option("--images", synth.images, "Inlier manifest (JSONL)");
  synth_cmd->add_option("--cutouts", synth.cutouts, "Cutout library (JSONL)")
      ->required();
  synth_cmd->add_option("--replay", synth.replay,
                        "Re-render a previous manifest.jsonl");
  synth_cmd->add_option("--num-classes", synth.num_classes);
  synth_cmd->add_option("--anomaly-id", synth.anomaly_id);
  synth_cmd->add_option("--ground", synth.ground, "Ground class ids");
  synth_cmd->add_option("--scale-min", synth.scale_min);
  synth_cmd->add_option("--scale-max", synth.scale_max);
  synth_cmd->add_option("--match-luminance", synth.match_luminance);
  synth_cmd->add_option("--feather", synth.feather, "Alpha feather radius");
  synth_cmd->add_option("--max-draws", synth.max_draws);

  ToyOptions toy;
  CLI::App* toy_cmd =
      app.add_subcommand("train-toy", "Toy EEL vs. linear-energy experiment");
  toy_cmd->add_option("--steps", toy.steps);
  toy_cmd->add_option("--step-size", toy.step_size);
  toy_cmd->add_option("--pretrain-steps", toy.pretrain_steps);
  toy_cmd->add_option("--pretrain-step-size", toy.pretrain_step_size);
  toy_cmd->add_option("--hidden", toy.hidden);
  toy_cmd->add_option("--train-scenes", toy.train_scenes);
  toy_cmd->add_option("--heldout-scenes", toy.heldout_scenes);
  toy_cmd->add_option("--alpha", toy.alpha);
  toy_cmd->add_option("--lambda", toy.lambda);
  toy_cmd->add_option("--inlier-entropy-sign", toy.inlier_entropy_sign,
                      "as_printed | penalize");

  ReportOptions report;
  CLI::App* report_cmd =
      app.add_subcommand("report", "Metrics JSONs -> one CSV table");
  report_cmd->add_option("entries", report.entries, "subset=metrics.json ...")
      ->required();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    out << fmt::format("seed: {}\n", common.seed);
    if (score_cmd->parsed()) RunScore(common, score, out);
    if (eval_cmd->parsed()) RunEval(common, eval, out);
    if (synth_cmd->parsed()) RunSynth(common, synth, out);
    if (toy_cmd->parsed()) RunTrainToy(common, toy, out);
    if (report_cmd->parsed()) RunReport(common, report, out);
  } catch (const Error& e) {
    err << fmt::format("error [{}]: {}\n", ErrorCodeName(e.code()), e.what());
    return e.is_validation() ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << fmt::format("error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace oodseg::cli
