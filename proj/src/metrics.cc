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

#include "oodseg/metrics.h"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "oodseg/error.h"

namespace oodseg {

std::string_view EvalModeName(EvalMode mode) {
  return mode == EvalMode::kExact ? "exact" : "quantized";
}

EvalMode ParseEvalMode(std::string_view name) {
  if (name == "exact") return EvalMode::kExact;
  if (name == "quantized") return EvalMode::kQuantized;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown eval mode '" + std::string(name) + "'");
}

void BinConfig::Validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw Error(ErrorCode::kInvalidArgument,
                "quantized range needs finite lo < hi");
  }
  if (bins < 1) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one bin");
  }
}

std::size_t BinConfig::BinOf(double score) const {
  if (score <= lo) return 0;
  if (score >= hi) return bins - 1;
  const double position = (score - lo) / (hi - lo) * static_cast<double>(bins);
  return std::min(static_cast<std::size_t>(position), bins - 1);
}

double BinConfig::LowerEdge(std::size_t bin) const {
  return lo + (hi - lo) * (static_cast<double>(bin) / static_cast<double>(bins));
}

EvalAccumulator::EvalAccumulator(EvalMode mode, BinConfig bins)
    : mode_(mode), bins_(bins) {
  if (mode_ == EvalMode::kQuantized) {
    bins_.Validate();
    pos_hist_.assign(bins_.bins, 0);
    neg_hist_.assign(bins_.bins, 0);
  }
}

EvalAccumulator EvalAccumulator::Exact() {
  return EvalAccumulator(EvalMode::kExact, BinConfig{});
}

EvalAccumulator EvalAccumulator::Quantized(const BinConfig& bins) {
  return EvalAccumulator(EvalMode::kQuantized, bins);
}

void EvalAccumulator::add_pixel(double score, PixelLabel label) {
  if (label == PixelLabel::kVoid) {
    ++num_void_;
    return;
  }
  const bool positive = label == PixelLabel::kAnomaly;
  if (positive) {
    ++num_pos_;
  } else {
    ++num_neg_;
  }
  if (mode_ == EvalMode::kExact) {
    (positive ? pos_scores_ : neg_scores_).push_back(score);
    return;
  }
  if (score < bins_.lo || score > bins_.hi) ++clamped_;
  ++(positive ? pos_hist_ : neg_hist_)[bins_.BinOf(score)];
}

void EvalAccumulator::add(const ScoreMap<double>& scores,
                          const TriLabelMask& labels) {
  if (scores.height() != labels.height() || scores.width() != labels.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "scores " + ShapeString(scores.height(), scores.width()) +
                    " vs labels " +
                    ShapeString(labels.height(), labels.width()));
  }
  const double* score = scores.values().data();
  const std::uint8_t* code = labels.codes().data();
  const Index n = labels.pixels();
  for (Index i = 0; i < n; ++i) {
    add_pixel(score[i], static_cast<PixelLabel>(code[i]));
  }
}

void EvalAccumulator::merge_from(const EvalAccumulator& other) {
  if (mode_ != other.mode_) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot merge exact and quantized accumulators");
  }
  if (mode_ == EvalMode::kQuantized) {
    if (!(bins_ == other.bins_)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cannot merge accumulators with different bin configs");
    }
    for (std::size_t b = 0; b < pos_hist_.size(); ++b) {
      pos_hist_[b] += other.pos_hist_[b];
      neg_hist_[b] += other.neg_hist_[b];
    }
  } else {
    pos_scores_.insert(pos_scores_.end(), other.pos_scores_.begin(),
                       other.pos_scores_.end());
    neg_scores_.insert(neg_scores_.end(), other.neg_scores_.begin(),
                       other.neg_scores_.end());
  }
  num_pos_ += other.num_pos_;
  num_neg_ += other.num_neg_;
  num_void_ += other.num_void_;
  clamped_ += other.clamped_;
}

EvalAccumulator accumulate(EvalAccumulator acc, const ScoreMap<double>& scores,
                           const TriLabelMask& labels) {
  acc.add(scores, labels);
  return acc;
}

EvalAccumulator merge(EvalAccumulator a, const EvalAccumulator& b) {
  a.merge_from(b);
  return a;
}

std::vector<SweepStep> threshold_sweep(const EvalAccumulator& acc) {
  std::vector<SweepStep> sweep;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  if (acc.mode() == EvalMode::kQuantized) {
    const auto pos = acc.positive_histogram();
    const auto neg = acc.negative_histogram();
    for (std::size_t b = pos.size(); b-- > 0;) {
      if (pos[b] == 0 && neg[b] == 0) continue;
      tp += pos[b];
      fp += neg[b];
      sweep.push_back({acc.bins().LowerEdge(b), tp, fp});
    }
    return sweep;
  }

  std::vector<double> pos(acc.positive_scores().begin(),
                          acc.positive_scores().end());
  std::vector<double> neg(acc.negative_scores().begin(),
                          acc.negative_scores().end());
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < pos.size() || j < neg.size()) {
    double threshold;
    if (i == pos.size()) {
      threshold = neg[j];
    } else if (j == neg.size()) {
      threshold = pos[i];
    } else {
      threshold = std::max(pos[i], neg[j]);
    }
    while (i < pos.size() && pos[i] == threshold) {
      ++i;
      ++tp;
    }
    while (j < neg.size() && neg[j] == threshold) {
      ++j;
      ++fp;
    }
    sweep.push_back({threshold, tp, fp});
  }
  return sweep;
}

std::optional<double> auprc(const EvalAccumulator& acc) {
  if (acc.num_positives() == 0) return std::nullopt;
  return export_pr_curve(acc).area();
}

std::optional<double> fpr_at_tpr(const EvalAccumulator& acc, double target) {
  if (acc.num_positives() == 0 || acc.num_negatives() == 0) {
    return std::nullopt;
  }
  const double positives = static_cast<double>(acc.num_positives());
  const double negatives = static_cast<double>(acc.num_negatives());
  for (const SweepStep& step : threshold_sweep(acc)) {
    if (static_cast<double>(step.true_positives) / positives >= target) {
      return static_cast<double>(step.false_positives) / negatives;
    }
  }
  // Unreachable for target <= 1: the last group has TPR 1.
  return std::nullopt;
}

double PRCurve::area() const {
  double area = 0.0;
  double previous_recall = 0.0;
  for (const PRPoint& point : points) {
    area += (point.recall - previous_recall) * point.precision;
    previous_recall = point.recall;
  }
  return area;
}

std::string PRCurve::ToCsv() const {
  std::string out = "threshold,recall,precision,fpr\n";
  for (const PRPoint& p : points) {
    out += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", p.threshold,
                       p.recall, p.precision, p.fpr);
  }
  return out;
}

PRCurve export_pr_curve(const EvalAccumulator& acc) {
  if (acc.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot export a PR curve from an empty accumulator");
  }
  const double positives = static_cast<double>(acc.num_positives());
  const double negatives = static_cast<double>(acc.num_negatives());
  PRCurve curve;
  for (const SweepStep& step : threshold_sweep(acc)) {
    const double tp = static_cast<double>(step.true_positives);
    const double fp = static_cast<double>(step.false_positives);
    curve.points.push_back({
        step.threshold,
        positives > 0 ? tp / positives : 0.0,
        tp / (tp + fp),
        negatives > 0 ? fp / negatives : 0.0,
    });
  }
  return curve;
}

MetricsReport summarize(const EvalAccumulator& acc) {
  MetricsReport report;
  report.auprc = auprc(acc);
  report.fpr95 = fpr_at_tpr(acc, 0.95);
  report.num_pos = acc.num_positives();
  report.num_neg = acc.num_negatives();
  report.num_void = acc.num_void();
  report.clamped = acc.clamped();
  report.mode = acc.mode();
  return report;
}

std::string MetricsReport::ToJson() const {
  nlohmann::ordered_json json;
  json["auprc"] = auprc ? nlohmann::ordered_json(*auprc) : nlohmann::ordered_json(nullptr);
  json["fpr95"] = fpr95 ? nlohmann::ordered_json(*fpr95) : nlohmann::ordered_json(nullptr);
  json["num_pos"] = num_pos;
  json["num_neg"] = num_neg;
  json["num_void"] = num_void;
  json["clamped"] = clamped;
  json["mode"] = EvalModeName(mode);
  json["interpolation"] = "step";
  return json.dump(2) + "\n";
}

MetricsReport MetricsReport::FromJson(const std::string& text) {
  nlohmann::json json;
  try {
    json = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile,
                std::string("metrics JSON: ") + e.what());
  }
  try {
    MetricsReport report;
    if (!json.at("auprc").is_null()) report.auprc = json["auprc"].get<double>();
    if (!json.at("fpr95").is_null()) report.fpr95 = json["fpr95"].get<double>();
    report.num_pos = json.at("num_pos").get<std::uint64_t>();
    report.num_neg = json.at("num_neg").get<std::uint64_t>();
    report.num_void = json.at("num_void").get<std::uint64_t>();
    report.clamped = json.at("clamped").get<std::uint64_t>();
    if (json.contains("mode")) {
      report.mode = ParseEvalMode(json["mode"].get<std::string>());
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile,
                std::string("metrics JSON: ") + e.what());
  }
}

}  // namespace oodseg
