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

#ifndef OODSEG_METRICS_H_
#define OODSEG_METRICS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodseg/raster.h"

namespace oodseg {

enum class EvalMode { kExact, kQuantized };

std::string_view EvalModeName(EvalMode mode);
EvalMode ParseEvalMode(std::string_view name);

/// Affine score -> bin mapping for the quantized accumulator.
struct BinConfig {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = 65536;

  void Validate() const;
  std::size_t BinOf(double score) const;
  double LowerEdge(std::size_t bin) const;

  friend bool operator==(const BinConfig&, const BinConfig&) = default;
};

// Mergeable pixel statistic. Exact mode keeps every valid score; quantized
// mode keeps one histogram per class. Void pixels only bump num_void().
// Single writer; shard across accumulators and merge for parallelism.
class EvalAccumulator {
 public:
  static EvalAccumulator Exact();
  static EvalAccumulator Quantized(const BinConfig& bins);

  EvalMode mode() const { return mode_; }
  const BinConfig& bins() const { return bins_; }

  void add(const ScoreMap<double>& scores, const TriLabelMask& labels);
  void add_pixel(double score, PixelLabel label);
  void merge_from(const EvalAccumulator& other);

  std::uint64_t num_positives() const { return num_pos_; }
  std::uint64_t num_negatives() const { return num_neg_; }
  std::uint64_t num_void() const { return num_void_; }
  // Quantized mode: scores that fell outside [lo, hi] and were clamped.
  std::uint64_t clamped() const { return clamped_; }
  bool empty() const { return num_pos_ + num_neg_ == 0; }

  std::span<const double> positive_scores() const { return pos_scores_; }
  std::span<const double> negative_scores() const { return neg_scores_; }
  std::span<const std::uint64_t> positive_histogram() const { return pos_hist_; }
  std::span<const std::uint64_t> negative_histogram() const { return neg_hist_; }

 private:
  EvalAccumulator(EvalMode mode, BinConfig bins);

  EvalMode mode_;
  BinConfig bins_;
  std::vector<double> pos_scores_;
  std::vector<double> neg_scores_;
  std::vector<std::uint64_t> pos_hist_;
  std::vector<std::uint64_t> neg_hist_;
  std::uint64_t num_pos_ = 0;
  std::uint64_t num_neg_ = 0;
  std::uint64_t num_void_ = 0;
  std::uint64_t clamped_ = 0;
};

EvalAccumulator accumulate(EvalAccumulator acc, const ScoreMap<double>& scores,
                           const TriLabelMask& labels);
EvalAccumulator merge(EvalAccumulator a, const EvalAccumulator& b);

/// Cumulative counts after admitting one tie group (all pixels with score >=
/// threshold). Groups are in descending threshold order.
struct SweepStep {
  double threshold;
  std::uint64_t true_positives;
  std::uint64_t false_positives;
};

std::vector<SweepStep> threshold_sweep(const EvalAccumulator& acc);

/// Step-interpolated average precision, sum_k (R_k - R_{k-1}) * P_k.
/// nullopt when there are no positives.
std::optional<double> auprc(const EvalAccumulator& acc);

/// FPR at the first (highest) tie group whose TPR reaches `target`.
/// nullopt when positives or negatives are missing.
std::optional<double> fpr_at_tpr(const EvalAccumulator& acc,
                                 double target = 0.95);

struct PRPoint {
  double threshold;
  double recall;
  double precision;
  double fpr;
};

struct PRCurve {
  std::vector<PRPoint> points;

  /// Step-rule area under the points; equals auprc() of the source.
  double area() const;
  /// CSV with header `threshold,recall,precision,fpr`, 17 significant digits.
  std::string ToCsv() const;
};

PRCurve export_pr_curve(const EvalAccumulator& acc);

struct MetricsReport {
  std::optional<double> auprc;
  std::optional<double> fpr95;
  std::uint64_t num_pos = 0;
  std::uint64_t num_neg = 0;
  std::uint64_t num_void = 0;
  std::uint64_t clamped = 0;
  EvalMode mode = EvalMode::kExact;

  std::string ToJson() const;
  static MetricsReport FromJson(const std::string& text);
};

MetricsReport summarize(const EvalAccumulator& acc);

}  // namespace oodseg

#endif  // OODSEG_METRICS_H_
