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

#ifndef OODSEG_KERNELS_H_
#define OODSEG_KERNELS_H_

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "oodseg/losses.h"
#include "oodseg/metrics.h"
#include "oodseg/raster.h"
#include "oodseg/scoring.h"

// Flat-buffer entry points for foreign callers. Inputs are caller-owned
// C-order float64 (or uint8 for labels) buffers plus a shape; outputs are new
// buffers. Every kernel forwards to the same templated code the CLI uses, so
// results are bit-identical. Failures raise oodseg::Error.
namespace oodseg::kernels {

std::string_view version();

struct BufferView {
  std::span<const double> data;
  std::vector<Index> shape;
};

struct LabelView {
  std::span<const std::uint8_t> data;
  std::vector<Index> shape;  // [H, W]
};

struct Buffer {
  std::vector<double> data;
  std::vector<Index> shape;
};

/// Pixel-wise score of [C,H,W] logits -> [H,W].
Buffer score_buffer(ScoreMethod method, const BufferView& logits, double alpha);

/// Mask-wise score of [N,H,W] mask logits and [N,C] class scores -> [H,W].
Buffer maskwise_score_buffer(const BufferView& masks,
                             const BufferView& class_scores);

enum class LossKind { kEel, kConsistency, kLinearEnergy };

LossKind ParseLossKind(std::string_view name);

struct LossOutput {
  double value = 0.0;
  Buffer grad;  // same shape as the logits
};

/// One [C,H,W] instance with its [H,W] tri-label mask. `reference` is required
/// for kConsistency and ignored otherwise.
LossOutput loss_buffer(LossKind kind, const BufferView& logits,
                       const LabelView& mask, const BufferView* reference,
                       const HyperParams<double>& hp);

/// Metrics over paired [H,W] score and label buffers. "No positives" comes back
/// as an empty auprc, not as an error.
MetricsReport metrics_buffers(std::span<const BufferView> scores,
                              std::span<const LabelView> labels, EvalMode mode,
                              const BinConfig& bins = {});

// Conversions shared with the test harness.
LogitMap<double> logits_from(const BufferView& view);
TriLabelMask mask_from(const LabelView& view);
ScoreMap<double> scores_from(const BufferView& view);

}  // namespace oodseg::kernels

#endif  // OODSEG_KERNELS_H_
