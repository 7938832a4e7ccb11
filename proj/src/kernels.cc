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

#include "oodseg/kernels.h"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace oodseg::kernels {
namespace {

void CheckShape(std::span<const Index> shape, std::size_t length,
                std::size_t rank, std::string_view what) {
  if (shape.size() != rank) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{} must have rank {}, got shape [{}]", what, rank,
                            fmt::join(shape, ",")));
  }
  Index product = 1;
  for (Index d : shape) {
    if (d < 1) {
      throw Error(ErrorCode::kShapeMismatch,
                  fmt::format("{} has an empty dimension: [{}]", what,
                              fmt::join(shape, ",")));
    }
    product *= d;
  }
  if (static_cast<std::size_t>(product) != length) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{} shape [{}] needs {} values, buffer has {}",
                            what, fmt::join(shape, ","), product, length));
  }
}

PlaneMatrix<double> AsPlane(std::span<const double> data, Index rows,
                            Index cols) {
  return Eigen::Map<const PlaneMatrix<double>>(data.data(), rows, cols);
}

Buffer FromScoreMap(const ScoreMap<double>& map) {
  const auto& v = map.values();
  return Buffer{std::vector<double>(v.data(), v.data() + v.size()),
                {v.rows(), v.cols()}};
}

}  // namespace

std::string_view version() { return OODSEG_VERSION; }

LogitMap<double> logits_from(const BufferView& view) {
  CheckShape(view.shape, view.data.size(), 3, "logits");
  const Index c = view.shape[0];
  const Index h = view.shape[1];
  const Index w = view.shape[2];
  return LogitMap<double>(h, w, AsPlane(view.data, c, h * w));
}

TriLabelMask mask_from(const LabelView& view) {
  CheckShape(view.shape, view.data.size(), 2, "label mask");
  return TriLabelMask(Eigen::Map<const ByteMatrix>(
      view.data.data(), view.shape[0], view.shape[1]));
}

ScoreMap<double> scores_from(const BufferView& view) {
  CheckShape(view.shape, view.data.size(), 2, "score map");
  return ScoreMap<double>(AsPlane(view.data, view.shape[0], view.shape[1]));
}

Buffer score_buffer(ScoreMethod method, const BufferView& logits,
                    double alpha) {
  ScoreConfig<double> config{alpha};
  config.Validate();
  return FromScoreMap(score_logits(method, logits_from(logits), config));
}

Buffer maskwise_score_buffer(const BufferView& masks,
                             const BufferView& class_scores) {
  CheckShape(masks.shape, masks.data.size(), 3, "mask logits");
  CheckShape(class_scores.shape, class_scores.data.size(), 2, "class scores");
  const Index n = masks.shape[0];
  const Index h = masks.shape[1];
  const Index w = masks.shape[2];
  MaskPrediction<double> pred(
      h, w, AsPlane(masks.data, n, h * w),
      AsPlane(class_scores.data, class_scores.shape[0], class_scores.shape[1]));
  return FromScoreMap(maskwise_score(pred));
}

LossKind ParseLossKind(std::string_view name) {
  if (name == "eel") return LossKind::kEel;
  if (name == "consistency") return LossKind::kConsistency;
  if (name == "linear") return LossKind::kLinearEnergy;
  throw Error(ErrorCode::kInvalidArgument,
              fmt::format("unknown loss '{}' (expected eel, consistency, "
                          "linear)",
                          name));
}

LossOutput loss_buffer(LossKind kind, const BufferView& logits,
                       const LabelView& mask, const BufferView* reference,
                       const HyperParams<double>& hp) {
  const std::vector<LogitMap<double>> batch = {logits_from(logits)};
  const std::vector<TriLabelMask> masks = {mask_from(mask)};
  LossResult<double> result;
  switch (kind) {
    case LossKind::kEel:
      result = eel_loss<double>(batch, masks, hp);
      break;
    case LossKind::kLinearEnergy:
      result = linear_energy_loss<double>(batch, masks);
      break;
    case LossKind::kConsistency: {
      if (reference == nullptr) {
        throw Error(ErrorCode::kInvalidArgument,
                    "consistency loss needs reference logits");
      }
      const std::vector<LogitMap<double>> ref = {logits_from(*reference)};
      result = consistency_loss<double>(batch, ref, masks);
      break;
    }
  }
  LossOutput out;
  out.value = result.value;
  out.grad.shape = logits.shape;
  const PlaneMatrix<double>& g = result.grad.front();
  out.grad.data.assign(g.data(), g.data() + g.size());
  return out;
}

MetricsReport metrics_buffers(std::span<const BufferView> scores,
                              std::span<const LabelView> labels, EvalMode mode,
                              const BinConfig& bins) {
  if (scores.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no score maps given");
  }
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{} score maps but {} label masks", scores.size(),
                            labels.size()));
  }
  EvalAccumulator acc = mode == EvalMode::kExact
                            ? EvalAccumulator::Exact()
                            : EvalAccumulator::Quantized(bins);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    acc.add(scores_from(scores[i]), mask_from(labels[i]));
  }
  return summarize(acc);
}

}  // namespace oodseg::kernels
