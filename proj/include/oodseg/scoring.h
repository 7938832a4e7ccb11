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

#ifndef OODSEG_SCORING_H_
#define OODSEG_SCORING_H_

#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "oodseg/error.h"
#include "oodseg/raster.h"

namespace oodseg {

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Entropy weight of the combined score; alpha >= 0.
template <typename Scalar = double>
struct ScoreConfig {
  Scalar alpha = Scalar(1);

  void Validate() const {
    if (!std::isfinite(static_cast<double>(alpha)) || alpha < Scalar(0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "alpha must be finite and nonnegative");
    }
  }
};

enum class ScoreMethod { kMsp, kEnergy, kEntropy, kEel, kMaskwise };

inline ScoreMethod ParseScoreMethod(std::string_view name) {
  if (name == "msp") return ScoreMethod::kMsp;
  if (name == "energy") return ScoreMethod::kEnergy;
  if (name == "entropy") return ScoreMethod::kEntropy;
  if (name == "eel") return ScoreMethod::kEel;
  if (name == "maskwise") return ScoreMethod::kMaskwise;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown score method '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Column kernels. The argument is a C x N matrix whose columns are pixels; all
// per-pixel reductions work on max-shifted logits z = y - max(y).
// ---------------------------------------------------------------------------

template <typename Derived>
RowVector<typename Derived::Scalar> column_max(
    const Eigen::MatrixBase<Derived>& logits) {
  return logits.colwise().maxCoeff();
}

/// log(sum(exp(y))) per column.
template <typename Derived>
RowVector<typename Derived::Scalar> logsumexp_columns(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const RowVector<Scalar> peak = column_max(logits);
  const RowVector<Scalar> total =
      (logits.rowwise() - peak).array().exp().colwise().sum();
  return peak + total.array().log().matrix();
}

template <typename Derived>
PlaneMatrix<typename Derived::Scalar> softmax_columns(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  PlaneMatrix<Scalar> expz =
      (logits.rowwise() - column_max(logits)).array().exp().matrix();
  const RowVector<Scalar> total = expz.colwise().sum();
  expz.array().rowwise() /= total.array();
  return expz;
}

/// Shannon entropy (natural log) of softmax(y) per column. Uses
/// H = log S - sum_i p_i z_i, which keeps 0*log 0 terms at exactly 0.
template <typename Derived>
RowVector<typename Derived::Scalar> entropy_columns(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const PlaneMatrix<Scalar> shifted = logits.rowwise() - column_max(logits);
  const PlaneMatrix<Scalar> expz = shifted.array().exp().matrix();
  const RowVector<Scalar> total = expz.colwise().sum();
  const RowVector<Scalar> weighted =
      expz.cwiseProduct(shifted).colwise().sum();
  RowVector<Scalar> entropy =
      total.array().log() - weighted.array() / total.array();
  // Rounding can leave -1e-17 on one-hot columns.
  return entropy.cwiseMax(Scalar(0));
}

/// Numerically stable logistic function.
template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  if (x > Scalar(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace internal {

template <typename Scalar>
ScoreMap<Scalar> AsScoreMap(const RowVector<Scalar>& per_pixel, Index height,
                            Index width) {
  return ScoreMap<Scalar>(
      Eigen::Map<const PlaneMatrix<Scalar>>(per_pixel.data(), height, width));
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Pixel-wise scores on logit maps.
// ---------------------------------------------------------------------------

/// Per-pixel class probabilities, layout [C,H,W] (C rows of H*W pixels).
template <typename Scalar>
PlaneMatrix<Scalar> softmax_channel(const LogitMap<Scalar>& logits) {
  return softmax_columns(logits.values());
}

/// 1 - max softmax probability. max_i p_i = exp(0)/S after the max shift.
template <typename Scalar>
ScoreMap<Scalar> msp_score(const LogitMap<Scalar>& logits) {
  const auto& y = logits.values();
  const RowVector<Scalar> total =
      (y.rowwise() - column_max(y)).array().exp().colwise().sum();
  const RowVector<Scalar> score = Scalar(1) - total.array().inverse();
  return internal::AsScoreMap(score, logits.height(), logits.width());
}

/// logsumexp of the logits per pixel.
template <typename Scalar>
ScoreMap<Scalar> energy_map(const LogitMap<Scalar>& logits) {
  return internal::AsScoreMap<Scalar>(logsumexp_columns(logits.values()),
                                      logits.height(), logits.width());
}

template <typename Scalar>
ScoreMap<Scalar> entropy_map(const LogitMap<Scalar>& logits) {
  return internal::AsScoreMap<Scalar>(entropy_columns(logits.values()),
                                      logits.height(), logits.width());
}

/// alpha * entropy - energy. High where the model is both uncertain and
/// weakly activated.
template <typename Scalar>
ScoreMap<Scalar> eel_score(const LogitMap<Scalar>& logits,
                           const ScoreConfig<Scalar>& config = {}) {
  config.Validate();
  const RowVector<Scalar> score =
      config.alpha * entropy_columns(logits.values()) -
      logsumexp_columns(logits.values());
  return internal::AsScoreMap(score, logits.height(), logits.width());
}

// ---------------------------------------------------------------------------
// Mask-wise predictions.
// ---------------------------------------------------------------------------

/// N mask logit planes plus, per mask, C class scores.
template <typename Scalar>
class MaskPrediction {
 public:
  /// `masks` is N x (H*W); `class_scores` is N x C.
  MaskPrediction(Index height, Index width, PlaneMatrix<Scalar> masks,
                 PlaneMatrix<Scalar> class_scores)
      : height_(height),
        width_(width),
        masks_(std::move(masks)),
        class_scores_(std::move(class_scores)) {
    if (height_ < 1 || width_ < 1 || masks_.cols() != height_ * width_) {
      throw Error(ErrorCode::kShapeMismatch,
                  "mask logits must be N x (H*W) for " +
                      ShapeString(height_, width_));
    }
    if (masks_.rows() < 1 || class_scores_.rows() != masks_.rows()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "need N >= 1 masks with one class-score row each, got " +
                      std::to_string(masks_.rows()) + " masks and " +
                      std::to_string(class_scores_.rows()) + " rows");
    }
    if (class_scores_.cols() < 2) {
      throw Error(ErrorCode::kShapeMismatch, "need at least 2 classes");
    }
    internal::RequireFinite(masks_, "mask logits");
    internal::RequireFinite(class_scores_, "class scores");
  }

  Index masks_count() const { return masks_.rows(); }
  Index classes() const { return class_scores_.cols(); }
  Index height() const { return height_; }
  Index width() const { return width_; }
  const PlaneMatrix<Scalar>& masks() const { return masks_; }
  const PlaneMatrix<Scalar>& class_scores() const { return class_scores_; }

  PlaneMatrix<Scalar> mask_probabilities() const {
    return masks_.unaryExpr([](Scalar x) { return sigmoid(x); });
  }

 private:
  Index height_;
  Index width_;
  PlaneMatrix<Scalar> masks_;
  PlaneMatrix<Scalar> class_scores_;
};

/// Dense logits from a mask prediction: y = c^T * sigmoid(m).
template <typename Scalar>
LogitMap<Scalar> maskwise_logits(const MaskPrediction<Scalar>& pred) {
  return LogitMap<Scalar>(
      pred.height(), pred.width(),
      pred.class_scores().transpose() * pred.mask_probabilities());
}

/// 1 - max over classes of softmax(c)^T * sigmoid(m), with each mask's class
/// scores normalized on their own.
template <typename Scalar>
ScoreMap<Scalar> maskwise_score(const MaskPrediction<Scalar>& pred) {
  const PlaneMatrix<Scalar> class_probs =
      softmax_columns(pred.class_scores().transpose());
  const PlaneMatrix<Scalar> votes = class_probs * pred.mask_probabilities();
  const RowVector<Scalar> score = Scalar(1) - column_max(votes).array();
  return internal::AsScoreMap(score, pred.height(), pred.width());
}

/// Dispatch for the pixel-wise methods.
template <typename Scalar>
ScoreMap<Scalar> score_logits(ScoreMethod method, const LogitMap<Scalar>& logits,
                              const ScoreConfig<Scalar>& config = {}) {
  switch (method) {
    case ScoreMethod::kMsp: return msp_score(logits);
    case ScoreMethod::kEnergy: return energy_map(logits);
    case ScoreMethod::kEntropy: return entropy_map(logits);
    case ScoreMethod::kEel: return eel_score(logits, config);
    case ScoreMethod::kMaskwise: break;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "maskwise scoring needs a mask prediction, not a logit map");
}

}  // namespace oodseg

#endif  // OODSEG_SCORING_H_
