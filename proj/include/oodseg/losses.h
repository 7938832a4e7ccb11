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

#ifndef OODSEG_LOSSES_H_
#define OODSEG_LOSSES_H_

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oodseg/error.h"
#include "oodseg/internal/summation.h"
#include "oodseg/raster.h"
#include "oodseg/scoring.h"

namespace oodseg {

// Sign of the entropy term inside the inlier expectation of the EEL loss.
// kAsPrinted subtracts alpha*H for inliers (so minimizing the loss raises
// inlier entropy); kPenalize adds it instead.
enum class InlierEntropySign { kAsPrinted, kPenalize };

template <typename Scalar = double>
struct HyperParams {
  Scalar alpha = Scalar(1);
  Scalar lambda = Scalar(0.05);
  Scalar lambda_ce = Scalar(1);
  InlierEntropySign inlier_entropy_sign = InlierEntropySign::kAsPrinted;

  void Validate() const {
    for (Scalar v : {alpha, lambda, lambda_ce}) {
      if (!std::isfinite(static_cast<double>(v)) || v < Scalar(0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "hyperparameters must be finite and nonnegative");
      }
    }
  }
};

/// Loss value plus d(value)/d(logits), one C x (H*W) matrix per batch item.
/// An empty `grad` stands for an all-zero gradient (external scalar terms).
template <typename Scalar>
struct LossResult {
  Scalar value = Scalar(0);
  std::vector<PlaneMatrix<Scalar>> grad;

  static LossResult Constant(Scalar value) { return LossResult{value, {}}; }
};

template <typename Scalar>
struct WeightedLoss {
  LossResult<Scalar> term;
  Scalar weight;
};

namespace internal {

template <typename Scalar>
void CheckBatch(std::span<const LogitMap<Scalar>> logits,
                std::span<const TriLabelMask> masks) {
  if (logits.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty batch");
  }
  if (logits.size() != masks.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "batch has " + std::to_string(logits.size()) +
                    " logit maps but " + std::to_string(masks.size()) +
                    " masks");
  }
  const Index classes = logits.front().classes();
  for (std::size_t b = 0; b < logits.size(); ++b) {
    if (logits[b].classes() != classes) {
      throw Error(ErrorCode::kShapeMismatch,
                  "class count differs across the batch");
    }
    if (logits[b].height() != masks[b].height() ||
        logits[b].width() != masks[b].width()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "item " + std::to_string(b) + ": logits " +
                      ShapeString(logits[b].height(), logits[b].width()) +
                      " vs mask " +
                      ShapeString(masks[b].height(), masks[b].width()));
    }
  }
}

struct GroupCounts {
  Index anomaly = 0;
  Index inlier = 0;
};

inline GroupCounts CountGroups(std::span<const TriLabelMask> masks) {
  GroupCounts counts;
  for (const TriLabelMask& mask : masks) {
    counts.anomaly += (mask.codes().array() == 1).count();
    counts.inlier += (mask.codes().array() == 0).count();
  }
  return counts;
}

/// Per-pixel softmax quantities of one C x N logit matrix.
template <typename Scalar>
struct PixelStats {
  PlaneMatrix<Scalar> prob;      // C x N
  PlaneMatrix<Scalar> log_prob;  // C x N
  RowVector<Scalar> energy;      // 1 x N
  RowVector<Scalar> entropy;     // 1 x N

  explicit PixelStats(const PlaneMatrix<Scalar>& logits) {
    const RowVector<Scalar> peak = column_max(logits);
    const PlaneMatrix<Scalar> shifted = logits.rowwise() - peak;
    prob = shifted.array().exp().matrix();
    const RowVector<Scalar> total = prob.colwise().sum();
    const RowVector<Scalar> log_total = total.array().log().matrix();
    prob.array().rowwise() /= total.array();
    log_prob = shifted.rowwise() - log_total;
    energy = peak + log_total;
    entropy = (log_total.array() -
               prob.cwiseProduct(shifted).colwise().sum().array())
                  .matrix()
                  .cwiseMax(Scalar(0));
  }

  /// dH/dy = -p * (log p + H), column-wise.
  PlaneMatrix<Scalar> entropy_grad() const {
    PlaneMatrix<Scalar> shifted = log_prob.rowwise() + entropy;
    return -(prob.cwiseProduct(shifted));
  }
};

template <typename Scalar>
Scalar SafeMeanScale(Index count) {
  return count > 0 ? Scalar(1) / static_cast<Scalar>(count) : Scalar(0);
}

}  // namespace internal

/// Energy-entropy loss over a batch:
///   mean_{anomaly}[softplus(E) - a*H] + mean_{inlier}[softplus(-E) -/+ a*H]
/// Means are pooled over every pixel of the batch; void pixels are ignored
/// and receive a zero gradient. An empty group contributes 0.
template <typename Scalar>
LossResult<Scalar> eel_loss(std::span<const LogitMap<Scalar>> logits,
                            std::span<const TriLabelMask> masks,
                            const HyperParams<Scalar>& hp = {}) {
  hp.Validate();
  internal::CheckBatch(logits, masks);
  const internal::GroupCounts counts = internal::CountGroups(masks);
  if (counts.anomaly + counts.inlier == 0) {
    throw Error(ErrorCode::kInvalidArgument, "all pixels are void");
  }
  const Scalar anomaly_scale = internal::SafeMeanScale<Scalar>(counts.anomaly);
  const Scalar inlier_scale = internal::SafeMeanScale<Scalar>(counts.inlier);
  const Scalar inlier_entropy_sign =
      hp.inlier_entropy_sign == InlierEntropySign::kAsPrinted ? Scalar(-1)
                                                              : Scalar(1);

  std::vector<Scalar> anomaly_terms;
  std::vector<Scalar> inlier_terms;
  anomaly_terms.reserve(static_cast<std::size_t>(counts.anomaly));
  inlier_terms.reserve(static_cast<std::size_t>(counts.inlier));

  LossResult<Scalar> result;
  result.grad.reserve(logits.size());
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const internal::PixelStats<Scalar> stats(logits[b].values());
    const Index n = logits[b].pixels();
    RowVector<Scalar> energy_coef = RowVector<Scalar>::Zero(n);
    RowVector<Scalar> entropy_coef = RowVector<Scalar>::Zero(n);
    for (Index p = 0; p < n; ++p) {
      const Scalar energy = stats.energy(p);
      const Scalar entropy = stats.entropy(p);
      switch (masks[b].at_pixel(p)) {
        case PixelLabel::kAnomaly:
          // -log(sigmoid(-E)) = softplus(E); d/dE = sigmoid(E).
          anomaly_terms.push_back(softplus(energy) - hp.alpha * entropy);
          energy_coef(p) = anomaly_scale * sigmoid(energy);
          entropy_coef(p) = -anomaly_scale * hp.alpha;
          break;
        case PixelLabel::kInlier:
          // -log(1 - sigmoid(-E)) = softplus(-E); d/dE = -sigmoid(-E).
          inlier_terms.push_back(softplus(-energy) +
                                 inlier_entropy_sign * hp.alpha * entropy);
          energy_coef(p) = -inlier_scale * sigmoid(-energy);
          entropy_coef(p) = inlier_scale * inlier_entropy_sign * hp.alpha;
          break;
        case PixelLabel::kVoid:
          break;
      }
    }
    // dE/dy = p; dH/dy from PixelStats.
    PlaneMatrix<Scalar> grad =
        (stats.prob.array().rowwise() * energy_coef.array()).matrix();
    grad.array() +=
        stats.entropy_grad().array().rowwise() * entropy_coef.array();
    result.grad.push_back(std::move(grad));
  }
  result.value =
      anomaly_scale * internal::pairwise_sum<Scalar>(anomaly_terms) +
      inlier_scale * internal::pairwise_sum<Scalar>(inlier_terms);
  return result;
}

/// How consistency_loss reduces its per-pixel terms.
enum class Reduction { kSum, kMean };

/// Consistency of `logits` with a frozen `reference` over inlier pixels:
/// CE(p~, q) + KL(p~ || q) + (H(p~) - H(q))^2 with p~ = softmax of the
/// reference and q = softmax of the logits, summed by default or averaged
/// over all inlier pixels of the batch. The gradient is taken w.r.t. `logits`
/// only.
template <typename Scalar>
LossResult<Scalar> consistency_loss(std::span<const LogitMap<Scalar>> logits,
                                    std::span<const LogitMap<Scalar>> reference,
                                    std::span<const TriLabelMask> masks,
                                    Reduction reduction = Reduction::kSum) {
  internal::CheckBatch(logits, masks);
  internal::CheckBatch(reference, masks);
  if (reference.front().classes() != logits.front().classes()) {
    throw Error(ErrorCode::kShapeMismatch,
                "reference class count differs from logits");
  }

  std::vector<Scalar> terms;
  LossResult<Scalar> result;
  result.grad.reserve(logits.size());
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const internal::PixelStats<Scalar> pred(logits[b].values());
    const internal::PixelStats<Scalar> ref(reference[b].values());
    const PlaneMatrix<Scalar> pred_entropy_grad = pred.entropy_grad();
    const Index n = logits[b].pixels();
    PlaneMatrix<Scalar> grad =
        PlaneMatrix<Scalar>::Zero(logits[b].classes(), n);
    for (Index p = 0; p < n; ++p) {
      if (masks[b].at_pixel(p) != PixelLabel::kInlier) continue;
      const auto ref_prob = ref.prob.col(p);
      const Scalar cross_entropy = -ref_prob.dot(pred.log_prob.col(p));
      const Scalar kl =
          ref_prob.dot(ref.log_prob.col(p) - pred.log_prob.col(p));
      const Scalar entropy_gap = ref.entropy(p) - pred.entropy(p);
      terms.push_back(cross_entropy + kl + entropy_gap * entropy_gap);
      // d(CE)/dy = d(KL)/dy = q - p~ ; d(gap^2)/dy = -2*gap*dH(q)/dy.
      grad.col(p) = Scalar(2) * (pred.prob.col(p) - ref_prob) -
                    Scalar(2) * entropy_gap * pred_entropy_grad.col(p);
    }
    result.grad.push_back(std::move(grad));
  }
  result.value = internal::pairwise_sum<Scalar>(terms);
  if (reduction == Reduction::kMean) {
    const Scalar scale = internal::SafeMeanScale<Scalar>(
        static_cast<Index>(terms.size()));
    result.value *= scale;
    for (auto& g : result.grad) g *= scale;
  }
  return result;
}

/// Baseline linear in energy: mean_{anomaly} E - mean_{inlier} E.
template <typename Scalar>
LossResult<Scalar> linear_energy_loss(std::span<const LogitMap<Scalar>> logits,
                                      std::span<const TriLabelMask> masks) {
  internal::CheckBatch(logits, masks);
  const internal::GroupCounts counts = internal::CountGroups(masks);
  if (counts.anomaly + counts.inlier == 0) {
    throw Error(ErrorCode::kInvalidArgument, "all pixels are void");
  }
  const Scalar anomaly_scale = internal::SafeMeanScale<Scalar>(counts.anomaly);
  const Scalar inlier_scale = internal::SafeMeanScale<Scalar>(counts.inlier);

  std::vector<Scalar> anomaly_terms;
  std::vector<Scalar> inlier_terms;
  LossResult<Scalar> result;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const internal::PixelStats<Scalar> stats(logits[b].values());
    const Index n = logits[b].pixels();
    RowVector<Scalar> coef = RowVector<Scalar>::Zero(n);
    for (Index p = 0; p < n; ++p) {
      switch (masks[b].at_pixel(p)) {
        case PixelLabel::kAnomaly:
          anomaly_terms.push_back(stats.energy(p));
          coef(p) = anomaly_scale;
          break;
        case PixelLabel::kInlier:
          inlier_terms.push_back(stats.energy(p));
          coef(p) = -inlier_scale;
          break;
        case PixelLabel::kVoid:
          break;
      }
    }
    result.grad.push_back(
        (stats.prob.array().rowwise() * coef.array()).matrix());
  }
  result.value =
      anomaly_scale * internal::pairwise_sum<Scalar>(anomaly_terms) -
      inlier_scale * internal::pairwise_sum<Scalar>(inlier_terms);
  return result;
}

/// Weighted sum of loss terms; value and gradient combine linearly.
template <typename Scalar>
LossResult<Scalar> compose_total(std::span<const WeightedLoss<Scalar>> terms) {
  LossResult<Scalar> total;
  for (const WeightedLoss<Scalar>& item : terms) {
    total.value += item.weight * item.term.value;
    if (item.term.grad.empty()) continue;
    if (total.grad.empty()) {
      total.grad.reserve(item.term.grad.size());
      for (const auto& g : item.term.grad) total.grad.push_back(item.weight * g);
      continue;
    }
    if (total.grad.size() != item.term.grad.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "loss terms disagree on batch size");
    }
    for (std::size_t b = 0; b < total.grad.size(); ++b) {
      if (total.grad[b].rows() != item.term.grad[b].rows() ||
          total.grad[b].cols() != item.term.grad[b].cols()) {
        throw Error(ErrorCode::kShapeMismatch,
                    "loss terms disagree on gradient shape");
      }
      total.grad[b] += item.weight * item.term.grad[b];
    }
  }
  return total;
}

template <typename Scalar>
LossResult<Scalar> compose_total(
    std::initializer_list<WeightedLoss<Scalar>> terms) {
  return compose_total(
      std::span<const WeightedLoss<Scalar>>(terms.begin(), terms.size()));
}

/// Pixel-wise total: consistency + lambda * eel.
template <typename Scalar>
LossResult<Scalar> rpl_total(LossResult<Scalar> consistency,
                             LossResult<Scalar> eel,
                             const HyperParams<Scalar>& hp = {}) {
  return compose_total<Scalar>(
      {{std::move(consistency), Scalar(1)}, {std::move(eel), hp.lambda}});
}

/// Mask-wise total: masks + lambda_ce * ce + lambda * eel, where the first two
/// terms are computed elsewhere and arrive as plain values.
template <typename Scalar>
LossResult<Scalar> m2a_total(Scalar mask_loss, Scalar ce_loss,
                             LossResult<Scalar> eel,
                             const HyperParams<Scalar>& hp = {}) {
  return compose_total<Scalar>(
      {{LossResult<Scalar>::Constant(mask_loss), Scalar(1)},
       {LossResult<Scalar>::Constant(ce_loss), hp.lambda_ce},
       {std::move(eel), hp.lambda}});
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.
// ---------------------------------------------------------------------------

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Largest elementwise |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|), where g_fd is
/// the central difference of `value_fn` around `x`.
template <typename Scalar>
Scalar finite_diff_check(const std::function<Scalar(const Vector<Scalar>&)>& value_fn,
                         const Vector<Scalar>& x,
                         const Vector<Scalar>& analytic_grad, Scalar step) {
  if (!(step > Scalar(0))) {
    throw Error(ErrorCode::kInvalidArgument, "step must be positive");
  }
  if (analytic_grad.size() != x.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "analytic gradient size differs from parameter size");
  }
  Scalar worst = Scalar(0);
  Vector<Scalar> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const Scalar up = value_fn(probe);
    probe(i) = x(i) - step;
    const Scalar down = value_fn(probe);
    probe(i) = x(i);
    if (!std::isfinite(static_cast<double>(up)) ||
        !std::isfinite(static_cast<double>(down))) {
      throw Error(ErrorCode::kNonFinite,
                  "loss is not finite at perturbed element " +
                      std::to_string(i));
    }
    const Scalar numeric = (up - down) / (Scalar(2) * step);
    const Scalar analytic = analytic_grad(i);
    const Scalar denom =
        std::max(Scalar(1e-8), std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

template <typename Scalar>
using LossFunction =
    std::function<LossResult<Scalar>(std::span<const LogitMap<Scalar>>)>;

/// Checks a loss's analytic logit gradient on one batch instance.
template <typename Scalar>
Scalar finite_diff_check(const LossFunction<Scalar>& loss,
                         std::span<const LogitMap<Scalar>> instance,
                         Scalar step) {
  std::vector<Index> offsets;
  Index total = 0;
  for (const auto& item : instance) {
    offsets.push_back(total);
    total += item.values().size();
  }
  Vector<Scalar> flat(total);
  for (std::size_t b = 0; b < instance.size(); ++b) {
    flat.segment(offsets[b], instance[b].values().size()) =
        Eigen::Map<const Vector<Scalar>>(instance[b].values().data(),
                                         instance[b].values().size());
  }
  auto unflatten = [&](const Vector<Scalar>& v) {
    std::vector<LogitMap<Scalar>> batch;
    batch.reserve(instance.size());
    for (std::size_t b = 0; b < instance.size(); ++b) {
      const auto& item = instance[b];
      batch.emplace_back(item.height(), item.width(),
                         Eigen::Map<const PlaneMatrix<Scalar>>(
                             v.data() + offsets[b], item.classes(),
                             item.pixels()));
    }
    return batch;
  };

  const LossResult<Scalar> base = loss(instance);
  Vector<Scalar> analytic = Vector<Scalar>::Zero(total);
  if (!base.grad.empty()) {
    if (base.grad.size() != instance.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "loss returned a gradient for a different batch size");
    }
    for (std::size_t b = 0; b < instance.size(); ++b) {
      analytic.segment(offsets[b], base.grad[b].size()) =
          Eigen::Map<const Vector<Scalar>>(base.grad[b].data(),
                                           base.grad[b].size());
    }
  }
  const std::function<Scalar(const Vector<Scalar>&)> value_fn =
      [&](const Vector<Scalar>& v) {
        const auto batch = unflatten(v);
        return loss(std::span<const LogitMap<Scalar>>(batch)).value;
      };
  return finite_diff_check<Scalar>(value_fn, flat, analytic, step);
}

}  // namespace oodseg

#endif  // OODSEG_LOSSES_H_
