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

#ifndef OODSEG_TOYTRAIN_H_
#define OODSEG_TOYTRAIN_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oodseg/losses.h"
#include "oodseg/random.h"
#include "oodseg/raster.h"

namespace oodseg {

// Synthetic per-pixel classification scenes: K inlier classes laid out as
// horizontal bands, each pixel's features drawn from its class Gaussian, plus
// circular anomaly blobs drawn from a held-out Gaussian.
struct ToySceneSpec {
  Index height = 32;
  Index width = 32;
  PlaneMatrix<double> class_means;  // K x F
  double class_std = 0.6;
  Eigen::VectorXd anomaly_mean;     // F
  double anomaly_std = 0.6;
  int blob_count = 2;
  int blob_radius = 4;
  std::uint64_t seed = 1;

  static ToySceneSpec Default();

  Index features() const { return class_means.cols(); }
  Index classes() const { return class_means.rows(); }
  /// Number of lattice points with dx^2 + dy^2 <= r^2.
  Index blob_area() const;
  void Validate() const;
};

struct ToyScene {
  PlaneMatrix<double> features;  // F x (H*W)
  Index height;
  Index width;
  TriLabelMask mask;
  SemanticLabelMap labels;       // anomaly pixels carry id K
};

/// Scene i is drawn from the stream (spec.seed, first_index + i).
std::vector<ToyScene> generate_toy_scenes(const ToySceneSpec& spec,
                                          std::size_t count,
                                          std::uint64_t first_index = 0);

/// Two affine layers with tanh between them, applied to every pixel:
///   logits = W2 * tanh(W1 * x + b1) + b2.
/// Parameters are packed as [W1 (row-major), b1, W2 (row-major), b2].
template <typename Scalar = double>
class PixelClassifier {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using ConstMatMap = Eigen::Map<const PlaneMatrix<Scalar>>;
  using ConstVecMap = Eigen::Map<const Vec>;

  PixelClassifier(Index features, Index hidden, Index classes)
      : PixelClassifier(features, hidden, classes,
                        Vec::Zero(ParameterCount(features, hidden, classes))) {}

  PixelClassifier(Index features, Index hidden, Index classes, Vec params)
      : features_(features),
        hidden_(hidden),
        classes_(classes),
        params_(std::move(params)) {
    if (features_ < 1 || hidden_ < 1 || classes_ < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "classifier needs F >= 1, hidden >= 1, K >= 2");
    }
    if (params_.size() != ParameterCount(features_, hidden_, classes_)) {
      throw Error(ErrorCode::kShapeMismatch, "wrong parameter vector length");
    }
    internal::RequireFinite(params_, "classifier parameters");
  }

  static Index ParameterCount(Index features, Index hidden, Index classes) {
    return hidden * features + hidden + classes * hidden + classes;
  }

  /// Gaussian initialization with standard deviation 1/sqrt(fan_in).
  static PixelClassifier Random(Index features, Index hidden, Index classes,
                                RandomStream& rng) {
    Vec params(ParameterCount(features, hidden, classes));
    Index k = 0;
    for (Index i = 0; i < hidden * features; ++i) {
      params(k++) = static_cast<Scalar>(rng.Normal() / std::sqrt(double(features)));
    }
    for (Index i = 0; i < hidden; ++i) params(k++) = Scalar(0);
    for (Index i = 0; i < classes * hidden; ++i) {
      params(k++) = static_cast<Scalar>(rng.Normal() / std::sqrt(double(hidden)));
    }
    for (Index i = 0; i < classes; ++i) params(k++) = Scalar(0);
    return PixelClassifier(features, hidden, classes, std::move(params));
  }

  Index features() const { return features_; }
  Index hidden() const { return hidden_; }
  Index classes() const { return classes_; }
  const Vec& params() const { return params_; }

  ConstMatMap w1() const { return ConstMatMap(params_.data(), hidden_, features_); }
  ConstVecMap b1() const {
    return ConstVecMap(params_.data() + hidden_ * features_, hidden_);
  }
  ConstMatMap w2() const {
    return ConstMatMap(params_.data() + hidden_ * features_ + hidden_, classes_,
                       hidden_);
  }
  ConstVecMap b2() const {
    return ConstVecMap(params_.data() + hidden_ * features_ + hidden_ +
                           classes_ * hidden_,
                       classes_);
  }

  PlaneMatrix<Scalar> hidden_activations(const PlaneMatrix<Scalar>& x) const {
    CheckInput(x);
    PlaneMatrix<Scalar> pre = w1() * x;
    pre.colwise() += b1();
    return pre.array().tanh().matrix();
  }

  /// `x` is F x (H*W); returns the K-class logit map.
  LogitMap<Scalar> forward(const PlaneMatrix<Scalar>& x, Index height,
                           Index width) const {
    PlaneMatrix<Scalar> logits = w2() * hidden_activations(x);
    logits.colwise() += b2();
    return LogitMap<Scalar>(height, width, std::move(logits));
  }

  /// Parameter gradient given dLoss/dlogits (K x N) for input x.
  Vec backward(const PlaneMatrix<Scalar>& x,
               const PlaneMatrix<Scalar>& logit_grad) const {
    const PlaneMatrix<Scalar> act = hidden_activations(x);
    if (logit_grad.rows() != classes_ || logit_grad.cols() != x.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "logit gradient shape mismatch");
    }
    Vec grad(params_.size());
    Index k = 0;
    const PlaneMatrix<Scalar> act_grad = w2().transpose() * logit_grad;
    const PlaneMatrix<Scalar> pre_grad =
        act_grad.cwiseProduct((Scalar(1) - act.array().square()).matrix());
    const PlaneMatrix<Scalar> gw1 = pre_grad * x.transpose();
    grad.segment(k, gw1.size()) = Eigen::Map<const Vec>(gw1.data(), gw1.size());
    k += gw1.size();
    grad.segment(k, hidden_) = pre_grad.rowwise().sum();
    k += hidden_;
    const PlaneMatrix<Scalar> gw2 = logit_grad * act.transpose();
    grad.segment(k, gw2.size()) = Eigen::Map<const Vec>(gw2.data(), gw2.size());
    k += gw2.size();
    grad.segment(k, classes_) = logit_grad.rowwise().sum();
    return grad;
  }

  PixelClassifier with_params(Vec params) const {
    return PixelClassifier(features_, hidden_, classes_, std::move(params));
  }

 private:
  void CheckInput(const PlaneMatrix<Scalar>& x) const {
    if (x.rows() != features_) {
      throw Error(ErrorCode::kShapeMismatch,
                  "classifier expects " + std::to_string(features_) +
                      " feature channels, got " + std::to_string(x.rows()));
    }
  }

  Index features_;
  Index hidden_;
  Index classes_;
  Vec params_;
};

using ToyModel = PixelClassifier<double>;

/// Which anomaly term sits next to the consistency loss during fine-tuning.
enum class LossVariant { kEel, kLinear };

std::string_view LossVariantName(LossVariant variant);

struct TrainOptions {
  LossVariant variant = LossVariant::kEel;
  HyperParams<double> hp;
  // Mean keeps the consistency term on the same per-pixel scale as the
  // pooled-mean anomaly term regardless of scene size.
  Reduction consistency_reduction = Reduction::kMean;
  int steps = 200;
  double step_size = 1.0;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> loss_trace;  // steps + 1 values: before each update and final
};

/// Fine-tuning objective: consistency(model, frozen reference) + lambda * A,
/// with A the EEL loss or the linear-energy baseline. Fills `grad` with the
/// parameter gradient when non-null.
double composed_objective(const ToyModel& model,
                          std::span<const LogitMap<double>> reference,
                          std::span<const ToyScene> scenes,
                          const TrainOptions& options,
                          Eigen::VectorXd* grad = nullptr);

/// Plain full-batch gradient descent on composed_objective. The reference
/// logits come from a frozen copy of `initial`.
TrainResult train(const ToyModel& initial, std::span<const ToyScene> scenes,
                  const TrainOptions& options);

/// Cross-entropy pretraining on inlier pixels (anomaly and void pixels are
/// ignored), standing in for a backbone trained without anomalies.
TrainResult pretrain_inlier(const ToyModel& initial,
                            std::span<const ToyScene> scenes, int steps,
                            double step_size);

std::vector<LogitMap<double>> forward_all(const ToyModel& model,
                                          std::span<const ToyScene> scenes);
std::vector<TriLabelMask> masks_of(std::span<const ToyScene> scenes);

/// Mean energy of the lowest-energy quarter of inlier pixels minus mean
/// energy of the highest-energy quarter of anomaly pixels. A quarter is
/// floor(n/4) pixels, at least 1. Needs >= 4 pixels in each group.
double energy_gap(std::span<const LogitMap<double>> logits,
                  std::span<const TriLabelMask> masks);

/// Same statistic on precomputed energies.
double energy_gap_from_values(std::vector<double> inlier_energies,
                              std::vector<double> anomaly_energies);

struct ToyExperimentConfig {
  ToySceneSpec spec = ToySceneSpec::Default();
  std::size_t train_scenes = 8;
  std::size_t heldout_scenes = 8;
  Index hidden = 16;
  int pretrain_steps = 300;
  double pretrain_step_size = 0.5;
  int steps = 200;
  double step_size = 1.0;
  HyperParams<double> hp;
  Reduction consistency_reduction = Reduction::kMean;
};

struct ToyVariantOutcome {
  LossVariant variant;
  TrainResult result;
  double energy_gap = 0.0;
  double auprc_eel = 0.0;
  double auprc_msp = 0.0;
  double fpr95_eel = 0.0;
};

struct ToyExperimentResult {
  std::uint64_t seed = 0;
  ToyModel pretrained;
  double pretrained_gap = 0.0;
  std::vector<ToyVariantOutcome> variants;
};

/// Pretrains a classifier, fine-tunes it with each variant, and evaluates the
/// energy gap and score AUPRCs on held-out scenes. Deterministic per seed.
ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& config,
                                       std::uint64_t seed,
                                       std::span<const LossVariant> variants);

}  // namespace oodseg

#endif  // OODSEG_TOYTRAIN_H_
