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

#include "oodseg/toytrain.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "oodseg/internal/summation.h"
#include "oodseg/metrics.h"
#include "oodseg/scoring.h"

namespace oodseg {
namespace {

constexpr int kMaxBlobAttempts = 1000;
constexpr std::uint64_t kHeldoutStreamBase = 1'000'000;
constexpr std::uint64_t kModelStream = 2'000'000;

void AddGaussian(RandomStream& rng, const Eigen::VectorXd& mean, double stddev,
                 Eigen::Ref<Eigen::VectorXd> out) {
  for (Index f = 0; f < mean.size(); ++f) out(f) = mean(f) + stddev * rng.Normal();
}

}  // namespace

ToySceneSpec ToySceneSpec::Default() {
  ToySceneSpec spec;
  spec.class_means.resize(3, 4);
  spec.class_means << 2.0, 0.0, 0.0, 0.0,  //
      0.0, 2.0, 0.0, 0.0,                  //
      0.0, 0.0, 2.0, 0.0;
  spec.anomaly_mean.resize(4);
  spec.anomaly_mean << 0.7, 0.7, 0.7, 1.5;
  return spec;
}

Index ToySceneSpec::blob_area() const {
  Index area = 0;
  for (int dy = -blob_radius; dy <= blob_radius; ++dy) {
    for (int dx = -blob_radius; dx <= blob_radius; ++dx) {
      if (dx * dx + dy * dy <= blob_radius * blob_radius) ++area;
    }
  }
  return area;
}

void ToySceneSpec::Validate() const {
  if (classes() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "toy scenes need K >= 2 classes");
  }
  if (features() < 1 || anomaly_mean.size() != features()) {
    throw Error(ErrorCode::kShapeMismatch,
                "anomaly mean must have one entry per feature channel");
  }
  if (height < classes() || width < 1) {
    throw Error(ErrorCode::kInvalidArgument, "grid too small for K bands");
  }
  for (Index k = 0; k < classes(); ++k) {
    if ((class_means.row(k).transpose() - anomaly_mean).isZero(0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "anomaly mean coincides with an inlier class mean");
    }
  }
  if (!(class_std >= 0.0) || !(anomaly_std >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "standard deviations must be >= 0");
  }
  if (blob_count < 0 || blob_radius < 0) {
    throw Error(ErrorCode::kInvalidArgument, "blob count/radius must be >= 0");
  }
  if (blob_count > 0 &&
      (2 * blob_radius + 1 > height || 2 * blob_radius + 1 > width)) {
    throw Error(ErrorCode::kInfeasible, "anomaly blob does not fit in the grid");
  }
}

std::vector<ToyScene> generate_toy_scenes(const ToySceneSpec& spec,
                                          std::size_t count,
                                          std::uint64_t first_index) {
  spec.Validate();
  const Index height = spec.height;
  const Index width = spec.width;
  const Index classes = spec.classes();
  const std::uint8_t anomaly_id = static_cast<std::uint8_t>(classes);

  std::vector<ToyScene> scenes;
  scenes.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    RandomStream rng(spec.seed, first_index + s);

    // Horizontal bands in a random class order with jittered boundaries.
    std::vector<std::uint8_t> order(static_cast<std::size_t>(classes));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng.UniformIndex(i + 1)]);
    }
    std::vector<Index> bounds = {0};
    const Index jitter = std::max<Index>(0, height / (4 * classes));
    for (Index k = 1; k < classes; ++k) {
      const Index nominal = k * height / classes;
      const Index offset =
          static_cast<Index>(rng.UniformIndex(2 * jitter + 1)) - jitter;
      bounds.push_back(std::clamp(nominal + offset, bounds.back() + 1,
                                  height - (classes - k)));
    }
    bounds.push_back(height);

    ByteMatrix ids(height, width);
    for (Index k = 0; k < classes; ++k) {
      ids.middleRows(bounds[k], bounds[k + 1] - bounds[k])
          .setConstant(order[static_cast<std::size_t>(k)]);
    }

    // Non-overlapping anomaly discs.
    std::vector<std::pair<Index, Index>> centers;
    int attempts = 0;
    while (static_cast<int>(centers.size()) < spec.blob_count) {
      if (++attempts > kMaxBlobAttempts) {
        throw Error(ErrorCode::kInfeasible,
                    fmt::format("cannot place {} disjoint blobs of radius {}",
                                spec.blob_count, spec.blob_radius));
      }
      const Index r = spec.blob_radius;
      const Index cy = r + static_cast<Index>(rng.UniformIndex(height - 2 * r));
      const Index cx = r + static_cast<Index>(rng.UniformIndex(width - 2 * r));
      const bool clash = std::any_of(
          centers.begin(), centers.end(), [&](const auto& c) {
            const Index dy = c.first - cy;
            const Index dx = c.second - cx;
            return dy * dy + dx * dx <= 4 * r * r + 4 * r;
          });
      if (clash) continue;
      centers.emplace_back(cy, cx);
      for (Index y = cy - r; y <= cy + r; ++y) {
        for (Index x = cx - r; x <= cx + r; ++x) {
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) {
            ids(y, x) = anomaly_id;
          }
        }
      }
    }

    PlaneMatrix<double> features(spec.features(), height * width);
    ByteMatrix codes(height, width);
    Eigen::VectorXd sample(spec.features());
    for (Index p = 0; p < height * width; ++p) {
      const std::uint8_t id = ids.data()[p];
      if (id == anomaly_id) {
        AddGaussian(rng, spec.anomaly_mean, spec.anomaly_std, sample);
        codes.data()[p] = static_cast<std::uint8_t>(PixelLabel::kAnomaly);
      } else {
        AddGaussian(rng, spec.class_means.row(id).transpose(), spec.class_std,
                    sample);
        codes.data()[p] = static_cast<std::uint8_t>(PixelLabel::kInlier);
      }
      features.col(p) = sample;
    }
    scenes.push_back(ToyScene{std::move(features), height, width,
                              TriLabelMask(std::move(codes)),
                              SemanticLabelMap(std::move(ids))});
  }
  return scenes;
}

std::string_view LossVariantName(LossVariant variant) {
  return variant == LossVariant::kEel ? "eel" : "linear";
}

std::vector<LogitMap<double>> forward_all(const ToyModel& model,
                                          std::span<const ToyScene> scenes) {
  std::vector<LogitMap<double>> out;
  out.reserve(scenes.size());
  for (const ToyScene& scene : scenes) {
    out.push_back(model.forward(scene.features, scene.height, scene.width));
  }
  return out;
}

std::vector<TriLabelMask> masks_of(std::span<const ToyScene> scenes) {
  std::vector<TriLabelMask> out;
  out.reserve(scenes.size());
  for (const ToyScene& scene : scenes) out.push_back(scene.mask);
  return out;
}

double composed_objective(const ToyModel& model,
                          std::span<const LogitMap<double>> reference,
                          std::span<const ToyScene> scenes,
                          const TrainOptions& options, Eigen::VectorXd* grad) {
  const std::vector<LogitMap<double>> logits = forward_all(model, scenes);
  const std::vector<TriLabelMask> masks = masks_of(scenes);
  LossResult<double> anomaly_term =
      options.variant == LossVariant::kEel
          ? eel_loss<double>(logits, masks, options.hp)
          : linear_energy_loss<double>(logits, masks);
  const LossResult<double> total =
      rpl_total(consistency_loss<double>(logits, reference, masks,
                                          options.consistency_reduction),
                std::move(anomaly_term), options.hp);
  if (grad != nullptr) {
    grad->setZero(model.params().size());
    for (std::size_t b = 0; b < scenes.size(); ++b) {
      *grad += model.backward(scenes[b].features, total.grad[b]);
    }
  }
  return total.value;
}

TrainResult train(const ToyModel& initial, std::span<const ToyScene> scenes,
                  const TrainOptions& options) {
  if (options.steps < 1) {
    throw Error(ErrorCode::kInvalidArgument, "training needs steps >= 1");
  }
  options.hp.Validate();
  const std::vector<LogitMap<double>> reference = forward_all(initial, scenes);
  TrainResult result{initial, {}};
  result.loss_trace.reserve(static_cast<std::size_t>(options.steps) + 1);
  Eigen::VectorXd grad;
  for (int step = 0; step <= options.steps; ++step) {
    double value;
    try {
      value = composed_objective(result.model, reference, scenes, options,
                                 step < options.steps ? &grad : nullptr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      throw Error(ErrorCode::kDivergence,
                  fmt::format("training diverged at step {}: {}", step, e.what()));
    }
    if (!std::isfinite(value) || (step < options.steps && !grad.allFinite())) {
      throw Error(ErrorCode::kDivergence,
                  fmt::format("training diverged at step {}", step));
    }
    result.loss_trace.push_back(value);
    if (step == options.steps) break;
    Eigen::VectorXd next = result.model.params() - options.step_size * grad;
    if (!next.allFinite()) {
      throw Error(ErrorCode::kDivergence,
                  fmt::format("training diverged at step {}", step));
    }
    result.model = result.model.with_params(std::move(next));
  }
  return result;
}

TrainResult pretrain_inlier(const ToyModel& initial,
                            std::span<const ToyScene> scenes, int steps,
                            double step_size) {
  TrainResult result{initial, {}};
  Index inliers = 0;
  for (const ToyScene& scene : scenes) {
    inliers += (scene.mask.codes().array() == 0).count();
  }
  if (inliers == 0) {
    throw Error(ErrorCode::kInvalidArgument, "no inlier pixels to pretrain on");
  }
  const double scale = 1.0 / static_cast<double>(inliers);
  for (int step = 0; step <= steps; ++step) {
    std::vector<double> terms;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(result.model.params().size());
    for (const ToyScene& scene : scenes) {
      const LogitMap<double> logits =
          result.model.forward(scene.features, scene.height, scene.width);
      const internal::PixelStats<double> stats(logits.values());
      PlaneMatrix<double> logit_grad =
          PlaneMatrix<double>::Zero(logits.classes(), logits.pixels());
      for (Index p = 0; p < logits.pixels(); ++p) {
        if (scene.mask.at_pixel(p) != PixelLabel::kInlier) continue;
        const Index target = scene.labels.ids().data()[p];
        terms.push_back(-stats.log_prob(target, p));
        logit_grad.col(p) = scale * stats.prob.col(p);
        logit_grad(target, p) -= scale;
      }
      grad += result.model.backward(scene.features, logit_grad);
    }
    result.loss_trace.push_back(scale * internal::pairwise_sum<double>(terms));
    if (step == steps) break;
    result.model =
        result.model.with_params(result.model.params() - step_size * grad);
  }
  return result;
}

double energy_gap_from_values(std::vector<double> inlier_energies,
                              std::vector<double> anomaly_energies) {
  if (inlier_energies.size() < 4 || anomaly_energies.size() < 4) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("energy gap needs >= 4 pixels per group, got {} "
                            "inlier and {} anomaly",
                            inlier_energies.size(), anomaly_energies.size()));
  }
  const auto quarter = [](std::size_t n) {
    return std::max<std::size_t>(1, n / 4);
  };
  const std::size_t n_in = quarter(inlier_energies.size());
  const std::size_t n_out = quarter(anomaly_energies.size());
  std::partial_sort(inlier_energies.begin(), inlier_energies.begin() + n_in,
                    inlier_energies.end());
  std::partial_sort(anomaly_energies.begin(), anomaly_energies.begin() + n_out,
                    anomaly_energies.end(), std::greater<>());
  const double low_inlier =
      internal::pairwise_sum<double>(std::span(inlier_energies).first(n_in)) /
      static_cast<double>(n_in);
  const double high_anomaly =
      internal::pairwise_sum<double>(std::span(anomaly_energies).first(n_out)) /
      static_cast<double>(n_out);
  return low_inlier - high_anomaly;
}

double energy_gap(std::span<const LogitMap<double>> logits,
                  std::span<const TriLabelMask> masks) {
  internal::CheckBatch(logits, masks);
  std::vector<double> inlier;
  std::vector<double> anomaly;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const RowVector<double> energy = logsumexp_columns(logits[b].values());
    for (Index p = 0; p < energy.size(); ++p) {
      switch (masks[b].at_pixel(p)) {
        case PixelLabel::kInlier: inlier.push_back(energy(p)); break;
        case PixelLabel::kAnomaly: anomaly.push_back(energy(p)); break;
        case PixelLabel::kVoid: break;
      }
    }
  }
  return energy_gap_from_values(std::move(inlier), std::move(anomaly));
}

ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& config,
                                       std::uint64_t seed,
                                       std::span<const LossVariant> variants) {
  ToySceneSpec spec = config.spec;
  spec.seed = seed;
  const std::vector<ToyScene> train_scenes =
      generate_toy_scenes(spec, config.train_scenes, 0);
  const std::vector<ToyScene> heldout =
      generate_toy_scenes(spec, config.heldout_scenes, kHeldoutStreamBase);
  const std::vector<TriLabelMask> heldout_masks = masks_of(heldout);

  RandomStream init_rng(seed, kModelStream);
  const ToyModel initial =
      ToyModel::Random(spec.features(), config.hidden, spec.classes(), init_rng);
  ToyExperimentResult out{seed,
                          pretrain_inlier(initial, train_scenes,
                                          config.pretrain_steps,
                                          config.pretrain_step_size)
                              .model,
                          0.0,
                          {}};
  out.pretrained_gap =
      energy_gap(forward_all(out.pretrained, heldout), heldout_masks);

  for (LossVariant variant : variants) {
    TrainOptions options;
    options.variant = variant;
    options.hp = config.hp;
    options.steps = config.steps;
    options.step_size = config.step_size;
    options.consistency_reduction = config.consistency_reduction;
    ToyVariantOutcome outcome{variant, train(out.pretrained, train_scenes, options)};

    const std::vector<LogitMap<double>> logits =
        forward_all(outcome.result.model, heldout);
    outcome.energy_gap = energy_gap(logits, heldout_masks);
    EvalAccumulator eel_acc = EvalAccumulator::Exact();
    EvalAccumulator msp_acc = EvalAccumulator::Exact();
    ScoreConfig<double> score_config{config.hp.alpha};
    for (std::size_t b = 0; b < heldout.size(); ++b) {
      eel_acc.add(eel_score(logits[b], score_config), heldout_masks[b]);
      msp_acc.add(msp_score(logits[b]), heldout_masks[b]);
    }
    outcome.auprc_eel = auprc(eel_acc).value_or(0.0);
    outcome.auprc_msp = auprc(msp_acc).value_or(0.0);
    outcome.fpr95_eel = fpr_at_tpr(eel_acc, 0.95).value_or(1.0);
    out.variants.push_back(std::move(outcome));
  }
  return out;
}

}  // namespace oodseg
