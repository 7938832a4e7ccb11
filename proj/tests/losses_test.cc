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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oodseg/losses.h"
#include "oodseg/scoring.h"
#include "test_util.h"

namespace oodseg {
namespace {

constexpr double kLog19 = 2.944438979166440460;
constexpr double kLog20Over19 = 0.05129329438755053;

using Batch = std::vector<LogitMap<double>>;
using Masks = std::vector<TriLabelMask>;

struct Instance {
  Batch logits;
  Batch reference;
  Masks masks;
};

Instance RandomInstance(std::mt19937_64& rng, Index classes) {
  std::uniform_int_distribution<Index> side(1, 4);
  Instance inst;
  for (int b = 0; b < 2; ++b) {
    const Index h = side(rng);
    const Index w = std::max<Index>(2, side(rng));
    inst.logits.push_back(testing::RandomLogits(rng, classes, h, w));
    inst.reference.push_back(testing::RandomLogits(rng, classes, h, w));
    inst.masks.push_back(testing::RandomMask(rng, h, w));
  }
  return inst;
}

// Direct transcription of the per-pixel loss terms in long double.
long double OracleEel(const Batch& logits, const Masks& masks, double alpha,
                      bool penalize_inlier_entropy) {
  long double anomaly_sum = 0, inlier_sum = 0;
  long double anomaly_n = 0, inlier_n = 0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    for (Index p = 0; p < logits[b].pixels(); ++p) {
      long double z = 0;
      for (Index c = 0; c < logits[b].classes(); ++c) {
        z += std::exp(static_cast<long double>(logits[b].values()(c, p)));
      }
      long double h = 0;
      for (Index c = 0; c < logits[b].classes(); ++c) {
        const long double q =
            std::exp(static_cast<long double>(logits[b].values()(c, p))) / z;
        h -= q * std::log(q);
      }
      const long double e = std::log(z);
      const long double s = 1.0L / (1.0L + std::exp(e));  // sigmoid(-E)
      switch (masks[b].at_pixel(p)) {
        case PixelLabel::kAnomaly:
          anomaly_sum += -std::log(s) - alpha * h;
          anomaly_n += 1;
          break;
        case PixelLabel::kInlier:
          inlier_sum += -std::log(1.0L - s) +
                        (penalize_inlier_entropy ? alpha * h : -alpha * h);
          inlier_n += 1;
          break;
        case PixelLabel::kVoid:
          break;
      }
    }
  }
  return (anomaly_n > 0 ? anomaly_sum / anomaly_n : 0) +
         (inlier_n > 0 ? inlier_sum / inlier_n : 0);
}

long double OracleConsistency(const Batch& logits, const Batch& reference,
                              const Masks& masks) {
  long double total = 0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const Index classes = logits[b].classes();
    for (Index p = 0; p < logits[b].pixels(); ++p) {
      if (masks[b].at_pixel(p) != PixelLabel::kInlier) continue;
      long double zq = 0, zr = 0;
      for (Index c = 0; c < classes; ++c) {
        zq += std::exp(static_cast<long double>(logits[b].values()(c, p)));
        zr += std::exp(static_cast<long double>(reference[b].values()(c, p)));
      }
      long double ce = 0, kl = 0, hq = 0, hr = 0;
      for (Index c = 0; c < classes; ++c) {
        const long double q =
            std::exp(static_cast<long double>(logits[b].values()(c, p))) / zq;
        const long double r =
            std::exp(static_cast<long double>(reference[b].values()(c, p))) / zr;
        ce -= r * std::log(q);
        kl += r * (std::log(r) - std::log(q));
        hq -= q * std::log(q);
        hr -= r * std::log(r);
      }
      total += ce + kl + (hr - hq) * (hr - hq);
    }
  }
  return total;
}

TEST(EelLossTest, SingleAnomalyPixelClosedForm) {
  const Batch logits = {LogitMap<double>::Zero(19, 1, 1)};
  const Masks masks = {TriLabelMask::Filled(1, 1, PixelLabel::kAnomaly)};
  EXPECT_NEAR(eel_loss<double>(logits, masks).value, kLog20Over19, 1e-12);
}

TEST(EelLossTest, SingleInlierPixelClosedFormForBothSigns) {
  const Batch logits = {LogitMap<double>::Zero(19, 1, 1)};
  const Masks masks = {TriLabelMask::Filled(1, 1, PixelLabel::kInlier)};
  EXPECT_NEAR(eel_loss<double>(logits, masks).value, kLog20Over19 - kLog19,
              1e-12);
  HyperParams<double> hp;
  hp.inlier_entropy_sign = InlierEntropySign::kPenalize;
  EXPECT_NEAR(eel_loss<double>(logits, masks, hp).value, kLog20Over19 + kLog19,
              1e-12);
}

TEST(EelLossTest, MatchesOracleOnRandomBatches) {
  std::mt19937_64 rng(101);
  for (Index classes : {2, 5, 19}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Instance inst = RandomInstance(rng, classes);
      for (bool penalize : {false, true}) {
        HyperParams<double> hp;
        hp.alpha = 0.7;
        hp.inlier_entropy_sign = penalize ? InlierEntropySign::kPenalize
                                          : InlierEntropySign::kAsPrinted;
        const double got = eel_loss<double>(inst.logits, inst.masks, hp).value;
        const double want = static_cast<double>(
            OracleEel(inst.logits, inst.masks, hp.alpha, penalize));
        EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, std::abs(want)));
      }
    }
  }
}

TEST(EelLossTest, PoolsMeansOverTheBatch) {
  std::mt19937_64 rng(4);
  const auto a = testing::RandomLogits(rng, 5, 2, 3);
  const auto ma = testing::RandomMask(rng, 2, 3);
  const Batch one = {a};
  const Batch two = {a, a};
  const Masks m1 = {ma};
  const Masks m2 = {ma, ma};
  const auto r1 = eel_loss<double>(one, m1);
  const auto r2 = eel_loss<double>(two, m2);
  EXPECT_NEAR(r1.value, r2.value, 1e-14);
  EXPECT_TRUE(r2.grad[0].isApprox(0.5 * r1.grad[0], 1e-14));
  EXPECT_EQ(r2.grad[0], r2.grad[1]);
}

TEST(EelLossTest, AllVoidIsAnError) {
  const Batch logits = {LogitMap<double>::Zero(3, 2, 2)};
  const Masks masks = {TriLabelMask::Filled(2, 2, PixelLabel::kVoid)};
  EXPECT_THROW(eel_loss<double>(logits, masks), Error);
  EXPECT_THROW(linear_energy_loss<double>(logits, masks), Error);
}

TEST(EelLossTest, ShapeMismatchIsAnError) {
  const Batch logits = {LogitMap<double>::Zero(3, 2, 2)};
  const Masks masks = {TriLabelMask::Filled(2, 3, PixelLabel::kInlier)};
  try {
    eel_loss<double>(logits, masks);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(EelLossTest, DirectionalBehavior) {
  std::mt19937_64 rng(8);
  const auto base = testing::RandomLogits(rng, 5, 1, 2);
  ByteMatrix codes(1, 2);
  codes << 1, 0;
  const Masks masks = {TriLabelMask(codes)};
  const HyperParams<double> hp;
  auto value_with_shift = [&](Index pixel, double shift) {
    PlaneMatrix<double> v = base.values();
    v.col(pixel).array() += shift;
    return eel_loss<double>(Batch{LogitMap<double>(1, 2, v)}, masks, hp).value;
  };
  const double v0 = value_with_shift(0, 0.0);
  // A uniform logit shift moves energy only; entropy is unchanged.
  EXPECT_LT(value_with_shift(0, -0.5), v0);
  EXPECT_LT(value_with_shift(1, 0.5), v0);
}

TEST(GradientSuiteTest, EelLossBothSigns) {
  std::mt19937_64 rng(202);
  for (Index classes : {2, 5, 19}) {
    for (int trial = 0; trial < 7; ++trial) {
      const Instance inst = RandomInstance(rng, classes);
      for (auto sign :
           {InlierEntropySign::kAsPrinted, InlierEntropySign::kPenalize}) {
        HyperParams<double> hp;
        hp.inlier_entropy_sign = sign;
        const LossFunction<double> loss = [&](std::span<const LogitMap<double>> l) {
          return eel_loss<double>(l, inst.masks, hp);
        };
        EXPECT_LT(finite_diff_check<double>(loss, inst.logits, 1e-5), 1e-4);
      }
    }
  }
}

TEST(GradientSuiteTest, ConsistencyLossSumAndMean) {
  std::mt19937_64 rng(303);
  for (Index classes : {2, 5, 19}) {
    for (int trial = 0; trial < 7; ++trial) {
      const Instance inst = RandomInstance(rng, classes);
      for (auto reduction : {Reduction::kSum, Reduction::kMean}) {
        const LossFunction<double> loss = [&](std::span<const LogitMap<double>> l) {
          return consistency_loss<double>(l, inst.reference, inst.masks,
                                          reduction);
        };
        EXPECT_LT(finite_diff_check<double>(loss, inst.logits, 1e-5), 1e-4);
      }
    }
  }
}

TEST(GradientSuiteTest, LinearEnergyLoss) {
  std::mt19937_64 rng(404);
  for (Index classes : {2, 5, 19}) {
    for (int trial = 0; trial < 7; ++trial) {
      const Instance inst = RandomInstance(rng, classes);
      const LossFunction<double> loss = [&](std::span<const LogitMap<double>> l) {
        return linear_energy_loss<double>(l, inst.masks);
      };
      EXPECT_LT(finite_diff_check<double>(loss, inst.logits, 1e-5), 1e-4);
    }
  }
}

TEST(GradientSuiteTest, IndependentCentralDifferenceAgrees) {
  std::mt19937_64 rng(505);
  const Instance inst = RandomInstance(rng, 5);
  const HyperParams<double> hp;
  const auto result = eel_loss<double>(inst.logits, inst.masks, hp);
  Batch probe = inst.logits;
  for (std::size_t b = 0; b < probe.size(); ++b) {
    for (Index i = 0; i < probe[b].values().size(); ++i) {
      auto eval = [&](double delta) {
        PlaneMatrix<double> v = inst.logits[b].values();
        v.data()[i] += delta;
        Batch moved = inst.logits;
        moved[b] = LogitMap<double>(v.rows() == 0 ? 0 : probe[b].height(),
                                    probe[b].width(), v);
        return static_cast<double>(OracleEel(moved, inst.masks, 1.0, false));
      };
      const double fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
      EXPECT_NEAR(result.grad[b].data()[i], fd, 1e-7);
    }
  }
}

TEST(VoidNeutralityTest, VoidPixelsNeverMatter) {
  std::mt19937_64 rng(606);
  for (Index classes : {2, 5, 19}) {
    const Instance inst = RandomInstance(rng, classes);
    Batch perturbed = inst.logits;
    bool any_void = false;
    for (std::size_t b = 0; b < perturbed.size(); ++b) {
      PlaneMatrix<double> v = perturbed[b].values();
      for (Index p = 0; p < v.cols(); ++p) {
        if (inst.masks[b].at_pixel(p) == PixelLabel::kVoid) {
          v.col(p).array() += 50.0;
          any_void = true;
        }
      }
      perturbed[b] = LogitMap<double>(perturbed[b].height(), perturbed[b].width(), v);
    }
    if (!any_void) continue;
    auto check = [&](const LossResult<double>& a, const LossResult<double>& b) {
      EXPECT_EQ(a.value, b.value);
      for (std::size_t k = 0; k < a.grad.size(); ++k) {
        EXPECT_EQ(a.grad[k], b.grad[k]);
        for (Index p = 0; p < a.grad[k].cols(); ++p) {
          if (inst.masks[k].at_pixel(p) == PixelLabel::kVoid) {
            EXPECT_TRUE(a.grad[k].col(p).isZero(0.0));
          }
        }
      }
    };
    check(eel_loss<double>(inst.logits, inst.masks),
          eel_loss<double>(perturbed, inst.masks));
    check(linear_energy_loss<double>(inst.logits, inst.masks),
          linear_energy_loss<double>(perturbed, inst.masks));
    check(consistency_loss<double>(inst.logits, inst.reference, inst.masks),
          consistency_loss<double>(perturbed, inst.reference, inst.masks));
  }
}

TEST(ConsistencyLossTest, SelfReferenceGivesSummedEntropy) {
  const Batch logits = {LogitMap<double>::Zero(19, 1, 1)};
  const Masks masks = {TriLabelMask::Filled(1, 1, PixelLabel::kInlier)};
  const auto r = consistency_loss<double>(logits, logits, masks);
  EXPECT_NEAR(r.value, kLog19, 1e-12);
  EXPECT_TRUE(r.grad[0].isZero(1e-15));

  std::mt19937_64 rng(7);
  const Batch random = {testing::RandomLogits(rng, 5, 3, 3)};
  const Masks inliers = {TriLabelMask::Filled(3, 3, PixelLabel::kInlier)};
  const double entropy_sum = entropy_map(random[0]).values().sum();
  EXPECT_NEAR(consistency_loss<double>(random, random, inliers).value,
              entropy_sum, 1e-12);
}

TEST(ConsistencyLossTest, AllAnomalyIsZero) {
  std::mt19937_64 rng(9);
  const Batch a = {testing::RandomLogits(rng, 5, 2, 2)};
  const Batch b = {testing::RandomLogits(rng, 5, 2, 2)};
  const Masks masks = {TriLabelMask::Filled(2, 2, PixelLabel::kAnomaly)};
  const auto r = consistency_loss<double>(a, b, masks);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.grad[0].isZero(0.0));
}

TEST(ConsistencyLossTest, MatchesOracleAndMeanDividesByInlierCount) {
  std::mt19937_64 rng(10);
  for (Index classes : {2, 5, 19}) {
    const Instance inst = RandomInstance(rng, classes);
    const auto sum = consistency_loss<double>(inst.logits, inst.reference,
                                              inst.masks);
    const double want = static_cast<double>(
        OracleConsistency(inst.logits, inst.reference, inst.masks));
    EXPECT_NEAR(sum.value, want, 1e-12 * std::max(1.0, want));
    Index inliers = 0;
    for (const auto& m : inst.masks) inliers += (m.codes().array() == 0).count();
    const auto mean = consistency_loss<double>(inst.logits, inst.reference,
                                               inst.masks, Reduction::kMean);
    EXPECT_NEAR(mean.value, sum.value / inliers, 1e-14 * std::max(1.0, want));
  }
}

TEST(LinearEnergyLossTest, ClosedForms) {
  const Batch zeros = {LogitMap<double>::Zero(4, 1, 2)};
  ByteMatrix codes(1, 2);
  codes << 1, 0;
  const Masks masks = {TriLabelMask(codes)};
  EXPECT_EQ(linear_energy_loss<double>(zeros, masks).value, 0.0);

  PlaneMatrix<double> v(2, 2);
  const double a = 5.0 - std::log(2.0);
  const double b = 2.0 - std::log(2.0);
  v << a, b,  //
      a, b;
  const Batch constructed = {LogitMap<double>(1, 2, v)};
  EXPECT_NEAR(linear_energy_loss<double>(constructed, masks).value, 3.0, 1e-12);
}

TEST(ComposeTest, LinearCombination) {
  PlaneMatrix<double> g1 = PlaneMatrix<double>::Constant(2, 3, 1.0);
  PlaneMatrix<double> g2 = PlaneMatrix<double>::Constant(2, 3, -4.0);
  const LossResult<double> a{2.0, {g1}};
  const LossResult<double> b{3.0, {g2}};
  const auto total = compose_total<double>({{a, 0.5}, {b, 1.0}});
  EXPECT_EQ(total.value, 4.0);
  EXPECT_TRUE(total.grad[0].isApprox(PlaneMatrix<double>::Constant(2, 3, -3.5)));
  const auto identity = compose_total<double>({{a, 1.0}});
  EXPECT_EQ(identity.value, a.value);
  EXPECT_EQ(identity.grad[0], a.grad[0]);
  const LossResult<double> wrong{1.0, {PlaneMatrix<double>::Zero(3, 3)}};
  EXPECT_THROW((compose_total<double>({{a, 1.0}, {wrong, 1.0}})), Error);
}

TEST(ComposeTest, PixelwiseTotalEqualsManualComposition) {
  std::mt19937_64 rng(12);
  const Instance inst = RandomInstance(rng, 19);
  const HyperParams<double> hp;
  const auto cons =
      consistency_loss<double>(inst.logits, inst.reference, inst.masks);
  const auto eel = eel_loss<double>(inst.logits, inst.masks, hp);
  const auto total = rpl_total(cons, eel, hp);
  EXPECT_NEAR(total.value, cons.value + 0.05 * eel.value, 1e-12);
  for (std::size_t b = 0; b < total.grad.size(); ++b) {
    EXPECT_TRUE(total.grad[b].isApprox(cons.grad[b] + 0.05 * eel.grad[b], 1e-12));
  }
}

TEST(ComposeTest, MaskwiseTotalUsesExternalScalars) {
  std::mt19937_64 rng(13);
  const Instance inst = RandomInstance(rng, 5);
  const auto eel = eel_loss<double>(inst.logits, inst.masks);
  const auto total = m2a_total(1.5, 0.25, eel, HyperParams<double>{});
  EXPECT_NEAR(total.value, 1.5 + 0.25 + 0.05 * eel.value, 1e-14);
  EXPECT_TRUE(total.grad[0].isApprox(0.05 * eel.grad[0]));
}

TEST(HyperParamsTest, Defaults) {
  const HyperParams<double> hp;
  EXPECT_EQ(hp.alpha, 1.0);
  EXPECT_EQ(hp.lambda, 0.05);
  EXPECT_EQ(hp.lambda_ce, 1.0);
  EXPECT_EQ(hp.inlier_entropy_sign, InlierEntropySign::kAsPrinted);
  HyperParams<double> bad;
  bad.lambda = -1;
  EXPECT_THROW(bad.Validate(), Error);
}

TEST(FiniteDiffCheckTest, QuadraticIsExact) {
  Vector<double> x(6);
  x << 0.3, -1.2, 2.0, 0.0, 5.5, -0.7;
  const std::function<double(const Vector<double>&)> f =
      [](const Vector<double>& v) { return 0.5 * v.squaredNorm(); };
  EXPECT_LT(finite_diff_check<double>(f, x, x, 1e-5), 1e-8);
}

TEST(FiniteDiffCheckTest, LargeStepIsReportedNotHidden) {
  std::mt19937_64 rng(14);
  const Instance inst = RandomInstance(rng, 5);
  const LossFunction<double> loss = [&](std::span<const LogitMap<double>> l) {
    return eel_loss<double>(l, inst.masks);
  };
  EXPECT_GT(finite_diff_check<double>(loss, inst.logits, 10.0), 1e-4);
  EXPECT_THROW(finite_diff_check<double>(loss, inst.logits, 0.0), Error);
}

TEST(FiniteDiffCheckTest, NonFiniteProbeIsAnError) {
  Vector<double> x(1);
  x << 0.0;
  const std::function<double(const Vector<double>&)> f =
      [](const Vector<double>& v) { return v(0) > 0 ? INFINITY : 0.0; };
  try {
    finite_diff_check<double>(f, x, x, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

}  // namespace
}  // namespace oodseg
