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
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oodseg/io.h"
#include "oodseg/synth.h"
#include "test_util.h"

namespace oodseg {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

ImageRaster RandomImage(std::mt19937_64& rng, Index h, Index w) {
  std::vector<std::uint8_t> data(static_cast<std::size_t>(h * w * 3));
  for (auto& v : data) v = static_cast<std::uint8_t>(rng() & 0xff);
  return ImageRaster(h, w, std::move(data));
}

ImageRaster Uniform(Index h, Index w, std::uint8_t v) {
  return ImageRaster(h, w, std::vector<std::uint8_t>(h * w * 3, v));
}

ObjectCutout RandomCutout(std::mt19937_64& rng, Index h, Index w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlaneMatrix<double> alpha(h, w);
  for (Index i = 0; i < alpha.size(); ++i) alpha.data()[i] = u(rng);
  alpha(0, 0) = 1.0;
  return ObjectCutout{RandomImage(rng, h, w), alpha, "random"};
}

// Top half class 1, bottom half class 0 (the default ground class).
SemanticLabelMap RoadScene(Index h, Index w) {
  ByteMatrix ids = ByteMatrix::Zero(h, w);
  ids.topRows(h / 2).setConstant(1);
  return SemanticLabelMap(ids);
}

TEST(SynthConfigTest, AnomalyIdMustExceedInlierIds) {
  SynthConfig config;
  config.num_classes = 19;
  config.anomaly_id = 20;
  EXPECT_NO_THROW(config.Validate());
  config.anomaly_id = 5;
  try {
    config.Validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  config.anomaly_id = 255;
  EXPECT_THROW(config.Validate(), Error);
  config = SynthConfig{};
  config.scale_min = 2.0;
  config.scale_max = 1.0;
  EXPECT_THROW(config.Validate(), Error);
  config = SynthConfig{};
  config.feather_radius = -1;
  EXPECT_THROW(config.Validate(), Error);
}

TEST(BlendTest, ZeroAlphaIsIdentity) {
  std::mt19937_64 rng(1);
  const ImageRaster image = RandomImage(rng, 6, 7);
  const SemanticLabelMap labels = RoadScene(6, 7);
  ObjectCutout cutout = RandomCutout(rng, 3, 3);
  cutout.alpha.setZero();
  const Composite out = blend_composite(image, labels, cutout, {2, 2, 1.0}, {});
  EXPECT_EQ(out.image, image);
  EXPECT_TRUE(out.labels == labels);
  EXPECT_TRUE(out.mask == TriLabelMask::Filled(6, 7, PixelLabel::kInlier));
}

TEST(BlendTest, SinglePixelCutout) {
  const ImageRaster image = Uniform(3, 3, 7);
  const SemanticLabelMap labels = RoadScene(3, 3);
  ImageRaster pixel(1, 1, {10, 20, 30});
  const ObjectCutout cutout{pixel, PlaneMatrix<double>::Ones(1, 1), "px"};
  SynthConfig config;
  config.anomaly_id = 20;
  const Composite out = blend_composite(image, labels, cutout, {0, 0, 1.0}, config);
  EXPECT_EQ(out.image(0, 0, 0), 10);
  EXPECT_EQ(out.image(0, 0, 1), 20);
  EXPECT_EQ(out.image(0, 0, 2), 30);
  EXPECT_EQ(out.labels.ids()(0, 0), 20);
  EXPECT_EQ(out.mask.at_pixel(0), PixelLabel::kAnomaly);
  for (Index i = 1; i < 9; ++i) {
    const Index r = i / 3, c = i % 3;
    for (Index ch = 0; ch < 3; ++ch) EXPECT_EQ(out.image(r, c, ch), 7);
    EXPECT_EQ(out.labels.ids()(r, c), labels.ids()(r, c));
    EXPECT_EQ(out.mask.at_pixel(i), PixelLabel::kInlier);
  }
}

TEST(BlendTest, OutOfBoundsPlacementIsTyped) {
  std::mt19937_64 rng(2);
  const ImageRaster image = RandomImage(rng, 4, 4);
  const ObjectCutout cutout = RandomCutout(rng, 2, 2);
  try {
    blend_composite(image, RoadScene(4, 4), cutout, {3, 0, 1.0}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfBounds);
  }
}

TEST(BlendTest, ExactnessOverRandomCutoutsAndPlacements) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<Index> side(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const Index h = 12, w = 15;
    const ImageRaster image = RandomImage(rng, h, w);
    ByteMatrix ids(h, w);
    for (Index i = 0; i < ids.size(); ++i) {
      ids.data()[i] = rng() % 10 == 0 ? kVoidCode : static_cast<std::uint8_t>(rng() % 19);
    }
    const SemanticLabelMap labels(ids);
    const ObjectCutout cutout = RandomCutout(rng, side(rng), side(rng));
    const Placement place{static_cast<Index>(rng() % (h - cutout.height() + 1)),
                          static_cast<Index>(rng() % (w - cutout.width() + 1)),
                          1.0};
    SynthConfig config;
    config.match_luminance = trial % 2 == 0;
    const HarmonizedCutout harmonized =
        harmonize_cutout(cutout, image, place, config);
    const Composite out =
        blend_composite(image, labels, harmonized.cutout, place, config);
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        const Index lr = r - place.row, lc = c - place.col;
        const bool inside = lr >= 0 && lc >= 0 && lr < cutout.height() &&
                            lc < cutout.width();
        const bool masked = inside && harmonized.cutout.alpha(lr, lc) > 0.5;
        for (Index ch = 0; ch < 3; ++ch) {
          EXPECT_EQ(out.image(r, c, ch),
                    masked ? harmonized.cutout.image(lr, lc, ch) : image(r, c, ch));
        }
        const std::uint8_t id = out.labels.ids()(r, c);
        EXPECT_EQ(id, masked ? config.anomaly_id : ids(r, c));
        EXPECT_EQ(out.mask.at_pixel(r * w + c) == PixelLabel::kAnomaly,
                  id == config.anomaly_id);
        EXPECT_TRUE(id < config.num_classes || id == config.anomaly_id ||
                    id == kVoidCode);
      }
    }
  }
}

TEST(BlendTest, FeatherZeroIsHardCompositing) {
  std::mt19937_64 rng(4);
  const ImageRaster image = RandomImage(rng, 8, 8);
  const ObjectCutout cutout = RandomCutout(rng, 4, 4);
  const PlaneMatrix<double> alpha = cutout.alpha;
  EXPECT_EQ(feather_alpha(alpha, 0), alpha);
  ObjectCutout hard = cutout;
  hard.alpha = (alpha.array() > 0.5).cast<double>().matrix();
  SynthConfig config;
  const Composite a = blend_composite(image, RoadScene(8, 8), cutout, {1, 1, 1.0}, config);
  const Composite b = blend_composite(image, RoadScene(8, 8), hard, {1, 1, 1.0}, config);
  EXPECT_EQ(a.image, b.image);
  EXPECT_TRUE(a.labels == b.labels);

  // Feathering softens colors only; labels stay binarized.
  config.feather_radius = 1;
  const Composite soft = blend_composite(image, RoadScene(8, 8), cutout, {1, 1, 1.0}, config);
  EXPECT_TRUE(soft.labels == a.labels);
  EXPECT_TRUE(soft.mask == a.mask);
}

TEST(FeatherTest, BoxFilterStaysInUnitRange) {
  const PlaneMatrix<double> alpha = PlaneMatrix<double>::Ones(5, 5);
  const PlaneMatrix<double> soft = feather_alpha(alpha, 1);
  EXPECT_DOUBLE_EQ(soft(2, 2), 1.0);
  EXPECT_NEAR(soft(0, 0), 4.0 / 9.0, 1e-15);
  EXPECT_GE(soft.minCoeff(), 0.0);
  EXPECT_LE(soft.maxCoeff(), 1.0);
}

TEST(PlacementTest, LowerHalfFallbackAndDeterminism) {
  std::mt19937_64 rng(5);
  const ObjectCutout cutout = RandomCutout(rng, 3, 3);
  // No ground-class pixels: every pixel is class 2.
  const SemanticLabelMap labels(ByteMatrix::Constant(20, 20, 2));
  SynthConfig config;
  config.scale_min = config.scale_max = 1.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomStream a(seed, 0), b(seed, 0);
    const Placement p = propose_placement(labels, cutout, config, a);
    EXPECT_EQ(p, propose_placement(labels, cutout, config, b));
    const Index base_row = p.row + 3 - 1;
    EXPECT_GE(base_row, 10);
    EXPECT_EQ(p.scale, 1.0);
  }
}

TEST(PlacementTest, AnchorsOnGroundWithPerspectiveScale) {
  std::mt19937_64 rng(6);
  const ObjectCutout cutout = RandomCutout(rng, 4, 4);
  const SemanticLabelMap labels = RoadScene(40, 40);
  SynthConfig config;
  config.scale_min = 0.5;
  config.scale_max = 1.5;
  RandomStream stream(11, 3);
  for (int k = 0; k < 50; ++k) {
    const Placement p = propose_placement(labels, cutout, config, stream);
    const auto [h, w] = ScaledSize(cutout, p.scale);
    const Index base_row = p.row + h - 1;
    const Index base_col = p.col + w / 2;
    EXPECT_EQ(labels.ids()(base_row, base_col), 0);
    EXPECT_DOUBLE_EQ(p.scale, 0.5 + 1.0 * base_row / 40.0);
    EXPECT_LE(p.row + h, 40);
    EXPECT_LE(p.col + w, 40);
  }
}

TEST(PlacementTest, InfeasibleAfterBoundedDraws) {
  std::mt19937_64 rng(7);
  const ObjectCutout cutout = RandomCutout(rng, 10, 10);
  SynthConfig config;
  config.scale_min = config.scale_max = 1.0;
  config.max_placement_draws = 20;
  RandomStream stream(1, 1);
  try {
    propose_placement(RoadScene(6, 6), cutout, config, stream);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
}

TEST(HarmonizeTest, GainExamples) {
  ImageRaster pixels(1, 2, {200, 200, 200, 0, 0, 0});
  const ObjectCutout cutout{pixels, PlaneMatrix<double>::Ones(1, 2), "c"};
  const SynthConfig config;
  const auto half = harmonize_cutout(cutout, Uniform(4, 4, 50), {0, 0, 1.0}, config);
  EXPECT_NEAR(half.gain, 0.5, 1e-12);
  EXPECT_EQ(half.cutout.image(0, 0, 0), 100);
  EXPECT_FALSE(half.gain_defaulted);

  const auto same = harmonize_cutout(cutout, Uniform(4, 4, 100), {0, 0, 1.0}, config);
  EXPECT_NEAR(same.gain, 1.0, 1e-12);
  EXPECT_EQ(same.cutout.image, cutout.image);

  const ObjectCutout dim{Uniform(1, 1, 10), PlaneMatrix<double>::Ones(1, 1), "d"};
  const auto clamped = harmonize_cutout(dim, Uniform(2, 2, 255), {0, 0, 1.0}, config);
  EXPECT_EQ(clamped.gain, kMaxGain);
  EXPECT_EQ(clamped.cutout.image(0, 0, 1), 40);

  const ObjectCutout black{Uniform(1, 1, 0), PlaneMatrix<double>::Ones(1, 1), "k"};
  const auto defaulted = harmonize_cutout(black, Uniform(2, 2, 90), {0, 0, 1.0}, config);
  EXPECT_TRUE(defaulted.gain_defaulted);
  EXPECT_EQ(defaulted.gain, 1.0);
}

TEST(HarmonizeTest, ResamplesToPlacementScale) {
  std::mt19937_64 rng(8);
  const ObjectCutout cutout = RandomCutout(rng, 4, 6);
  SynthConfig config;
  config.match_luminance = false;
  const auto out = harmonize_cutout(cutout, Uniform(20, 20, 1), {0, 0, 2.0}, config);
  EXPECT_EQ(out.cutout.height(), 8);
  EXPECT_EQ(out.cutout.width(), 12);
  EXPECT_THROW(harmonize_cutout(cutout, Uniform(5, 5, 1), {0, 0, 2.0}, config),
               Error);
  const ObjectCutout same = resample_cutout(cutout, 4, 6);
  EXPECT_EQ(same.image, cutout.image);
  EXPECT_EQ(same.alpha, cutout.alpha);
}

TEST(LuminanceTest, StandardWeights) {
  EXPECT_NEAR(luminance(255, 255, 255), 255.0, 1e-12);
  EXPECT_NEAR(luminance(100, 0, 0), 29.9, 1e-12);
}

// Writes a tiny dataset: `images` road scenes and the given cutouts.
struct Dataset {
  fs::path inliers;
  fs::path library;
};

Dataset WriteDataset(const fs::path& dir, int images, int cutouts) {
  std::mt19937_64 rng(99);
  fs::create_directories(dir / "in");
  std::ofstream manifest(dir / "in/manifest.jsonl");
  for (int i = 0; i < images; ++i) {
    const std::string stem = "scene" + std::to_string(i);
    save_image(RandomImage(rng, 24, 32), dir / "in" / (stem + ".png"));
    save_gray_png(RoadScene(24, 32).ids(), dir / "in" / (stem + "_labels.png"));
    manifest << "{\"image\": \"" << stem << ".png\", \"labels\": \"" << stem
             << "_labels.png\"}\n";
  }
  std::ofstream library(dir / "in/library.jsonl");
  for (int k = 0; k < cutouts; ++k) {
    const std::string id = "obj" + std::to_string(k);
    const ObjectCutout cutout = RandomCutout(rng, 5, 4);
    save_image(cutout.image, dir / "in" / (id + ".png"));
    save_gray_png((cutout.alpha * 255.0).array().round().cast<std::uint8_t>().matrix(),
                  dir / "in" / (id + "_alpha.png"));
    library << "{\"id\": \"" << id << "\", \"image\": \"" << id
            << ".png\", \"alpha\": \"" << id << "_alpha.png\", \"tag\": \"t\"}\n";
  }
  return {dir / "in/manifest.jsonl", dir / "in/library.jsonl"};
}

std::map<std::string, std::vector<std::uint8_t>> Snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    files[entry.path().filename().string()] = read_file_bytes(entry.path());
  }
  return files;
}

SynthSummary Synthesize(const Dataset& data, const fs::path& out, int jobs,
                 std::uint64_t seed = 17) {
  SynthConfig config;
  config.seed = seed;
  OutputSet outputs;
  SynthSummary summary =
      synthesize_dataset(data.inliers, data.library, config, out, outputs, jobs);
  outputs.Commit();
  return summary;
}

TEST(SynthesizeDatasetTest, DeterministicAcrossRerunsAndJobs) {
  TempDir dir;
  const Dataset data = WriteDataset(dir.path(), 2, 1);
  const SynthSummary first = Synthesize(data, dir / "a", 1);
  EXPECT_EQ(first.records.size(), 2u);
  EXPECT_TRUE(first.skipped.empty());
  Synthesize(data, dir / "b", 1);
  EXPECT_EQ(Snapshot(dir / "a"), Snapshot(dir / "b"));
  EXPECT_EQ(Snapshot(dir / "a").size(), 2u * 3 + 1);

  const Dataset many = WriteDataset(dir / "many", 9, 3);
  Synthesize(many, dir / "serial", 1);
  Synthesize(many, dir / "parallel", 4);
  EXPECT_EQ(Snapshot(dir / "serial"), Snapshot(dir / "parallel"));
  Synthesize(many, dir / "other_seed", 1, 18);
  EXPECT_NE(Snapshot(dir / "serial"), Snapshot(dir / "other_seed"));
}

TEST(SynthesizeDatasetTest, ManifestRecordsEverythingNeededForReplay) {
  TempDir dir;
  const Dataset data = WriteDataset(dir.path(), 4, 2);
  const SynthSummary summary = Synthesize(data, dir / "out", 2);
  std::ifstream in(dir / "out" / kSynthManifestName);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const SynthRecord record = SynthRecord::FromJsonLine(line);
    EXPECT_EQ(record.ToJsonLine(), line);
    EXPECT_EQ(record.placement, summary.records[n].placement);
    EXPECT_EQ(record.out_mask, summary.records[n].out_mask);
    ++n;
  }
  EXPECT_EQ(n, summary.records.size());

  SynthConfig config;
  config.seed = 17;
  OutputSet outputs;
  replay_dataset(dir / "out" / kSynthManifestName, data.library, config,
                 dir / "replay", outputs, 3);
  outputs.Commit();
  EXPECT_EQ(Snapshot(dir / "out"), Snapshot(dir / "replay"));
}

TEST(SynthesizeDatasetTest, EmptyLibraryIsConfigError) {
  TempDir dir;
  const Dataset data = WriteDataset(dir.path(), 1, 0);
  OutputSet outputs;
  try {
    synthesize_dataset(data.inliers, data.library, SynthConfig{}, dir / "out",
                       outputs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(SynthesizeDatasetTest, MalformedManifestIsTyped) {
  TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "{\"image\": 3}\n";
  try {
    read_inlier_manifest(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedFile);
  }
  EXPECT_THROW(read_cutout_library(dir / "missing.jsonl"), Error);
}

}  // namespace
}  // namespace oodseg
