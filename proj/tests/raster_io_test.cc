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
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "oodseg/io.h"
#include "oodseg/raster.h"
#include "test_util.h"

namespace oodseg {
namespace {

using testing::TempDir;

TEST(LogitMapTest, StoresClassMajorLayout) {
  PlaneMatrix<double> v(2, 6);
  v << 0, 1, 2, 3, 4, 5,  //
      10, 11, 12, 13, 14, 15;
  LogitMap<double> logits(2, 3, v);
  EXPECT_EQ(logits.classes(), 2);
  EXPECT_EQ(logits.pixels(), 6);
  EXPECT_EQ(logits(1, 1, 2), 15);
  EXPECT_EQ(logits(0, 0, 1), 1);
}

TEST(LogitMapTest, RejectsBadShapesAndValues) {
  EXPECT_THROW(LogitMap<double>(2, 2, PlaneMatrix<double>::Zero(1, 4)), Error);
  EXPECT_THROW(LogitMap<double>(2, 2, PlaneMatrix<double>::Zero(3, 5)), Error);
  PlaneMatrix<double> v = PlaneMatrix<double>::Zero(3, 4);
  v(1, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    LogitMap<double>(2, 2, v);
    FAIL() << "NaN accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(TriLabelMaskTest, RejectsUnknownCodes) {
  ByteMatrix codes(1, 3);
  codes << 0, 2, 255;
  try {
    TriLabelMask mask(codes);
    FAIL() << "code 2 accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownLabel);
    EXPECT_NE(std::string(e.what()).find("pixel 1"), std::string::npos);
  }
}

TEST(PadEmbedTest, PlacesBlockAndZeroesElsewhere) {
  PlaneMatrix<double> block(1, 2);
  block << 7, 8;
  const PlaneMatrix<double> out = pad_embed(block, 3, 3, 2, 1);
  EXPECT_EQ(out.sum(), 15);
  EXPECT_EQ(out(2, 1), 7);
  EXPECT_EQ(out(2, 2), 8);
  EXPECT_THROW(pad_embed(block, 3, 3, 2, 2), Error);
  EXPECT_THROW(pad_embed(block, 3, 3, -1, 0), Error);
}

TEST(ObjectCutoutTest, RequiresMatchingAlphaAndSupport) {
  ObjectCutout cutout{ImageRaster(2, 2), PlaneMatrix<double>::Zero(2, 2), "x"};
  EXPECT_THROW(cutout.Validate(), Error);
  EXPECT_NO_THROW(cutout.Validate(false));
  cutout.alpha(0, 0) = 1.0;
  EXPECT_NO_THROW(cutout.Validate());
  cutout.alpha(0, 1) = 1.5;
  EXPECT_THROW(cutout.Validate(), Error);
}

TEST(NpyTest, ByteIdenticalToNumpyWriter) {
  const auto path = testing::SourceDir() / "tests/data/arange_19x8x8.npy";
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  const NpyArray array = decode_npy(bytes);
  ASSERT_EQ(array.shape, (std::vector<Index>{19, 8, 8}));
  for (std::size_t i = 0; i < array.data.size(); ++i) {
    ASSERT_EQ(array.data[i], static_cast<double>(i) / 7.0) << i;
  }
  EXPECT_EQ(encode_npy(array.shape, array.data), bytes);
  EXPECT_EQ(bytes.size(), 128u + 19 * 64 * 8);
}

TEST(NpyTest, HeaderMatchesNumpyForSmallShapes) {
  const std::vector<double> data(4, 1.0);
  const std::vector<Index> shape = {2, 2};
  const auto bytes = encode_npy(shape, data);
  const std::string header(bytes.begin() + 10, bytes.begin() + 128);
  EXPECT_EQ(header.substr(0, 59),
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }");
  EXPECT_EQ(header.back(), '\n');
  const std::vector<Index> one_d = {5};
  const auto vec_bytes = encode_npy(one_d, std::vector<double>(5, 0.0));
  const std::string vec_header(vec_bytes.begin() + 10, vec_bytes.begin() + 128);
  EXPECT_EQ(vec_header.substr(0, 57),
            "{'descr': '<f8', 'fortran_order': False, 'shape': (5,), }");
}

TEST(NpyTest, RejectsMalformedInput) {
  const std::vector<double> data = {1.0, 2.0};
  const std::vector<Index> shape = {2};
  std::vector<std::uint8_t> bytes = encode_npy(shape, data);
  auto expect_code = [](std::span<const std::uint8_t> b, ErrorCode code) {
    try {
      decode_npy(b);
      FAIL() << "accepted malformed NPY";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };
  expect_code(std::span(bytes).first(bytes.size() - 1), ErrorCode::kMalformedFile);
  std::vector<std::uint8_t> bad_magic = bytes;
  bad_magic[1] = 'X';
  expect_code(bad_magic, ErrorCode::kMalformedFile);
  std::string text(bytes.begin(), bytes.end());
  text.replace(text.find("<f8"), 3, "<f4");
  expect_code(std::vector<std::uint8_t>(text.begin(), text.end()),
              ErrorCode::kMalformedFile);
  text = std::string(bytes.begin(), bytes.end());
  text.replace(text.find("False"), 5, "True ");
  expect_code(std::vector<std::uint8_t>(text.begin(), text.end()),
              ErrorCode::kMalformedFile);
}

TEST(RasterFilesTest, RoundTripsEveryKind) {
  TempDir dir;
  std::mt19937_64 rng(7);
  const LogitMap<double> logits = testing::RandomLogits(rng, 3, 4, 5);
  save_logits(logits, dir / "l.npy");
  EXPECT_EQ(load_logits(dir / "l.npy").values(), logits.values());

  const ScoreMap<double> scores(logits.values().row(0).reshaped<Eigen::RowMajor>(4, 5));
  save_scores(scores, dir / "s.npy");
  EXPECT_EQ(load_scores(dir / "s.npy").values(), scores.values());

  const TriLabelMask mask = testing::RandomMask(rng, 4, 5);
  save_labels(mask, dir / "m.png");
  EXPECT_TRUE(load_labels(dir / "m.png") == mask);

  ImageRaster image(3, 2);
  for (std::size_t i = 0; i < image.data().size(); ++i) {
    image(static_cast<Index>(i / 6), static_cast<Index>((i / 3) % 2),
          static_cast<Index>(i % 3)) = static_cast<std::uint8_t>(i * 13);
  }
  save_image(image, dir / "i.png");
  EXPECT_EQ(load_image(dir / "i.png"), image);

  const AnyRaster any = load_raster(dir / "m.png", RasterKind::kLabels);
  EXPECT_TRUE(std::get<TriLabelMask>(any) == mask);
}

TEST(RasterFilesTest, RankAndKindMismatchesAreTyped) {
  TempDir dir;
  const std::vector<Index> shape2 = {2, 2};
  write_npy(dir / "s.npy", shape2, std::vector<double>(4, 0.0));
  try {
    load_logits(dir / "s.npy");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  ByteMatrix bad(1, 2);
  bad << 0, 7;
  save_gray_png(bad, dir / "bad.png");
  try {
    load_labels(dir / "bad.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownLabel);
  }
  try {
    read_file_bytes(dir / "missing.npy");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
  EXPECT_THROW(ParseRasterKind("voxels"), Error);
}

TEST(OutputSetTest, RemovesFilesUnlessCommitted) {
  TempDir dir;
  {
    OutputSet outputs;
    outputs.Write(dir / "a.txt", std::string_view("a"));
    EXPECT_TRUE(std::filesystem::exists(dir / "a.txt"));
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "a.txt"));
  {
    OutputSet outputs;
    outputs.Write(dir / "b.txt", std::string_view("b"));
    outputs.Commit();
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "b.txt"));
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    EXPECT_EQ(entry.path().filename(), "b.txt") << "leftover temp file";
  }
}

}  // namespace
}  // namespace oodseg
