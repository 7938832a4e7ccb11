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

#ifndef OODSEG_IO_H_
#define OODSEG_IO_H_

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "oodseg/raster.h"

namespace oodseg {

// File formats:
//   images  - 8-bit RGB PNG
//   labels  - 8-bit grayscale PNG with codes 0/1/255
//   logits  - NPY v1.0, '<f8', C-order, shape [C,H,W]
//   scores  - NPY v1.0, '<f8', C-order, shape [H,W]
enum class RasterKind { kImage, kLogits, kScores, kLabels };

using AnyRaster =
    std::variant<ImageRaster, LogitMap<double>, ScoreMap<double>, TriLabelMask>;

RasterKind ParseRasterKind(std::string_view name);

AnyRaster load_raster(const std::filesystem::path& path, RasterKind kind);
void save_raster(const AnyRaster& raster, const std::filesystem::path& path);

ImageRaster load_image(const std::filesystem::path& path);
LogitMap<double> load_logits(const std::filesystem::path& path);
ScoreMap<double> load_scores(const std::filesystem::path& path);
TriLabelMask load_labels(const std::filesystem::path& path);

void save_image(const ImageRaster& image, const std::filesystem::path& path);
void save_logits(const LogitMap<double>& logits,
                 const std::filesystem::path& path);
void save_scores(const ScoreMap<double>& scores,
                 const std::filesystem::path& path);
void save_labels(const TriLabelMask& labels, const std::filesystem::path& path);

// Single-channel 8-bit PNG without code validation (semantic ids, alpha).
ByteMatrix load_gray_png(const std::filesystem::path& path);
void save_gray_png(const ByteMatrix& pixels, const std::filesystem::path& path);

/// A dense little-endian float64 array as stored in an NPY container.
struct NpyArray {
  std::vector<Index> shape;
  std::vector<double> data;

  Index size() const;
};

NpyArray decode_npy(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_npy(std::span<const Index> shape,
                                     std::span<const double> data);

NpyArray read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, std::span<const Index> shape,
               std::span<const double> data);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// Writes through a sibling temporary file and renames it into place, so a
// failed write never leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view text);

// Tracks files written by one command. Unless Commit() is called, the
// destructor deletes every recorded file, so a failed run leaves nothing
// behind. Thread-safe.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet();

  void Write(const std::filesystem::path& path,
             std::span<const std::uint8_t> bytes);
  void Write(const std::filesystem::path& path, std::string_view text);
  // For files produced by other writers (save_image and friends).
  void Record(const std::filesystem::path& path);
  void Commit();

  std::vector<std::filesystem::path> paths() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::filesystem::path> paths_;
  bool committed_ = false;
};

}  // namespace oodseg

#endif  // OODSEG_IO_H_
