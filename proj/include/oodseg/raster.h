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

#ifndef OODSEG_RASTER_H_
#define OODSEG_RASTER_H_

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oodseg/error.h"

namespace oodseg {

using Index = Eigen::Index;

// Row-major dense storage. A [C,H,W] array is held as C rows of H*W pixels so
// the in-memory order equals the C-order file layout.
template <typename Scalar>
using PlaneMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ByteMatrix = PlaneMatrix<std::uint8_t>;

enum class PixelLabel : std::uint8_t {
  kInlier = 0,
  kAnomaly = 1,
  kVoid = 255,
};

inline constexpr std::uint8_t kVoidCode = 255;

inline std::string ShapeString(Index a, Index b) {
  return "[" + std::to_string(a) + "," + std::to_string(b) + "]";
}

inline std::string ShapeString(Index a, Index b, Index c) {
  return "[" + std::to_string(a) + "," + std::to_string(b) + "," +
         std::to_string(c) + "]";
}

/// 8-bit RGB image, interleaved row-major (H x W x 3).
class ImageRaster {
 public:
  static constexpr Index kChannels = 3;

  ImageRaster(Index height, Index width)
      : ImageRaster(height, width,
                    std::vector<std::uint8_t>(
                        static_cast<std::size_t>(std::max<Index>(height, 0) *
                                                 std::max<Index>(width, 0) *
                                                 kChannels),
                        0)) {}

  ImageRaster(Index height, Index width, std::vector<std::uint8_t> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (height_ < 1 || width_ < 1) {
      throw Error(ErrorCode::kShapeMismatch,
                  "image dimensions must be positive, got " +
                      ShapeString(height_, width_));
    }
    if (static_cast<Index>(data_.size()) != height_ * width_ * kChannels) {
      throw Error(ErrorCode::kShapeMismatch,
                  "image payload has " + std::to_string(data_.size()) +
                      " bytes, expected H*W*3 for " +
                      ShapeString(height_, width_));
    }
  }

  Index height() const { return height_; }
  Index width() const { return width_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  std::uint8_t operator()(Index row, Index col, Index channel) const {
    return data_[Offset(row, col, channel)];
  }
  std::uint8_t& operator()(Index row, Index col, Index channel) {
    return data_[Offset(row, col, channel)];
  }

  friend bool operator==(const ImageRaster&, const ImageRaster&) = default;

 private:
  std::size_t Offset(Index row, Index col, Index channel) const {
    return static_cast<std::size_t>((row * width_ + col) * kChannels + channel);
  }

  Index height_;
  Index width_;
  std::vector<std::uint8_t> data_;
};

namespace internal {

template <typename Derived>
void RequireFinite(const Eigen::DenseBase<Derived>& values,
                   const char* what) {
  if (!values.allFinite()) {
    throw Error(ErrorCode::kNonFinite,
                std::string(what) + " contains NaN or Inf values");
  }
}

}  // namespace internal

/// Per-pixel class logits with layout [C,H,W]; every value finite, C >= 2.
template <typename Scalar>
class LogitMap {
 public:
  using Matrix = PlaneMatrix<Scalar>;

  LogitMap(Index height, Index width, Matrix values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (height_ < 1 || width_ < 1) {
      throw Error(ErrorCode::kShapeMismatch,
                  "logit map dimensions must be positive, got " +
                      ShapeString(height_, width_));
    }
    if (values_.rows() < 2) {
      throw Error(ErrorCode::kShapeMismatch,
                  "logit map needs at least 2 classes, got " +
                      std::to_string(values_.rows()));
    }
    if (values_.cols() != height_ * width_) {
      throw Error(ErrorCode::kShapeMismatch,
                  "logit payload has " + std::to_string(values_.cols()) +
                      " pixels per class, expected " +
                      std::to_string(height_ * width_));
    }
    internal::RequireFinite(values_, "logit map");
  }

  static LogitMap Zero(Index classes, Index height, Index width) {
    return LogitMap(height, width,
                    Matrix::Zero(classes, std::max<Index>(height * width, 0)));
  }

  Index classes() const { return values_.rows(); }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index pixels() const { return values_.cols(); }

  /// C x (H*W) view; column p holds the logits of pixel p = row*W + col.
  const Matrix& values() const { return values_; }

  Scalar operator()(Index c, Index row, Index col) const {
    return values_(c, row * width_ + col);
  }

  template <typename NewScalar>
  LogitMap<NewScalar> cast() const {
    return LogitMap<NewScalar>(height_, width_,
                               values_.template cast<NewScalar>());
  }

 private:
  Index height_;
  Index width_;
  Matrix values_;
};

/// Per-pixel scalar map [H,W] with finite values.
template <typename Scalar>
class ScoreMap {
 public:
  using Matrix = PlaneMatrix<Scalar>;

  explicit ScoreMap(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
      throw Error(ErrorCode::kShapeMismatch,
                  "score map dimensions must be positive, got " +
                      ShapeString(values_.rows(), values_.cols()));
    }
    internal::RequireFinite(values_, "score map");
  }

  Index height() const { return values_.rows(); }
  Index width() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  Scalar operator()(Index row, Index col) const { return values_(row, col); }

 private:
  Matrix values_;
};

/// Ground truth with codes 0 (inlier), 1 (anomaly), 255 (void).
class TriLabelMask {
 public:
  explicit TriLabelMask(ByteMatrix codes) : codes_(std::move(codes)) {
    if (codes_.rows() < 1 || codes_.cols() < 1) {
      throw Error(ErrorCode::kShapeMismatch,
                  "label mask dimensions must be positive, got " +
                      ShapeString(codes_.rows(), codes_.cols()));
    }
    for (Index i = 0; i < codes_.size(); ++i) {
      const std::uint8_t code = codes_.data()[i];
      if (code != 0 && code != 1 && code != kVoidCode) {
        throw Error(ErrorCode::kUnknownLabel,
                    "unknown label code " + std::to_string(code) +
                        " at pixel " + std::to_string(i));
      }
    }
  }

  static TriLabelMask Filled(Index height, Index width, PixelLabel label) {
    return TriLabelMask(
        ByteMatrix::Constant(height, width, static_cast<std::uint8_t>(label)));
  }

  Index height() const { return codes_.rows(); }
  Index width() const { return codes_.cols(); }
  Index pixels() const { return codes_.size(); }
  const ByteMatrix& codes() const { return codes_; }

  PixelLabel operator()(Index row, Index col) const {
    return static_cast<PixelLabel>(codes_(row, col));
  }
  PixelLabel at_pixel(Index pixel) const {
    return static_cast<PixelLabel>(codes_.data()[pixel]);
  }
  void set(Index row, Index col, PixelLabel label) {
    codes_(row, col) = static_cast<std::uint8_t>(label);
  }

  friend bool operator==(const TriLabelMask& a, const TriLabelMask& b) {
    return a.codes_ == b.codes_;
  }

 private:
  ByteMatrix codes_;
};

/// Per-pixel semantic class ids: 0..C-1 for inliers, an anomaly id P >= C,
/// and 255 for void.
class SemanticLabelMap {
 public:
  explicit SemanticLabelMap(ByteMatrix ids) : ids_(std::move(ids)) {
    if (ids_.rows() < 1 || ids_.cols() < 1) {
      throw Error(ErrorCode::kShapeMismatch,
                  "semantic label map dimensions must be positive");
    }
  }

  Index height() const { return ids_.rows(); }
  Index width() const { return ids_.cols(); }
  const ByteMatrix& ids() const { return ids_; }
  std::uint8_t operator()(Index row, Index col) const { return ids_(row, col); }
  std::uint8_t& operator()(Index row, Index col) { return ids_(row, col); }

  friend bool operator==(const SemanticLabelMap& a,
                         const SemanticLabelMap& b) {
    return a.ids_ == b.ids_;
  }

 private:
  ByteMatrix ids_;
};

/// An out-of-distribution object: RGB pixels plus a soft alpha mask.
struct ObjectCutout {
  ImageRaster image;
  PlaneMatrix<double> alpha;
  std::string tag;

  Index height() const { return image.height(); }
  Index width() const { return image.width(); }

  // alpha matches the image, lies in [0,1]. With require_support, at least one
  // pixel must exceed 0.5 so the binarized object is nonempty.
  void Validate(bool require_support = true) const {
    if (alpha.rows() != image.height() || alpha.cols() != image.width()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "cutout alpha " + ShapeString(alpha.rows(), alpha.cols()) +
                      " does not match image " +
                      ShapeString(image.height(), image.width()));
    }
    if (!alpha.allFinite() || (alpha.array() < 0.0).any() ||
        (alpha.array() > 1.0).any()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cutout alpha must lie in [0,1]");
    }
    if (require_support && !(alpha.array() > 0.5).any()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cutout '" + tag + "' has no pixel with alpha > 0.5");
    }
  }
};

/// Zero-pads `plane` into a (height x width) canvas with its top-left corner at
/// (row, col). The window must lie fully inside the canvas.
template <typename Derived>
PlaneMatrix<typename Derived::Scalar> pad_embed(
    const Eigen::MatrixBase<Derived>& plane, Index height, Index width,
    Index row, Index col) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCode::kShapeMismatch, "canvas dimensions must be positive");
  }
  if (row < 0 || col < 0 || row + plane.rows() > height ||
      col + plane.cols() > width) {
    throw Error(ErrorCode::kOutOfBounds,
                "window " + ShapeString(plane.rows(), plane.cols()) +
                    " at offset " + ShapeString(row, col) +
                    " exceeds canvas " + ShapeString(height, width));
  }
  PlaneMatrix<typename Derived::Scalar> out =
      PlaneMatrix<typename Derived::Scalar>::Zero(height, width);
  out.block(row, col, plane.rows(), plane.cols()) = plane;
  return out;
}

}  // namespace oodseg

#endif  // OODSEG_RASTER_H_
