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

#include "oodseg/io.h"

#include <png.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

namespace oodseg {
namespace {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "NPY codec assumes a little-endian host");

constexpr char kNpyMagic[] = "\x93NUMPY";
constexpr std::size_t kNpyMagicLen = 6;
// numpy leaves room for the leading axis to grow in place and aligns the
// preamble to 64 bytes; matching both keeps our files byte-identical to
// np.save output.
constexpr std::size_t kNpyGrowthAxisDigits = 21;
constexpr std::size_t kNpyAlign = 64;

Error Malformed(const fs::path& path, const std::string& what) {
  return Error(ErrorCode::kMalformedFile, path.string() + ": " + what);
}

std::string NpyShapeTuple(std::span<const Index> shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  if (shape.size() == 1) out += ",";
  out += ")";
  return out;
}

struct PngDecoded {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  std::vector<std::uint8_t> pixels;
};

// `want_color` selects RGB (true) or single-channel gray (false). Files whose
// stored layout differs are rejected rather than silently converted.
PngDecoded DecodePng(const fs::path& path, bool want_color) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Malformed(path, std::string("invalid PNG: ") + image.message);
  }
  const bool is_color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool has_alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const bool is_linear = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  if (is_color != want_color || has_alpha || is_linear) {
    png_image_free(&image);
    throw Error(ErrorCode::kShapeMismatch,
                path.string() + ": expected 8-bit " +
                    (want_color ? "RGB" : "grayscale") +
                    " PNG without alpha");
  }
  image.format = want_color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  PngDecoded out;
  out.width = image.width;
  out.height = image.height;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw Malformed(path, "PNG decode failed: " + message);
  }
  return out;
}

std::vector<std::uint8_t> EncodePng(const std::uint8_t* pixels, Index height,
                                    Index width, bool color) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, pixels, 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("PNG encode failed: ") +
                                    image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0,
                                 nullptr)) {
    throw Error(ErrorCode::kIo, std::string("PNG encode failed: ") +
                                    image.message);
  }
  out.resize(size);
  return out;
}

NpyArray ReadNpyWithRank(const fs::path& path, std::size_t rank) {
  NpyArray array;
  try {
    array = decode_npy(read_file_bytes(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMalformedFile) throw Malformed(path, e.what());
    throw;
  }
  if (array.shape.size() != rank) {
    throw Error(ErrorCode::kShapeMismatch,
                path.string() + ": expected a rank-" + std::to_string(rank) +
                    " array, got rank " + std::to_string(array.shape.size()));
  }
  return array;
}

}  // namespace

Index NpyArray::size() const {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

RasterKind ParseRasterKind(std::string_view name) {
  if (name == "image") return RasterKind::kImage;
  if (name == "logits") return RasterKind::kLogits;
  if (name == "scores") return RasterKind::kScores;
  if (name == "labels") return RasterKind::kLabels;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown raster kind '" + std::string(name) + "'");
}

NpyArray decode_npy(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10 ||
      std::memcmp(bytes.data(), kNpyMagic, kNpyMagicLen) != 0) {
    throw Error(ErrorCode::kMalformedFile, "missing NPY magic");
  }
  const std::uint8_t major = bytes[6];
  std::size_t header_len = 0;
  std::size_t preamble = 0;
  if (major == 1) {
    header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    preamble = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw Error(ErrorCode::kMalformedFile, "truncated");
    header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8) |
                 (static_cast<std::size_t>(bytes[10]) << 16) |
                 (static_cast<std::size_t>(bytes[11]) << 24);
    preamble = 12;
  } else {
    throw Error(ErrorCode::kMalformedFile,
                "unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < preamble + header_len) {
    throw Error(ErrorCode::kMalformedFile, "truncated NPY header");
  }
  const std::string header(
      reinterpret_cast<const char*>(bytes.data() + preamble), header_len);

  static const std::regex kDescr(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex kFortran(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex kShape(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch match;
  if (!std::regex_search(header, match, kDescr)) {
    throw Error(ErrorCode::kMalformedFile, "NPY header lacks 'descr'");
  }
  if (match[1] != "<f8") {
    throw Error(ErrorCode::kMalformedFile,
                "unsupported dtype '" + match[1].str() +
                    "', expected little-endian float64 '<f8'");
  }
  if (!std::regex_search(header, match, kFortran)) {
    throw Error(ErrorCode::kMalformedFile, "NPY header lacks 'fortran_order'");
  }
  if (match[1] == "True") {
    throw Error(ErrorCode::kMalformedFile, "Fortran-order arrays unsupported");
  }
  if (!std::regex_search(header, match, kShape)) {
    throw Error(ErrorCode::kMalformedFile, "NPY header lacks 'shape'");
  }
  NpyArray array;
  std::stringstream dims(match[1].str());
  std::string token;
  while (std::getline(dims, token, ',')) {
    const auto first = token.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = token.find_last_not_of(" \t");
    token = token.substr(first, last - first + 1);
    if (token.empty() ||
        token.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorCode::kMalformedFile, "bad NPY shape entry '" + token + "'");
    }
    array.shape.push_back(static_cast<Index>(std::stoll(token)));
  }
  const std::size_t count = static_cast<std::size_t>(array.size());
  const std::size_t payload = bytes.size() - preamble - header_len;
  if (payload != count * sizeof(double)) {
    throw Error(ErrorCode::kMalformedFile,
                "NPY payload has " + std::to_string(payload) +
                    " bytes, header declares " + std::to_string(count) +
                    " float64 values");
  }
  array.data.resize(count);
  std::memcpy(array.data.data(), bytes.data() + preamble + header_len,
              payload);
  return array;
}

std::vector<std::uint8_t> encode_npy(std::span<const Index> shape,
                                     std::span<const double> data) {
  if (shape.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "NPY arrays need rank >= 1");
  }
  Index count = 1;
  for (Index d : shape) count *= d;
  if (count != static_cast<Index>(data.size())) {
    throw Error(ErrorCode::kShapeMismatch,
                "shape product " + std::to_string(count) +
                    " does not match data length " +
                    std::to_string(data.size()));
  }
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " +
                       NpyShapeTuple(shape) + ", }";
  const std::size_t lead_digits = std::to_string(shape[0]).size();
  if (lead_digits < kNpyGrowthAxisDigits) {
    header.append(kNpyGrowthAxisDigits - lead_digits, ' ');
  }
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((kNpyAlign - unpadded % kNpyAlign) % kNpyAlign, ' ');
  header.push_back('\n');

  std::vector<std::uint8_t> out;
  out.reserve(10 + header.size() + data.size_bytes());
  out.insert(out.end(), kNpyMagic, kNpyMagic + kNpyMagicLen);
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());
  const auto* raw = reinterpret_cast<const std::uint8_t*>(data.data());
  out.insert(out.end(), raw, raw + data.size_bytes());
  return out;
}

NpyArray read_npy(const fs::path& path) {
  try {
    return decode_npy(read_file_bytes(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMalformedFile) throw Malformed(path, e.what());
    throw;
  }
}

void write_npy(const fs::path& path, std::span<const Index> shape,
               std::span<const double> data) {
  write_file_atomic(path, encode_npy(shape, data));
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for reading");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const fs::path& path,
                       std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned long> counter{0};
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" +
         std::to_string(counter.fetch_add(1));
  std::FILE* file = std::fopen(tmp.c_str(), "wb");
  if (file == nullptr) {
    throw Error(ErrorCode::kIo, "cannot write " + path.string() + ": " +
                                    std::strerror(errno));
  }
  const bool wrote =
      std::fwrite(bytes.data(), 1, bytes.size(), file) == bytes.size();
  const bool closed = std::fclose(file) == 0;
  std::error_code ec;
  if (!wrote || !closed) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "short write to " + path.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot rename into " + path.string());
  }
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()),
                              text.size()));
}

ImageRaster load_image(const fs::path& path) {
  PngDecoded png = DecodePng(path, /*want_color=*/true);
  return ImageRaster(png.height, png.width, std::move(png.pixels));
}

ByteMatrix load_gray_png(const fs::path& path) {
  const PngDecoded png = DecodePng(path, /*want_color=*/false);
  ByteMatrix out(png.height, png.width);
  std::memcpy(out.data(), png.pixels.data(), png.pixels.size());
  return out;
}

TriLabelMask load_labels(const fs::path& path) {
  try {
    return TriLabelMask(load_gray_png(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnknownLabel) {
      throw Error(ErrorCode::kUnknownLabel, path.string() + ": " + e.what());
    }
    throw;
  }
}

LogitMap<double> load_logits(const fs::path& path) {
  NpyArray array = ReadNpyWithRank(path, 3);
  const Index classes = array.shape[0];
  const Index pixels = array.shape[1] * array.shape[2];
  PlaneMatrix<double> values =
      Eigen::Map<const PlaneMatrix<double>>(array.data.data(), classes, pixels);
  try {
    return LogitMap<double>(array.shape[1], array.shape[2], std::move(values));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

ScoreMap<double> load_scores(const fs::path& path) {
  NpyArray array = ReadNpyWithRank(path, 2);
  PlaneMatrix<double> values = Eigen::Map<const PlaneMatrix<double>>(
      array.data.data(), array.shape[0], array.shape[1]);
  try {
    return ScoreMap<double>(std::move(values));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_image(const ImageRaster& image, const fs::path& path) {
  write_file_atomic(path, EncodePng(image.data().data(), image.height(),
                                    image.width(), /*color=*/true));
}

void save_gray_png(const ByteMatrix& pixels, const fs::path& path) {
  write_file_atomic(path, EncodePng(pixels.data(), pixels.rows(), pixels.cols(),
                                    /*color=*/false));
}

void save_labels(const TriLabelMask& labels, const fs::path& path) {
  save_gray_png(labels.codes(), path);
}

void save_logits(const LogitMap<double>& logits, const fs::path& path) {
  const Index shape[] = {logits.classes(), logits.height(), logits.width()};
  write_npy(path, shape,
            std::span<const double>(logits.values().data(),
                                    static_cast<std::size_t>(logits.values().size())));
}

void save_scores(const ScoreMap<double>& scores, const fs::path& path) {
  const Index shape[] = {scores.height(), scores.width()};
  write_npy(path, shape,
            std::span<const double>(scores.values().data(),
                                    static_cast<std::size_t>(scores.values().size())));
}

AnyRaster load_raster(const fs::path& path, RasterKind kind) {
  switch (kind) {
    case RasterKind::kImage: return load_image(path);
    case RasterKind::kLogits: return load_logits(path);
    case RasterKind::kScores: return load_scores(path);
    case RasterKind::kLabels: return load_labels(path);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown raster kind");
}

void save_raster(const AnyRaster& raster, const fs::path& path) {
  std::visit(
      [&](const auto& value) {
        using T = std::decay_t<decltype(value)>;
        if constexpr (std::is_same_v<T, ImageRaster>) {
          save_image(value, path);
        } else if constexpr (std::is_same_v<T, LogitMap<double>>) {
          save_logits(value, path);
        } else if constexpr (std::is_same_v<T, ScoreMap<double>>) {
          save_scores(value, path);
        } else {
          save_labels(value, path);
        }
      },
      raster);
}

OutputSet::~OutputSet() {
  if (committed_) return;
  std::error_code ec;
  for (const fs::path& path : paths_) fs::remove(path, ec);
}

void OutputSet::Write(const fs::path& path,
                      std::span<const std::uint8_t> bytes) {
  Record(path);
  write_file_atomic(path, bytes);
}

void OutputSet::Write(const fs::path& path, std::string_view text) {
  Record(path);
  write_file_atomic(path, text);
}

void OutputSet::Record(const fs::path& path) {
  std::lock_guard<std::mutex> lock(mutex_);
  paths_.push_back(path);
}

void OutputSet::Commit() {
  std::lock_guard<std::mutex> lock(mutex_);
  committed_ = true;
}

std::vector<fs::path> OutputSet::paths() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return paths_;
}

}  // namespace oodseg
