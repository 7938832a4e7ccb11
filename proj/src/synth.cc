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

#include "oodseg/synth.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "oodseg/logging.h"
#include "oodseg/parallel.h"

namespace oodseg {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint8_t RoundToByte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

PlaneMatrix<double> ChannelPlane(const ImageRaster& image, Index channel) {
  PlaneMatrix<double> plane(image.height(), image.width());
  for (Index r = 0; r < image.height(); ++r) {
    for (Index c = 0; c < image.width(); ++c) {
      plane(r, c) = image(r, c, channel);
    }
  }
  return plane;
}

std::vector<json> ReadJsonLines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  std::vector<json> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedFile,
                  fmt::format("{}:{}: {}", path.string(), number, e.what()));
    }
  }
  return lines;
}

std::string RequireString(const json& record, const char* key,
                          const fs::path& source) {
  if (!record.contains(key) || !record[key].is_string()) {
    throw Error(ErrorCode::kMalformedFile,
                source.string() + ": record lacks string field '" + key + "'");
  }
  return record[key].get<std::string>();
}

fs::path Resolve(const fs::path& base_dir, const std::string& entry) {
  const fs::path p(entry);
  return p.is_absolute() ? p : (base_dir / p).lexically_normal();
}

// Loads the pair and checks that sizes agree.
std::pair<ImageRaster, SemanticLabelMap> LoadInlier(const fs::path& image_path,
                                                    const fs::path& label_path) {
  ImageRaster image = load_image(image_path);
  SemanticLabelMap labels(load_gray_png(label_path));
  if (labels.height() != image.height() || labels.width() != image.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "labels " + label_path.string() + " do not match image " +
                    image_path.string());
  }
  return {std::move(image), std::move(labels)};
}

struct RenderedItem {
  Composite composite;
  double gain;
};

std::optional<RenderedItem> Render(const ImageRaster& image,
                                   const SemanticLabelMap& labels,
                                   const ObjectCutout& cutout,
                                   const Placement& place,
                                   const SynthConfig& config,
                                   std::string* reason) {
  HarmonizedCutout harmonized = harmonize_cutout(cutout, image, place, config);
  if (harmonized.gain_defaulted) {
    logging::Warn("cutout '" + cutout.tag +
                  "' has zero luminance; gain forced to 1");
  }
  if (!(harmonized.cutout.alpha.array() > 0.5).any()) {
    *reason = "scaled cutout has no pixel with alpha > 0.5";
    return std::nullopt;
  }
  return RenderedItem{
      blend_composite(image, labels, harmonized.cutout, place, config),
      harmonized.gain};
}

void WriteComposite(const Composite& composite, const fs::path& out_dir,
                    const SynthRecord& record, OutputSet& outputs) {
  const fs::path image_path = out_dir / record.out_image;
  const fs::path labels_path = out_dir / record.out_labels;
  const fs::path mask_path = out_dir / record.out_mask;
  outputs.Record(image_path);
  save_image(composite.image, image_path);
  outputs.Record(labels_path);
  save_gray_png(composite.labels.ids(), labels_path);
  outputs.Record(mask_path);
  save_labels(composite.mask, mask_path);
}

void NameOutputs(SynthRecord& record) {
  const std::string stem =
      fmt::format("{:06d}_{}", record.index, fs::path(record.image).stem().string());
  record.out_image = stem + "_amy.png";
  record.out_labels = stem + "_labels.png";
  record.out_mask = stem + "_mask.png";
}

void WriteManifest(const SynthSummary& summary, const fs::path& out_dir,
                   OutputSet& outputs) {
  std::string text;
  for (const SynthRecord& record : summary.records) {
    text += record.ToJsonLine();
    text += '\n';
  }
  outputs.Write(out_dir / kSynthManifestName, text);
}

}  // namespace

void SynthConfig::Validate() const {
  if (num_classes < 1 || num_classes > 255) {
    throw Error(ErrorCode::kConfig, "num_classes must be in [1, 255]");
  }
  if (anomaly_id <= num_classes - 1 || anomaly_id >= kVoidCode) {
    throw Error(ErrorCode::kConfig,
                fmt::format("anomaly id {} must exceed the largest inlier id "
                            "{} and differ from the void code",
                            anomaly_id, num_classes - 1));
  }
  if (!(scale_min > 0.0) || !std::isfinite(scale_max) ||
      scale_min > scale_max) {
    throw Error(ErrorCode::kConfig, "scale model needs 0 < s_min <= s_max");
  }
  if (feather_radius < 0) {
    throw Error(ErrorCode::kConfig, "feather radius must be >= 0");
  }
  if (max_placement_draws < 1) {
    throw Error(ErrorCode::kConfig, "max placement draws must be >= 1");
  }
  for (std::uint8_t id : ground_classes) {
    if (id >= num_classes) {
      throw Error(ErrorCode::kConfig,
                  fmt::format("ground class {} is not an inlier class", id));
    }
  }
}

double SynthConfig::ScaleAtRow(Index row, Index height) const {
  if (scale_min == scale_max) return scale_min;
  return scale_min + (scale_max - scale_min) * (static_cast<double>(row) /
                                                static_cast<double>(height));
}

Composite blend_composite(const ImageRaster& image,
                          const SemanticLabelMap& labels,
                          const ObjectCutout& cutout, const Placement& place,
                          const SynthConfig& config) {
  config.Validate();
  cutout.Validate(/*require_support=*/false);
  const Index height = image.height();
  const Index width = image.width();
  if (labels.height() != height || labels.width() != width) {
    throw Error(ErrorCode::kShapeMismatch,
                "semantic labels " + ShapeString(labels.height(), labels.width()) +
                    " do not match image " + ShapeString(height, width));
  }

  const PlaneMatrix<double> hard =
      (cutout.alpha.array() > 0.5).cast<double>().matrix();
  const PlaneMatrix<double>& color_alpha =
      config.feather_radius > 0 ? cutout.alpha : hard;

  // Throws kOutOfBounds when the window leaves the canvas.
  const PlaneMatrix<double> label_window =
      pad_embed(hard, height, width, place.row, place.col);
  const PlaneMatrix<double> color_window =
      pad_embed(color_alpha, height, width, place.row, place.col);

  ImageRaster out_image(height, width);
  for (Index ch = 0; ch < ImageRaster::kChannels; ++ch) {
    const PlaneMatrix<double> inlier = ChannelPlane(image, ch);
    const PlaneMatrix<double> object =
        pad_embed(color_alpha.cwiseProduct(ChannelPlane(cutout.image, ch)),
                  height, width, place.row, place.col);
    const PlaneMatrix<double> blended =
        (PlaneMatrix<double>::Ones(height, width) - color_window)
            .cwiseProduct(inlier) +
        object;
    for (Index r = 0; r < height; ++r) {
      for (Index c = 0; c < width; ++c) {
        out_image(r, c, ch) = RoundToByte(blended(r, c));
      }
    }
  }

  const PlaneMatrix<double> new_ids =
      (PlaneMatrix<double>::Ones(height, width) - label_window)
          .cwiseProduct(labels.ids().cast<double>()) +
      label_window * static_cast<double>(config.anomaly_id);
  SemanticLabelMap out_labels(new_ids.cast<std::uint8_t>());

  ByteMatrix codes(height, width);
  for (Index i = 0; i < codes.size(); ++i) {
    const std::uint8_t id = out_labels.ids().data()[i];
    codes.data()[i] = id == config.anomaly_id
                          ? static_cast<std::uint8_t>(PixelLabel::kAnomaly)
                      : id == kVoidCode
                          ? kVoidCode
                          : static_cast<std::uint8_t>(PixelLabel::kInlier);
  }
  return Composite{std::move(out_image), std::move(out_labels),
                   TriLabelMask(std::move(codes))};
}

std::pair<Index, Index> ScaledSize(const ObjectCutout& cutout, double scale) {
  const auto scaled = [scale](Index n) {
    return std::max<Index>(1, std::lround(static_cast<double>(n) * scale));
  };
  return {scaled(cutout.height()), scaled(cutout.width())};
}

Placement propose_placement(const SemanticLabelMap& labels,
                            const ObjectCutout& cutout,
                            const SynthConfig& config, RandomStream& rng) {
  config.Validate();
  const Index height = labels.height();
  const Index width = labels.width();
  std::vector<Index> anchors;
  for (Index i = 0; i < labels.ids().size(); ++i) {
    const std::uint8_t id = labels.ids().data()[i];
    if (std::find(config.ground_classes.begin(), config.ground_classes.end(),
                  id) != config.ground_classes.end()) {
      anchors.push_back(i);
    }
  }
  if (anchors.empty()) {
    for (Index i = (height / 2) * width; i < labels.ids().size(); ++i) {
      const std::uint8_t id = labels.ids().data()[i];
      if (id != kVoidCode && id != config.anomaly_id) anchors.push_back(i);
    }
    logging::Debug("no ground-class pixels; anchoring in the lower half");
  }
  if (anchors.empty()) {
    throw Error(ErrorCode::kInfeasible, "no pixel can anchor a placement");
  }

  for (int draw = 0; draw < config.max_placement_draws; ++draw) {
    const Index anchor = anchors[rng.UniformIndex(anchors.size())];
    const Index base_row = anchor / width;
    const Index base_col = anchor % width;
    const double scale = config.ScaleAtRow(base_row, height);
    const auto [h, w] = ScaledSize(cutout, scale);
    const Index row = base_row - h + 1;
    const Index col = base_col - w / 2;
    if (row < 0 || col < 0 || row + h > height || col + w > width) continue;
    const bool overlaps_anomaly =
        (labels.ids().block(row, col, h, w).array() ==
         static_cast<std::uint8_t>(config.anomaly_id))
            .any();
    if (overlaps_anomaly) continue;
    return Placement{row, col, scale};
  }
  throw Error(ErrorCode::kInfeasible,
              fmt::format("no feasible placement after {} draws",
                          config.max_placement_draws));
}

ObjectCutout resample_cutout(const ObjectCutout& cutout, Index height,
                             Index width) {
  if (height == cutout.height() && width == cutout.width()) return cutout;
  const double sy = static_cast<double>(cutout.height()) / height;
  const double sx = static_cast<double>(cutout.width()) / width;
  ImageRaster image(height, width);
  PlaneMatrix<double> alpha(height, width);
  const Index last_row = cutout.height() - 1;
  const Index last_col = cutout.width() - 1;
  for (Index r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, double(last_row));
    const Index y0 = static_cast<Index>(y);
    const Index y1 = std::min(y0 + 1, last_row);
    const double fy = y - y0;
    for (Index c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, double(last_col));
      const Index x0 = static_cast<Index>(x);
      const Index x1 = std::min(x0 + 1, last_col);
      const double fx = x - x0;
      auto lerp = [&](auto&& at) {
        return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
               fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
      };
      for (Index ch = 0; ch < ImageRaster::kChannels; ++ch) {
        image(r, c, ch) = RoundToByte(lerp([&](Index i, Index j) {
          return static_cast<double>(cutout.image(i, j, ch));
        }));
      }
      alpha(r, c) = std::clamp(
          lerp([&](Index i, Index j) { return cutout.alpha(i, j); }), 0.0, 1.0);
    }
  }
  return ObjectCutout{std::move(image), std::move(alpha), cutout.tag};
}

PlaneMatrix<double> feather_alpha(const PlaneMatrix<double>& alpha,
                                  int radius) {
  if (radius <= 0) return alpha;
  const double norm = 1.0 / (2 * radius + 1);
  // Separable box filter, zero outside the cutout frame.
  PlaneMatrix<double> horizontal = PlaneMatrix<double>::Zero(alpha.rows(), alpha.cols());
  for (Index r = 0; r < alpha.rows(); ++r) {
    for (Index c = 0; c < alpha.cols(); ++c) {
      double sum = 0.0;
      for (Index k = std::max<Index>(0, c - radius);
           k <= std::min<Index>(alpha.cols() - 1, c + radius); ++k) {
        sum += alpha(r, k);
      }
      horizontal(r, c) = sum * norm;
    }
  }
  PlaneMatrix<double> out = PlaneMatrix<double>::Zero(alpha.rows(), alpha.cols());
  for (Index r = 0; r < alpha.rows(); ++r) {
    for (Index c = 0; c < alpha.cols(); ++c) {
      double sum = 0.0;
      for (Index k = std::max<Index>(0, r - radius);
           k <= std::min<Index>(alpha.rows() - 1, r + radius); ++k) {
        sum += horizontal(k, c);
      }
      out(r, c) = std::clamp(sum * norm, 0.0, 1.0);
    }
  }
  return out;
}

double luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

HarmonizedCutout harmonize_cutout(const ObjectCutout& cutout,
                                  const ImageRaster& background,
                                  const Placement& place,
                                  const SynthConfig& config) {
  cutout.Validate(/*require_support=*/false);
  if (!(place.scale > 0.0) || !std::isfinite(place.scale)) {
    throw Error(ErrorCode::kInvalidArgument, "placement scale must be positive");
  }
  const auto [h, w] = ScaledSize(cutout, place.scale);
  if (place.row < 0 || place.col < 0 || place.row + h > background.height() ||
      place.col + w > background.width()) {
    throw Error(ErrorCode::kOutOfBounds,
                "scaled cutout " + ShapeString(h, w) + " at " +
                    ShapeString(place.row, place.col) + " exceeds canvas " +
                    ShapeString(background.height(), background.width()));
  }
  HarmonizedCutout result{resample_cutout(cutout, h, w), 1.0, false};
  ObjectCutout& out = result.cutout;

  if (config.match_luminance) {
    double background_sum = 0.0;
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        background_sum +=
            luminance(background(place.row + r, place.col + c, 0),
                      background(place.row + r, place.col + c, 1),
                      background(place.row + r, place.col + c, 2));
      }
    }
    const double background_mean = background_sum / static_cast<double>(h * w);
    double object_sum = 0.0;
    double weight = 0.0;
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        const double a = out.alpha(r, c);
        object_sum += a * luminance(out.image(r, c, 0), out.image(r, c, 1),
                                    out.image(r, c, 2));
        weight += a;
      }
    }
    if (weight <= 0.0 || object_sum <= 0.0) {
      result.gain_defaulted = true;
    } else {
      const double gain =
          std::clamp(background_mean / (object_sum / weight), kMinGain, kMaxGain);
      result.gain = gain;
      if (gain != 1.0) {
        for (Index r = 0; r < h; ++r) {
          for (Index c = 0; c < w; ++c) {
            for (Index ch = 0; ch < ImageRaster::kChannels; ++ch) {
              out.image(r, c, ch) = RoundToByte(out.image(r, c, ch) * gain);
            }
          }
        }
      }
    }
  }
  out.alpha = feather_alpha(out.alpha, config.feather_radius);
  return result;
}

std::vector<InlierItem> read_inlier_manifest(const fs::path& path) {
  const fs::path base = path.parent_path();
  std::vector<InlierItem> items;
  for (const json& record : ReadJsonLines(path)) {
    items.push_back({Resolve(base, RequireString(record, "image", path)),
                     Resolve(base, RequireString(record, "labels", path))});
  }
  return items;
}

std::vector<CutoutAsset> read_cutout_library(const fs::path& path) {
  const fs::path base = path.parent_path();
  std::vector<CutoutAsset> assets;
  for (const json& record : ReadJsonLines(path)) {
    CutoutAsset asset;
    asset.id = RequireString(record, "id", path);
    asset.image = Resolve(base, RequireString(record, "image", path));
    asset.alpha = Resolve(base, RequireString(record, "alpha", path));
    asset.tag = record.value("tag", std::string());
    assets.push_back(std::move(asset));
  }
  return assets;
}

ObjectCutout load_cutout(const CutoutAsset& asset) {
  ObjectCutout cutout{load_image(asset.image),
                      load_gray_png(asset.alpha).cast<double>() / 255.0,
                      asset.tag};
  cutout.Validate();
  return cutout;
}

std::string SynthRecord::ToJsonLine() const {
  json record;
  record["index"] = index;
  record["image"] = image;
  record["labels"] = labels;
  record["cutout"] = cutout;
  record["seed"] = seed;
  record["placement"] = {{"row", placement.row},
                         {"col", placement.col},
                         {"scale", placement.scale}};
  record["gain"] = gain;
  record["outputs"] = {
      {"image", out_image}, {"labels", out_labels}, {"mask", out_mask}};
  return record.dump();
}

SynthRecord SynthRecord::FromJsonLine(const std::string& line) {
  try {
    const json record = json::parse(line);
    SynthRecord out;
    out.index = record.at("index").get<std::uint64_t>();
    out.image = record.at("image").get<std::string>();
    out.labels = record.at("labels").get<std::string>();
    out.cutout = record.at("cutout").get<std::string>();
    out.seed = record.at("seed").get<std::uint64_t>();
    const json& place = record.at("placement");
    out.placement = {place.at("row").get<Index>(), place.at("col").get<Index>(),
                     place.at("scale").get<double>()};
    out.gain = record.at("gain").get<double>();
    const json& outputs = record.at("outputs");
    out.out_image = outputs.at("image").get<std::string>();
    out.out_labels = outputs.at("labels").get<std::string>();
    out.out_mask = outputs.at("mask").get<std::string>();
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedFile,
                std::string("synth manifest record: ") + e.what());
  }
}

SynthSummary synthesize_dataset(const fs::path& inlier_manifest,
                                const fs::path& cutout_library,
                                const SynthConfig& config,
                                const fs::path& out_dir, OutputSet& outputs,
                                int jobs) {
  config.Validate();
  const std::vector<InlierItem> items = read_inlier_manifest(inlier_manifest);
  const std::vector<CutoutAsset> library = read_cutout_library(cutout_library);
  if (library.empty()) {
    throw Error(ErrorCode::kConfig, "cutout library is empty");
  }
  std::vector<ObjectCutout> cutouts;
  cutouts.reserve(library.size());
  for (const CutoutAsset& asset : library) cutouts.push_back(load_cutout(asset));
  fs::create_directories(out_dir);

  std::vector<std::optional<SynthRecord>> records(items.size());
  std::vector<std::string> reasons(items.size());
  ParallelFor(items.size(), jobs, [&](std::size_t i) {
    RandomStream rng(config.seed, i);
    auto [image, labels] = LoadInlier(items[i].image, items[i].labels);
    const std::size_t pick = rng.UniformIndex(cutouts.size());
    SynthRecord record;
    record.index = i;
    record.image = items[i].image.string();
    record.labels = items[i].labels.string();
    record.cutout = library[pick].id;
    record.seed = rng.key();
    try {
      record.placement = propose_placement(labels, cutouts[pick], config, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasible) throw;
      reasons[i] = record.image + ": " + e.what();
      return;
    }
    std::string reason;
    auto rendered = Render(image, labels, cutouts[pick], record.placement,
                           config, &reason);
    if (!rendered) {
      reasons[i] = record.image + ": " + reason;
      return;
    }
    record.gain = rendered->gain;
    NameOutputs(record);
    WriteComposite(rendered->composite, out_dir, record, outputs);
    records[i] = std::move(record);
  });

  SynthSummary summary;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (records[i]) {
      summary.records.push_back(std::move(*records[i]));
    } else {
      logging::Warn("skipped " + reasons[i]);
      summary.skipped.push_back(reasons[i]);
    }
  }
  WriteManifest(summary, out_dir, outputs);
  return summary;
}

SynthSummary replay_dataset(const fs::path& manifest,
                            const fs::path& cutout_library,
                            const SynthConfig& config,
                            const fs::path& out_dir, OutputSet& outputs,
                            int jobs) {
  config.Validate();
  std::vector<SynthRecord> records;
  {
    std::ifstream in(manifest);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + manifest.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      records.push_back(SynthRecord::FromJsonLine(line));
    }
  }
  const std::vector<CutoutAsset> library = read_cutout_library(cutout_library);
  fs::create_directories(out_dir);

  std::vector<std::string> reasons(records.size());
  std::vector<bool> rendered_ok(records.size(), false);
  ParallelFor(records.size(), jobs, [&](std::size_t i) {
    SynthRecord& record = records[i];
    const auto asset = std::find_if(
        library.begin(), library.end(),
        [&](const CutoutAsset& a) { return a.id == record.cutout; });
    if (asset == library.end()) {
      throw Error(ErrorCode::kConfig,
                  "cutout '" + record.cutout + "' not in library");
    }
    auto [image, labels] = LoadInlier(record.image, record.labels);
    std::string reason;
    auto rendered = Render(image, labels, load_cutout(*asset), record.placement,
                           config, &reason);
    if (!rendered) {
      reasons[i] = record.image + ": " + reason;
      return;
    }
    record.gain = rendered->gain;
    WriteComposite(rendered->composite, out_dir, record, outputs);
    rendered_ok[i] = true;
  });

  SynthSummary summary;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (rendered_ok[i]) {
      summary.records.push_back(records[i]);
    } else {
      summary.skipped.push_back(reasons[i]);
    }
  }
  WriteManifest(summary, out_dir, outputs);
  return summary;
}

}  // namespace oodseg
