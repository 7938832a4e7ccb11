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

#ifndef OODSEG_SYNTH_H_
#define OODSEG_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oodseg/io.h"
#include "oodseg/random.h"
#include "oodseg/raster.h"

namespace oodseg {

/// Where and how large a cutout goes: top-left offset of the scaled cutout in
/// the canvas, and the resampling factor applied before embedding.
struct Placement {
  Index row = 0;
  Index col = 0;
  double scale = 1.0;

  friend bool operator==(const Placement&, const Placement&) = default;
};

struct SynthConfig {
  int num_classes = 19;  // inlier ids are 0..num_classes-1
  int anomaly_id = 20;   // P; must exceed every inlier id and differ from void
  std::vector<std::uint8_t> ground_classes = {0};
  double scale_min = 0.5;
  double scale_max = 1.0;
  bool match_luminance = true;
  int feather_radius = 0;
  std::uint64_t seed = 0;
  int max_placement_draws = 1000;

  void Validate() const;
  /// Linear perspective model s(row) = s_min + (s_max - s_min) * row / H.
  double ScaleAtRow(Index row, Index height) const;
};

struct Composite {
  ImageRaster image;
  SemanticLabelMap labels;
  TriLabelMask mask;
};

/// Pastes `cutout` (already at its final size) at `place.offset`:
///   x = Pad(1 - a) * x_in + Pad(a * x_out),  y = Pad(1 - b) * y_in + Pad(b) * P
/// with b = [alpha > 0.5]. Colors use a = b unless feathering is enabled, in
/// which case the soft alpha is used for colors only. The mask is anomaly
/// wherever the new label equals P and void where it is void.
Composite blend_composite(const ImageRaster& image,
                          const SemanticLabelMap& labels,
                          const ObjectCutout& cutout, const Placement& place,
                          const SynthConfig& config);

/// Size of `cutout` after resampling by `scale` (at least 1x1).
std::pair<Index, Index> ScaledSize(const ObjectCutout& cutout, double scale);

/// Rejection-samples a ground pixel as the bottom-center anchor of the scaled
/// cutout. Rejects windows leaving the canvas or covering existing anomaly
/// labels. Without any ground-class pixel, non-void pixels of the lower half
/// of the image are used instead.
Placement propose_placement(const SemanticLabelMap& labels,
                            const ObjectCutout& cutout,
                            const SynthConfig& config, RandomStream& rng);

/// Bilinear resampling of image and alpha to the given size.
ObjectCutout resample_cutout(const ObjectCutout& cutout, Index height,
                             Index width);

/// Box-filter feathering of alpha with the given radius (0 = unchanged).
PlaneMatrix<double> feather_alpha(const PlaneMatrix<double>& alpha, int radius);

double luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);

struct HarmonizedCutout {
  ObjectCutout cutout;
  double gain = 1.0;
  bool gain_defaulted = false;  // cutout had zero luminance, gain forced to 1
};

/// Resamples the cutout to `place.scale`, then (optionally) multiplies colors
/// by g = mean luminance of the background window / alpha-weighted mean
/// luminance of the cutout, with g clamped to [0.25, 4].
HarmonizedCutout harmonize_cutout(const ObjectCutout& cutout,
                                  const ImageRaster& background,
                                  const Placement& place,
                                  const SynthConfig& config);

inline constexpr double kMinGain = 0.25;
inline constexpr double kMaxGain = 4.0;

// ---------------------------------------------------------------------------
// Dataset pipeline.
//
// Inlier manifest (JSON lines):  {"image": "a.png", "labels": "a_labels.png"}
// Cutout library  (JSON lines):  {"id": "dog1", "image": "dog1.png",
//                                 "alpha": "dog1_alpha.png", "tag": "dog"}
// Relative paths resolve against the manifest's directory. Alpha PNGs are
// 8-bit grayscale scaled by 1/255.
// ---------------------------------------------------------------------------

struct InlierItem {
  std::filesystem::path image;
  std::filesystem::path labels;
};

struct CutoutAsset {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path alpha;
  std::string tag;
};

std::vector<InlierItem> read_inlier_manifest(const std::filesystem::path& path);
std::vector<CutoutAsset> read_cutout_library(const std::filesystem::path& path);
ObjectCutout load_cutout(const CutoutAsset& asset);

/// One line of the output manifest.
struct SynthRecord {
  std::uint64_t index = 0;
  std::string image;
  std::string labels;
  std::string cutout;
  std::uint64_t seed = 0;  // key of the item's random stream
  Placement placement;
  double gain = 1.0;
  std::string out_image;
  std::string out_labels;
  std::string out_mask;

  std::string ToJsonLine() const;
  static SynthRecord FromJsonLine(const std::string& line);
};

struct SynthSummary {
  std::vector<SynthRecord> records;
  std::vector<std::string> skipped;  // one reason per infeasible item
};

inline constexpr char kSynthManifestName[] = "manifest.jsonl";

/// Builds one composite per inlier image with a cutout drawn from the
/// library. Item i uses the stream (config.seed, i), so output does not depend
/// on `jobs`. Writes composites plus manifest.jsonl into `out_dir`.
SynthSummary synthesize_dataset(const std::filesystem::path& inlier_manifest,
                                const std::filesystem::path& cutout_library,
                                const SynthConfig& config,
                                const std::filesystem::path& out_dir,
                                OutputSet& outputs, int jobs = 1);

/// Re-renders every record of a previous run's manifest from its recorded
/// placement, without sampling.
SynthSummary replay_dataset(const std::filesystem::path& manifest,
                            const std::filesystem::path& cutout_library,
                            const SynthConfig& config,
                            const std::filesystem::path& out_dir,
                            OutputSet& outputs, int jobs = 1);

}  // namespace oodseg

#endif  // OODSEG_SYNTH_H_
