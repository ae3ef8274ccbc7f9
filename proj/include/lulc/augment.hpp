#pragma once

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "lulc/labels.hpp"
#include "lulc/raster.hpp"

namespace lulc {

enum class AugmentKind {
  FlipH,
  FlipV,
  Rot90,
  Rot180,
  Rot270,
  Transpose,
  ContrastStretch,
  Gamma,
  HueShift,
};

inline constexpr std::array<AugmentKind, 9> kAllAugmentKinds = {
    AugmentKind::FlipH,     AugmentKind::FlipV,           AugmentKind::Rot90,
    AugmentKind::Rot180,    AugmentKind::Rot270,          AugmentKind::Transpose,
    AugmentKind::ContrastStretch, AugmentKind::Gamma,     AugmentKind::HueShift};

std::string_view to_string(AugmentKind kind);
std::optional<AugmentKind> parse_augment_kind(std::string_view name);

/// Geometric kinds permute pixels and apply to image and mask alike;
/// photometric kinds only touch the image.
constexpr bool is_geometric(AugmentKind kind) {
  return kind == AugmentKind::FlipH || kind == AugmentKind::FlipV || kind == AugmentKind::Rot90 ||
         kind == AugmentKind::Rot180 || kind == AugmentKind::Rot270 ||
         kind == AugmentKind::Transpose;
}

struct AugmentConfig {
  std::vector<AugmentKind> kinds{kAllAugmentKinds.begin(), kAllAugmentKinds.end()};
  double gamma = 1.5;
  double hue_degrees = 30.0;
  double stretch_low = 2.0;   // percentile
  double stretch_high = 98.0; // percentile

  void validate() const;
};

// Rotations are anti-clockwise; Rot90 and Rot270 swap width and height.
RgbRaster apply_geometric(AugmentKind kind, const RgbRaster& raster);
BinaryMask apply_geometric(AugmentKind kind, const BinaryMask& mask);
std::pair<RgbRaster, BinaryMask> apply_geometric(AugmentKind kind, const RgbRaster& raster,
                                                 const BinaryMask& mask);

RgbRaster apply_photometric(AugmentKind kind, const RgbRaster& raster, const AugmentConfig& cfg);

/// Original first, then one variant per enabled kind in config order.
std::vector<std::pair<RgbRaster, BinaryMask>> augment_set(const RgbRaster& raster,
                                                          const BinaryMask& mask,
                                                          const AugmentConfig& cfg);

}  // namespace lulc
