#include "lulc/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace lulc {

std::string_view to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::FlipH: return "flip_h";
    case AugmentKind::FlipV: return "flip_v";
    case AugmentKind::Rot90: return "rot90";
    case AugmentKind::Rot180: return "rot180";
    case AugmentKind::Rot270: return "rot270";
    case AugmentKind::Transpose: return "transpose";
    case AugmentKind::ContrastStretch: return "contrast_stretch";
    case AugmentKind::Gamma: return "gamma";
    case AugmentKind::HueShift: return "hue_shift";
  }
  return "unknown";
}

std::optional<AugmentKind> parse_augment_kind(std::string_view name) {
  for (AugmentKind k : kAllAugmentKinds) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

void AugmentConfig::validate() const {
  if (!(gamma > 0.0)) throw Error(ErrorKind::ConfigError, "augment gamma must be > 0");
  if (!(stretch_low >= 0.0 && stretch_low < stretch_high && stretch_high <= 100.0)) {
    throw Error(ErrorKind::ConfigError, "augment stretch percentiles need 0 <= low < high <= 100");
  }
}

namespace {

template <typename Payload>
Payload remap(AugmentKind kind, const Payload& in) {
  const int w = in.width();
  const int h = in.height();
  const bool swap = kind == AugmentKind::Rot90 || kind == AugmentKind::Rot270 ||
                    kind == AugmentKind::Transpose;
  Payload out(swap ? h : w, swap ? w : h);
  for (int oy = 0; oy < out.height(); ++oy) {
    for (int ox = 0; ox < out.width(); ++ox) {
      int sx = ox, sy = oy;
      switch (kind) {
        case AugmentKind::FlipH: sx = w - 1 - ox; break;
        case AugmentKind::FlipV: sy = h - 1 - oy; break;
        case AugmentKind::Rot90: sx = w - 1 - oy; sy = ox; break;
        case AugmentKind::Rot180: sx = w - 1 - ox; sy = h - 1 - oy; break;
        case AugmentKind::Rot270: sx = oy; sy = h - 1 - ox; break;
        case AugmentKind::Transpose: sx = oy; sy = ox; break;
        default: break;
      }
      out.set(ox, oy, in.at(sx, sy));
    }
  }
  return out;
}

void require_geometric(AugmentKind kind) {
  if (!is_geometric(kind)) {
    throw Error(ErrorKind::WrongKind, std::string(to_string(kind)) + " is not geometric");
  }
}

std::uint8_t round_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

// Nearest-rank percentile over a 256-bin histogram.
int percentile(const std::array<std::uint64_t, 256>& hist, std::uint64_t n, double p) {
  const auto rank = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::ceil(p / 100.0 * static_cast<double>(n))));
  std::uint64_t cum = 0;
  for (int v = 0; v < 256; ++v) {
    cum += hist[static_cast<std::size_t>(v)];
    if (cum >= rank) return v;
  }
  return 255;
}

RgbRaster contrast_stretch(const RgbRaster& in, double low, double high) {
  RgbRaster out = in;
  auto& bytes = out.bytes();
  const std::uint64_t n = in.pixel_count();
  for (std::size_t c = 0; c < 3; ++c) {
    std::array<std::uint64_t, 256> hist{};
    for (std::size_t i = c; i < bytes.size(); i += 3) ++hist[bytes[i]];
    const int lo = percentile(hist, n, low);
    const int hi = percentile(hist, n, high);
    if (hi <= lo) continue;
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = c; i < bytes.size(); i += 3) {
      bytes[i] = round_byte((bytes[i] - lo) * scale);
    }
  }
  return out;
}

RgbRaster gamma_correct(const RgbRaster& in, double gamma) {
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) {
    lut[static_cast<std::size_t>(v)] = round_byte(255.0 * std::pow(v / 255.0, gamma));
  }
  RgbRaster out = in;
  for (auto& b : out.bytes()) b = lut[b];
  return out;
}

Rgb shift_hue(Rgb px, double degrees) {
  const double r = px[0] / 255.0, g = px[1] / 255.0, b = px[2] / 255.0;
  const double max = std::max({r, g, b});
  const double min = std::min({r, g, b});
  const double delta = max - min;
  if (delta <= 0.0) return px;  // achromatic: hue undefined

  double h;
  if (max == r) {
    h = 60.0 * std::fmod((g - b) / delta, 6.0);
  } else if (max == g) {
    h = 60.0 * ((b - r) / delta + 2.0);
  } else {
    h = 60.0 * ((r - g) / delta + 4.0);
  }
  h = std::fmod(h + degrees, 360.0);
  if (h < 0.0) h += 360.0;
  const double s = delta / max;
  const double v = max;

  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp)) {
    case 0: r1 = c; g1 = x; break;
    case 1: r1 = x; g1 = c; break;
    case 2: g1 = c; b1 = x; break;
    case 3: g1 = x; b1 = c; break;
    case 4: r1 = x; b1 = c; break;
    default: r1 = c; b1 = x; break;
  }
  const double m = v - c;
  return {round_byte((r1 + m) * 255.0), round_byte((g1 + m) * 255.0), round_byte((b1 + m) * 255.0)};
}

}  // namespace

RgbRaster apply_geometric(AugmentKind kind, const RgbRaster& raster) {
  require_geometric(kind);
  return remap(kind, raster);
}

BinaryMask apply_geometric(AugmentKind kind, const BinaryMask& mask) {
  require_geometric(kind);
  return remap(kind, mask);
}

std::pair<RgbRaster, BinaryMask> apply_geometric(AugmentKind kind, const RgbRaster& raster,
                                                 const BinaryMask& mask) {
  require_geometric(kind);
  if (raster.dims() != mask.dims()) {
    throw Error(ErrorKind::DimMismatch, "raster and mask dims differ");
  }
  return {remap(kind, raster), remap(kind, mask)};
}

RgbRaster apply_photometric(AugmentKind kind, const RgbRaster& raster, const AugmentConfig& cfg) {
  switch (kind) {
    case AugmentKind::ContrastStretch:
      return contrast_stretch(raster, cfg.stretch_low, cfg.stretch_high);
    case AugmentKind::Gamma:
      return gamma_correct(raster, cfg.gamma);
    case AugmentKind::HueShift: {
      RgbRaster out = raster;
      for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) out.set(x, y, shift_hue(raster.at(x, y), cfg.hue_degrees));
      }
      return out;
    }
    default:
      throw Error(ErrorKind::WrongKind, std::string(to_string(kind)) + " is not photometric");
  }
}

std::vector<std::pair<RgbRaster, BinaryMask>> augment_set(const RgbRaster& raster,
                                                          const BinaryMask& mask,
                                                          const AugmentConfig& cfg) {
  cfg.validate();
  if (raster.dims() != mask.dims()) {
    throw Error(ErrorKind::DimMismatch, "raster and mask dims differ");
  }
  std::vector<std::pair<RgbRaster, BinaryMask>> out;
  out.reserve(cfg.kinds.size() + 1);
  out.emplace_back(raster, mask);
  for (AugmentKind kind : cfg.kinds) {
    if (is_geometric(kind)) {
      out.push_back(apply_geometric(kind, raster, mask));
    } else {
      out.emplace_back(apply_photometric(kind, raster, cfg), mask);
    }
  }
  return out;
}

}  // namespace lulc
