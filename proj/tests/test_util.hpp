#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "lulc/labels.hpp"
#include "lulc/raster.hpp"

namespace lulc::testing {

inline RgbRaster random_raster(int width, int height, std::mt19937_64& rng) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * 3);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng() & 0xff);
  return RgbRaster(width, height, std::move(bytes));
}

/// Mask with roughly `ignore_pct` percent Ignore pixels.
inline BinaryMask random_mask(int width, int height, std::mt19937_64& rng, int ignore_pct = 10) {
  BinaryMask m(width, height);
  for (auto& v : m.values()) {
    const auto r = static_cast<int>(rng() % 100);
    v = r < ignore_pct ? MaskValue::Ignore : ((rng() & 1) ? MaskValue::Target : MaskValue::Other);
  }
  return m;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lulc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lulc::testing
