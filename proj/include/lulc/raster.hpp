#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace lulc {

struct Dims {
  int width = 0;
  int height = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

/// H x W x 3 8-bit image stored row-major as interleaved RGB.
class RgbRaster {
 public:
  RgbRaster() = default;
  /// Throws DimMismatch unless both dims are >= 1.
  RgbRaster(int width, int height, Rgb fill = {0, 0, 0});
  /// Takes ownership of interleaved pixel bytes (size must be width*height*3).
  RgbRaster(int width, int height, std::vector<std::uint8_t> interleaved);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Dims dims() const noexcept { return {width_, height_}; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  Rgb at(int x, int y) const noexcept {
    const std::size_t i = index(x, y) * 3;
    return {bytes_[i], bytes_[i + 1], bytes_[i + 2]};
  }
  void set(int x, int y, Rgb value) noexcept {
    const std::size_t i = index(x, y) * 3;
    bytes_[i] = value[0];
    bytes_[i + 1] = value[1];
    bytes_[i + 2] = value[2];
  }
  std::uint8_t channel(int x, int y, int c) const noexcept {
    return bytes_[index(x, y) * 3 + static_cast<std::size_t>(c)];
  }

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

  friend bool operator==(const RgbRaster&, const RgbRaster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bytes_;
};

/// Loads an 8-bit RGB(A) PNG or an 8-bit 3/4-band TIFF. Alpha and extra
/// bands are dropped; pixel values are returned untouched.
RgbRaster load_rgb(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG.
void save_rgb(const RgbRaster& raster, const std::filesystem::path& path);

/// Bilinear resampling with half-pixel-centre alignment. Each target pixel t
/// samples the source at (t + 0.5) * scale - 0.5, clamped to the edge, and the
/// result is rounded half-up.
RgbRaster resize_bilinear(const RgbRaster& raster, Dims target);

}  // namespace lulc
