#include "lulc/raster.hpp"

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "lulc/error.hpp"

namespace lulc {

namespace fs = std::filesystem;

RgbRaster::RgbRaster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::DimMismatch, "raster dims must be >= 1, got " +
                                            std::to_string(width) + "x" + std::to_string(height));
  }
  bytes_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    std::memcpy(&bytes_[i * 3], fill.data(), 3);
  }
}

RgbRaster::RgbRaster(int width, int height, std::vector<std::uint8_t> interleaved)
    : width_(width), height_(height), bytes_(std::move(interleaved)) {
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::DimMismatch, "raster dims must be >= 1");
  }
  if (bytes_.size() != pixel_count() * 3) {
    throw Error(ErrorKind::DimMismatch, "pixel buffer size does not match raster dims");
  }
}

namespace {

bool has_signature(const fs::path& path, const unsigned char* sig, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  std::vector<char> head(n);
  if (!in.read(head.data(), static_cast<std::streamsize>(n))) return false;
  return std::memcmp(head.data(), sig, n) == 0;
}

bool is_png(const fs::path& path) {
  static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return has_signature(path, kSig, 8);
}

bool is_tiff(const fs::path& path) {
  static constexpr unsigned char kLe[4] = {'I', 'I', 42, 0};
  static constexpr unsigned char kBe[4] = {'M', 'M', 0, 42};
  return has_signature(path, kLe, 4) || has_signature(path, kBe, 4);
}

RgbRaster load_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::CorruptImage, path.string() + ": " + msg);
  }
  // Reject 16-bit and grayscale sources; palette images expand losslessly.
  const bool linear = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  if (linear || !color) {
    png_image_free(&image);
    throw Error(ErrorKind::UnsupportedFormat,
                path.string() + ": only 8-bit RGB/RGBA PNG is supported");
  }
  const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  image.format = alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::CorruptImage, path.string() + ": " + msg);
  }
  if (!alpha) return RgbRaster(width, height, std::move(buffer));

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0, n = rgb.size() / 3; i < n; ++i) {
    std::memcpy(&rgb[i * 3], &buffer[i * 4], 3);
  }
  return RgbRaster(width, height, std::move(rgb));
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};

RgbRaster load_tiff(const fs::path& path) {
  TIFFSetWarningHandler(nullptr);
  TIFFSetErrorHandler(nullptr);
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) throw Error(ErrorKind::CorruptImage, path.string() + ": cannot open TIFF");

  std::uint32_t width = 0, height = 0;
  std::uint16_t bits = 0, samples = 0, planar = PLANARCONFIG_CONTIG, format = SAMPLEFORMAT_UINT;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &samples);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
  if (bits != 8 || format != SAMPLEFORMAT_UINT || (samples != 3 && samples != 4)) {
    throw Error(ErrorKind::UnsupportedFormat,
                path.string() + ": only 8-bit unsigned 3- or 4-band TIFF is supported (got " +
                    std::to_string(bits) + "-bit, " + std::to_string(samples) + " bands)");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::CorruptImage, path.string() + ": empty TIFF");
  }
  if (samples > 3) {
    std::cerr << "warning: " << path.string() << ": ignoring " << (samples - 3)
              << " band(s) beyond RGB\n";
  }

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
  auto put = [&](std::uint32_t x, std::uint32_t y, int band, std::uint8_t v) {
    rgb[(static_cast<std::size_t>(y) * width + x) * 3 + static_cast<std::size_t>(band)] = v;
  };

  if (TIFFIsTiled(tif.get())) {
    std::uint32_t tw = 0, th = 0;
    TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tw);
    TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &th);
    std::vector<std::uint8_t> tile(static_cast<std::size_t>(TIFFTileSize(tif.get())));
    const int planes = planar == PLANARCONFIG_CONTIG ? 1 : samples;
    for (int plane = 0; plane < std::min(planes, 3); ++plane) {
      for (std::uint32_t ty = 0; ty < height; ty += th) {
        for (std::uint32_t tx = 0; tx < width; tx += tw) {
          if (TIFFReadTile(tif.get(), tile.data(), tx, ty, 0,
                           static_cast<std::uint16_t>(plane)) < 0) {
            throw Error(ErrorKind::CorruptImage, path.string() + ": tile read failed");
          }
          for (std::uint32_t y = ty; y < std::min(ty + th, height); ++y) {
            for (std::uint32_t x = tx; x < std::min(tx + tw, width); ++x) {
              const std::size_t base = static_cast<std::size_t>(y - ty) * tw + (x - tx);
              if (planes == 1) {
                for (int b = 0; b < 3; ++b) put(x, y, b, tile[base * samples + b]);
              } else {
                put(x, y, plane, tile[base]);
              }
            }
          }
        }
      }
    }
  } else {
    std::vector<std::uint8_t> line(static_cast<std::size_t>(TIFFScanlineSize(tif.get())));
    const int planes = planar == PLANARCONFIG_CONTIG ? 1 : samples;
    for (int plane = 0; plane < std::min(planes, 3); ++plane) {
      for (std::uint32_t y = 0; y < height; ++y) {
        if (TIFFReadScanline(tif.get(), line.data(), y, static_cast<std::uint16_t>(plane)) < 0) {
          throw Error(ErrorKind::CorruptImage, path.string() + ": scanline read failed");
        }
        for (std::uint32_t x = 0; x < width; ++x) {
          if (planes == 1) {
            for (int b = 0; b < 3; ++b) put(x, y, b, line[static_cast<std::size_t>(x) * samples + b]);
          } else {
            put(x, y, plane, line[x]);
          }
        }
      }
    }
  }
  return RgbRaster(static_cast<int>(width), static_cast<int>(height), std::move(rgb));
}

}  // namespace

RgbRaster load_rgb(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorKind::MissingFile, path.string() + ": no such file");
  }
  if (is_png(path)) return load_png(path);
  if (is_tiff(path)) return load_tiff(path);
  throw Error(ErrorKind::UnsupportedFormat, path.string() + ": not a PNG or TIFF file");
}

void save_rgb(const RgbRaster& raster, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width());
  image.height = static_cast<png_uint_32>(raster.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raster.bytes().data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::IoFailure, path.string() + ": " + msg);
  }
}

RgbRaster resize_bilinear(const RgbRaster& raster, Dims target) {
  if (target.width < 1 || target.height < 1) {
    throw Error(ErrorKind::DimMismatch, "resize target dims must be >= 1");
  }
  if (target == raster.dims()) return raster;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int src, int dst) {
    std::vector<Tap> out(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int t = 0; t < dst; ++t) {
      double s = (t + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const int lo = static_cast<int>(std::floor(s));
      const int hi = std::min(lo + 1, src - 1);
      out[static_cast<std::size_t>(t)] = {lo, hi, s - lo};
    }
    return out;
  };
  const auto xs = taps(raster.width(), target.width);
  const auto ys = taps(raster.height(), target.height);

  RgbRaster out(target.width, target.height);
  for (int y = 0; y < target.height; ++y) {
    const Tap& ty = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < target.width; ++x) {
      const Tap& tx = xs[static_cast<std::size_t>(x)];
      Rgb px{};
      for (int c = 0; c < 3; ++c) {
        const double top = raster.channel(tx.lo, ty.lo, c) * (1.0 - tx.frac) +
                           raster.channel(tx.hi, ty.lo, c) * tx.frac;
        const double bottom = raster.channel(tx.lo, ty.hi, c) * (1.0 - tx.frac) +
                              raster.channel(tx.hi, ty.hi, c) * tx.frac;
        const double v = top * (1.0 - ty.frac) + bottom * ty.frac;
        px[static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
      out.set(x, y, px);
    }
  }
  return out;
}

}  // namespace lulc
