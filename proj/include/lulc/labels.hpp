#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lulc/error.hpp"
#include "lulc/raster.hpp"

namespace lulc {

enum class LulcClass : std::uint8_t { Forest = 0, Farmland = 1, Builtup = 2, Water = 3 };

inline constexpr std::array<LulcClass, 4> kAllClasses = {
    LulcClass::Forest, LulcClass::Farmland, LulcClass::Builtup, LulcClass::Water};

std::string_view to_string(LulcClass cls);
/// Accepts the canonical lower-case names plus "built-up"; case-insensitive.
std::optional<LulcClass> parse_class(std::string_view name);

/// Per-pixel ground-truth label: one of the four classes or Ignore.
enum class Label : std::uint8_t { Forest = 0, Farmland = 1, Builtup = 2, Water = 3, Ignore = 255 };

constexpr Label to_label(LulcClass cls) { return static_cast<Label>(cls); }

enum class MaskValue : std::uint8_t { Other = 0, Target = 1, Ignore = 2 };

/// Row-major single-channel image of arbitrary cell type.
template <typename T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height),
        values_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 1 || height < 1) throw Error(ErrorKind::DimMismatch, "plane dims must be >= 1");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Dims dims() const noexcept { return {width_, height_}; }
  std::size_t size() const noexcept { return values_.size(); }

  T at(int x, int y) const noexcept { return values_[index(x, y)]; }
  void set(int x, int y, T v) noexcept { values_[index(x, y)] = v; }

  const std::vector<T>& values() const noexcept { return values_; }
  std::vector<T>& values() noexcept { return values_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

using ClassMap = Plane<Label>;
using BinaryMask = Plane<MaskValue>;

struct Palette {
  std::array<Rgb, 4> colors{};  // indexed by LulcClass
  Rgb ignore{};

  Rgb color(LulcClass cls) const { return colors[static_cast<std::size_t>(cls)]; }

  /// Builtup red, Forest cyan, Farmland green, Water blue, unrecognized black.
  static Palette standard();
  /// Throws ConfigError if any two of the five colors coincide.
  void validate() const;
};

/// Thrown by decode_labels; carries how many pixels were unmapped and where
/// the first one sits.
class UnmappedColorError : public Error {
 public:
  UnmappedColorError(std::size_t count, int x, int y, Rgb color);

  std::size_t count() const noexcept { return count_; }
  int first_x() const noexcept { return x_; }
  int first_y() const noexcept { return y_; }

 private:
  std::size_t count_;
  int x_, y_;
};

/// Maps each pixel to the palette entry within L-infinity distance
/// `tolerance` (nearest wins when several qualify).
ClassMap decode_labels(const RgbRaster& label_raster, const Palette& palette, int tolerance = 0);

/// Inverse of decode_labels for exact palettes.
RgbRaster render_labels(const ClassMap& map, const Palette& palette);

BinaryMask make_binary_mask(const ClassMap& map, LulcClass target);

/// Mask colours on disk: blue Target, red Other, black Ignore.
inline constexpr Rgb kMaskTargetColor{0, 0, 255};
inline constexpr Rgb kMaskOtherColor{255, 0, 0};
inline constexpr Rgb kMaskIgnoreColor{0, 0, 0};

RgbRaster render_mask(const BinaryMask& mask);
/// Throws UnmappedColor for anything other than the three mask colours.
BinaryMask decode_mask(const RgbRaster& raster);

/// Pixel counts per class plus Ignore; total == width * height.
struct ClassCounts {
  std::array<std::uint64_t, 4> per_class{};
  std::uint64_t ignore = 0;
  std::uint64_t total = 0;

  std::uint64_t count(LulcClass cls) const { return per_class[static_cast<std::size_t>(cls)]; }
  double fraction(LulcClass cls) const;
};

ClassCounts class_counts(const ClassMap& map);

/// count(cls) / (width * height); Ignore pixels stay in the denominator.
double class_fraction(const ClassMap& map, LulcClass cls);

struct SplitConfig {
  double presence_threshold = 0.05;
  std::map<LulcClass, std::size_t> test_counts = {
      {LulcClass::Forest, 6}, {LulcClass::Farmland, 12}, {LulcClass::Builtup, 8},
      {LulcClass::Water, 9}};
  std::uint64_t rng_seed = 0;

  void validate() const;
  std::size_t test_count(LulcClass cls) const;
};

/// Indices of images whose class fraction is >= the presence threshold, in
/// input order. Throws EmptySelection if nothing qualifies.
std::vector<std::size_t> select_images(std::span<const ClassCounts> dataset, LulcClass cls,
                                       const SplitConfig& cfg);
std::vector<std::size_t> select_images(std::span<const ClassMap> dataset, LulcClass cls,
                                       const SplitConfig& cfg);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded Fisher-Yates shuffle of `selected`; the last k entries become the
/// test set. Throws InsufficientImages unless k < selected.size().
Split split_train_test(std::span<const std::size_t> selected, LulcClass cls,
                       const SplitConfig& cfg);

}  // namespace lulc
