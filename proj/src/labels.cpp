#include "lulc/labels.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <random>

namespace lulc {

std::string_view to_string(LulcClass cls) {
  switch (cls) {
    case LulcClass::Forest: return "forest";
    case LulcClass::Farmland: return "farmland";
    case LulcClass::Builtup: return "builtup";
    case LulcClass::Water: return "water";
  }
  return "unknown";
}

std::optional<LulcClass> parse_class(std::string_view name) {
  std::string lower;
  for (char c : name) {
    if (c == '-' || c == '_') continue;
    lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (LulcClass cls : kAllClasses) {
    if (lower == to_string(cls)) return cls;
  }
  return std::nullopt;
}

Palette Palette::standard() {
  Palette p;
  p.colors[static_cast<std::size_t>(LulcClass::Forest)] = {0, 255, 255};
  p.colors[static_cast<std::size_t>(LulcClass::Farmland)] = {0, 255, 0};
  p.colors[static_cast<std::size_t>(LulcClass::Builtup)] = {255, 0, 0};
  p.colors[static_cast<std::size_t>(LulcClass::Water)] = {0, 0, 255};
  p.ignore = {0, 0, 0};
  return p;
}

void Palette::validate() const {
  std::vector<Rgb> all(colors.begin(), colors.end());
  all.push_back(ignore);
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw Error(ErrorKind::ConfigError, "palette colors must be pairwise distinct");
  }
}

namespace {

std::string describe(Rgb c) {
  return "(" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) +
         ")";
}

int linf(Rgb a, Rgb b) {
  int d = 0;
  for (std::size_t i = 0; i < 3; ++i) d = std::max(d, std::abs(int{a[i]} - int{b[i]}));
  return d;
}

}  // namespace

UnmappedColorError::UnmappedColorError(std::size_t count, int x, int y, Rgb color)
    : Error(ErrorKind::UnmappedColor,
            std::to_string(count) + " pixel(s) match no palette color; first at (" +
                std::to_string(x) + "," + std::to_string(y) + ") color " + describe(color)),
      count_(count), x_(x), y_(y) {}

ClassMap decode_labels(const RgbRaster& label_raster, const Palette& palette, int tolerance) {
  palette.validate();
  ClassMap map(label_raster.width(), label_raster.height(), Label::Ignore);

  std::array<std::pair<Rgb, Label>, 5> entries{};
  for (LulcClass cls : kAllClasses) {
    entries[static_cast<std::size_t>(cls)] = {palette.color(cls), to_label(cls)};
  }
  entries[4] = {palette.ignore, Label::Ignore};

  std::size_t unmapped = 0;
  int first_x = -1, first_y = -1;
  Rgb first_color{};
  for (int y = 0; y < label_raster.height(); ++y) {
    for (int x = 0; x < label_raster.width(); ++x) {
      const Rgb px = label_raster.at(x, y);
      int best = tolerance + 1;
      Label label = Label::Ignore;
      for (const auto& [color, l] : entries) {
        const int d = linf(px, color);
        if (d < best) {
          best = d;
          label = l;
        }
      }
      if (best > tolerance) {
        if (unmapped++ == 0) {
          first_x = x;
          first_y = y;
          first_color = px;
        }
        continue;
      }
      map.set(x, y, label);
    }
  }
  if (unmapped > 0) throw UnmappedColorError(unmapped, first_x, first_y, first_color);
  return map;
}

RgbRaster render_labels(const ClassMap& map, const Palette& palette) {
  RgbRaster out(map.width(), map.height());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const Label l = map.at(x, y);
      out.set(x, y, l == Label::Ignore ? palette.ignore : palette.color(static_cast<LulcClass>(l)));
    }
  }
  return out;
}

BinaryMask make_binary_mask(const ClassMap& map, LulcClass target) {
  BinaryMask mask(map.width(), map.height(), MaskValue::Ignore);
  const Label t = to_label(target);
  auto& out = mask.values();
  const auto& in = map.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == Label::Ignore) continue;
    out[i] = in[i] == t ? MaskValue::Target : MaskValue::Other;
  }
  return mask;
}

RgbRaster render_mask(const BinaryMask& mask) {
  RgbRaster out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      switch (mask.at(x, y)) {
        case MaskValue::Target: out.set(x, y, kMaskTargetColor); break;
        case MaskValue::Other: out.set(x, y, kMaskOtherColor); break;
        case MaskValue::Ignore: out.set(x, y, kMaskIgnoreColor); break;
      }
    }
  }
  return out;
}

BinaryMask decode_mask(const RgbRaster& raster) {
  BinaryMask mask(raster.width(), raster.height(), MaskValue::Ignore);
  std::size_t unmapped = 0;
  int fx = -1, fy = -1;
  Rgb fc{};
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      const Rgb px = raster.at(x, y);
      if (px == kMaskTargetColor) {
        mask.set(x, y, MaskValue::Target);
      } else if (px == kMaskOtherColor) {
        mask.set(x, y, MaskValue::Other);
      } else if (px != kMaskIgnoreColor) {
        if (unmapped++ == 0) {
          fx = x;
          fy = y;
          fc = px;
        }
      }
    }
  }
  if (unmapped > 0) throw UnmappedColorError(unmapped, fx, fy, fc);
  return mask;
}

double ClassCounts::fraction(LulcClass cls) const {
  return total == 0 ? 0.0 : static_cast<double>(count(cls)) / static_cast<double>(total);
}

ClassCounts class_counts(const ClassMap& map) {
  ClassCounts counts;
  for (Label l : map.values()) {
    if (l == Label::Ignore) {
      ++counts.ignore;
    } else {
      ++counts.per_class[static_cast<std::size_t>(l)];
    }
  }
  counts.total = map.size();
  return counts;
}

double class_fraction(const ClassMap& map, LulcClass cls) {
  return class_counts(map).fraction(cls);
}

void SplitConfig::validate() const {
  if (!(presence_threshold > 0.0 && presence_threshold < 1.0)) {
    throw Error(ErrorKind::ConfigError, "presence_threshold must lie in (0, 1)");
  }
}

std::size_t SplitConfig::test_count(LulcClass cls) const {
  const auto it = test_counts.find(cls);
  return it == test_counts.end() ? 0 : it->second;
}

namespace {

// Exact rational comparison count/total >= threshold, robust to the threshold
// itself being a rounded decimal such as 0.05.
bool meets_threshold(std::uint64_t count, std::uint64_t total, double threshold) {
  if (total == 0) return false;
  const long double lhs = static_cast<long double>(count);
  const long double rhs = static_cast<long double>(threshold) * static_cast<long double>(total);
  return lhs >= rhs - rhs * 1e-12L;
}

}  // namespace

std::vector<std::size_t> select_images(std::span<const ClassCounts> dataset, LulcClass cls,
                                       const SplitConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw Error(ErrorKind::EmptySelection, "dataset is empty");
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (meets_threshold(dataset[i].count(cls), dataset[i].total, cfg.presence_threshold)) {
      selected.push_back(i);
    }
  }
  if (selected.empty()) {
    throw Error(ErrorKind::EmptySelection,
                "no image contains " + std::string(to_string(cls)) + " above the threshold");
  }
  return selected;
}

std::vector<std::size_t> select_images(std::span<const ClassMap> dataset, LulcClass cls,
                                       const SplitConfig& cfg) {
  std::vector<ClassCounts> counts;
  counts.reserve(dataset.size());
  for (const auto& m : dataset) counts.push_back(class_counts(m));
  return select_images(std::span<const ClassCounts>(counts), cls, cfg);
}

Split split_train_test(std::span<const std::size_t> selected, LulcClass cls,
                       const SplitConfig& cfg) {
  const std::size_t k = cfg.test_count(cls);
  if (k >= selected.size()) {
    throw Error(ErrorKind::InsufficientImages,
                std::string(to_string(cls)) + ": test count " + std::to_string(k) +
                    " must be smaller than the " + std::to_string(selected.size()) +
                    " selected images");
  }
  // Fisher-Yates over raw mt19937_64 draws: std::shuffle and the standard
  // distributions are implementation-defined, the engine output is not.
  std::vector<std::size_t> order(selected.begin(), selected.end());
  std::mt19937_64 rng(cfg.rng_seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  Split split;
  split.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(k));
  split.test.assign(order.end() - static_cast<std::ptrdiff_t>(k), order.end());
  return split;
}

}  // namespace lulc
