#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "lulc/labels.hpp"
#include "test_util.hpp"

namespace lulc {
namespace {

ClassMap decode_one(Rgb px, int tolerance = 0) {
  RgbRaster r(1, 1, px);
  return decode_labels(r, Palette::standard(), tolerance);
}

TEST(Palette, StandardColorsAreDistinct) {
  EXPECT_NO_THROW(Palette::standard().validate());
  Palette p = Palette::standard();
  p.ignore = p.color(LulcClass::Water);
  EXPECT_THROW(p.validate(), Error);
}

TEST(Classes, ParseNames) {
  EXPECT_EQ(parse_class("forest"), LulcClass::Forest);
  EXPECT_EQ(parse_class("Built-up"), LulcClass::Builtup);
  EXPECT_EQ(parse_class("WATER"), LulcClass::Water);
  EXPECT_FALSE(parse_class("meadow").has_value());
}

TEST(DecodeLabels, PaletteColors) {
  EXPECT_EQ(decode_one({0, 255, 255}).at(0, 0), Label::Forest);
  EXPECT_EQ(decode_one({0, 0, 0}).at(0, 0), Label::Ignore);
  EXPECT_EQ(decode_one({255, 0, 0}).at(0, 0), Label::Builtup);
  EXPECT_EQ(decode_one({0, 255, 0}).at(0, 0), Label::Farmland);
  EXPECT_EQ(decode_one({0, 0, 255}).at(0, 0), Label::Water);
}

TEST(DecodeLabels, ToleranceRule) {
  try {
    decode_one({7, 250, 250}, 0);
    FAIL();
  } catch (const UnmappedColorError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnmappedColor);
    EXPECT_EQ(e.count(), 1u);
    EXPECT_EQ(e.first_x(), 0);
  }
  EXPECT_EQ(decode_one({7, 250, 250}, 8).at(0, 0), Label::Forest);
}

TEST(DecodeLabels, ReportsCountAndFirstOffender) {
  RgbRaster r(3, 2, Rgb{0, 0, 255});
  r.set(2, 0, {10, 10, 10});
  r.set(1, 1, {99, 99, 99});
  try {
    decode_labels(r, Palette::standard());
    FAIL();
  } catch (const UnmappedColorError& e) {
    EXPECT_EQ(e.count(), 2u);
    EXPECT_EQ(e.first_x(), 2);
    EXPECT_EQ(e.first_y(), 0);
  }
}

TEST(DecodeLabels, RenderRoundTripIsExact) {
  std::mt19937_64 rng(5);
  const Palette p = Palette::standard();
  ClassMap map(31, 17);
  for (auto& l : map.values()) {
    const auto r = rng() % 5;
    l = r == 4 ? Label::Ignore : static_cast<Label>(r);
  }
  const RgbRaster rendered = render_labels(map, p);
  EXPECT_EQ(decode_labels(rendered, p), map);
  EXPECT_EQ(render_labels(decode_labels(rendered, p), p), rendered);
}

TEST(BinaryMask, TargetOtherIgnore) {
  ClassMap map(3, 1);
  map.set(0, 0, Label::Forest);
  map.set(1, 0, Label::Farmland);
  map.set(2, 0, Label::Ignore);
  const BinaryMask m = make_binary_mask(map, LulcClass::Forest);
  EXPECT_EQ(m.at(0, 0), MaskValue::Target);
  EXPECT_EQ(m.at(1, 0), MaskValue::Other);
  EXPECT_EQ(m.at(2, 0), MaskValue::Ignore);

  const RgbRaster rendered = render_mask(m);
  EXPECT_EQ(rendered.at(0, 0), kMaskTargetColor);  // blue
  EXPECT_EQ(rendered.at(1, 0), kMaskOtherColor);   // red
  EXPECT_EQ(rendered.at(2, 0), kMaskIgnoreColor);
  EXPECT_EQ(decode_mask(rendered), m);
}

TEST(BinaryMask, IgnoreNeverBecomesTargetOrOther) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    ClassMap map(8, 8);
    for (auto& l : map.values()) {
      const auto r = rng() % 5;
      l = r == 4 ? Label::Ignore : static_cast<Label>(r);
    }
    for (LulcClass cls : kAllClasses) {
      const BinaryMask m = make_binary_mask(map, cls);
      for (std::size_t i = 0; i < m.size(); ++i) {
        ASSERT_EQ(map.values()[i] == Label::Ignore, m.values()[i] == MaskValue::Ignore);
        if (map.values()[i] == to_label(cls)) ASSERT_EQ(m.values()[i], MaskValue::Target);
      }
    }
  }
}

TEST(ClassFraction, Examples) {
  EXPECT_DOUBLE_EQ(class_fraction(ClassMap(4, 4, Label::Forest), LulcClass::Forest), 1.0);
  EXPECT_DOUBLE_EQ(class_fraction(ClassMap(4, 4, Label::Forest), LulcClass::Water), 0.0);
  ClassMap half(10, 10, Label::Ignore);
  for (int i = 0; i < 50; ++i) half.values()[static_cast<std::size_t>(i)] = Label::Forest;
  EXPECT_DOUBLE_EQ(class_fraction(half, LulcClass::Forest), 0.5);
}

TEST(ClassFraction, FractionsSumToOne) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    ClassMap map(1 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 40));
    for (auto& l : map.values()) {
      const auto r = rng() % 5;
      l = r == 4 ? Label::Ignore : static_cast<Label>(r);
    }
    const ClassCounts c = class_counts(map);
    EXPECT_EQ(std::accumulate(c.per_class.begin(), c.per_class.end(), c.ignore), c.total);
  }
}

ClassMap map_with_count(LulcClass cls, int count) {
  ClassMap m(100, 100, Label::Ignore);
  for (int i = 0; i < count; ++i) m.values()[static_cast<std::size_t>(i)] = to_label(cls);
  return m;
}

TEST(SelectImages, ThresholdIsInclusive) {
  std::vector<ClassMap> maps = {map_with_count(LulcClass::Water, 499),
                                map_with_count(LulcClass::Water, 500),
                                map_with_count(LulcClass::Water, 501)};
  const auto sel = select_images(std::span<const ClassMap>(maps), LulcClass::Water, SplitConfig{});
  EXPECT_EQ(sel, (std::vector<std::size_t>{1, 2}));
}

TEST(SelectImages, EmptySelection) {
  std::vector<ClassMap> maps = {map_with_count(LulcClass::Water, 10)};
  try {
    select_images(std::span<const ClassMap>(maps), LulcClass::Forest, SplitConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySelection);
  }
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{100});
  return v;
}

TEST(SplitTrainTest, TableCounts) {
  SplitConfig cfg;
  cfg.rng_seed = 42;
  const auto forest = split_train_test(iota_vec(31), LulcClass::Forest, cfg);
  EXPECT_EQ(forest.train.size(), 25u);
  EXPECT_EQ(forest.test.size(), 6u);
  const auto water = split_train_test(iota_vec(72), LulcClass::Water, cfg);
  EXPECT_EQ(water.train.size(), 63u);
  EXPECT_EQ(water.test.size(), 9u);
  const auto farm = split_train_test(iota_vec(131), LulcClass::Farmland, cfg);
  EXPECT_EQ(farm.train.size(), 119u);
  const auto built = split_train_test(iota_vec(60), LulcClass::Builtup, cfg);
  EXPECT_EQ(built.train.size(), 52u);
}

TEST(SplitTrainTest, DeterministicPartition) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    SplitConfig cfg;
    cfg.rng_seed = rng();
    const auto items = iota_vec(10 + rng() % 50);
    const auto a = split_train_test(items, LulcClass::Builtup, cfg);
    const auto b = split_train_test(items, LulcClass::Builtup, cfg);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    for (auto t : a.test) EXPECT_TRUE(all.insert(t).second) << "train/test overlap";
    EXPECT_EQ(all, std::set<std::size_t>(items.begin(), items.end()));
  }
}

TEST(SplitTrainTest, DifferentSeedsShuffleDifferently) {
  SplitConfig a, b;
  a.rng_seed = 1;
  b.rng_seed = 2;
  const auto items = iota_vec(40);
  EXPECT_NE(split_train_test(items, LulcClass::Water, a).test,
            split_train_test(items, LulcClass::Water, b).test);
}

TEST(SplitTrainTest, InsufficientImages) {
  try {
    split_train_test(iota_vec(6), LulcClass::Forest, SplitConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientImages);
  }
}

}  // namespace
}  // namespace lulc
