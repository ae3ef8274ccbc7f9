#include <gtest/gtest.h>

#include <algorithm>

#include "lulc/eval.hpp"
#include "test_util.hpp"

namespace lulc {
namespace {

ConfusionMatrix tally(const BinaryMask& pred, const BinaryMask& gt) {
  ConfusionMatrix cm;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const MaskValue g = gt.at(x, y), p = pred.at(x, y);
      if (g == MaskValue::Ignore) continue;
      if (g == MaskValue::Target && p == MaskValue::Target) cm.tp++;
      if (g == MaskValue::Target && p != MaskValue::Target) cm.fn++;
      if (g == MaskValue::Other && p == MaskValue::Target) cm.fp++;
      if (g == MaskValue::Other && p != MaskValue::Target) cm.tn++;
    }
  }
  return cm;
}

MetricsRow row(double acc, double iou, double rec, double prec, double f1) {
  MetricsRow r;
  r.accuracy = acc;
  r.iou = iou;
  r.recall = rec;
  r.precision = prec;
  r.f1 = f1;
  return r;
}

TEST(Confusion, MatchesBruteForce) {
  std::mt19937_64 rng(80);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 64), h = 1 + static_cast<int>(rng() % 64);
    const BinaryMask gt = testing::random_mask(w, h, rng, 15);
    const BinaryMask pred = testing::random_mask(w, h, rng, 5);
    const ConfusionMatrix cm = confusion(pred, gt);
    EXPECT_EQ(cm, tally(pred, gt));
    std::uint64_t scored = 0;
    for (MaskValue v : gt.values()) scored += v != MaskValue::Ignore;
    EXPECT_EQ(cm.total(), scored);
  }
}

TEST(Confusion, PerfectAndIgnored) {
  std::mt19937_64 rng(81);
  const BinaryMask gt = testing::random_mask(20, 20, rng, 0);
  const ConfusionMatrix cm = confusion(gt, gt);
  EXPECT_EQ(cm.fp, 0u);
  EXPECT_EQ(cm.fn, 0u);
  EXPECT_EQ(confusion(gt, BinaryMask(20, 20, MaskValue::Ignore)).total(), 0u);
  EXPECT_THROW(confusion(gt, BinaryMask(20, 21)), Error);
}

TEST(Metrics, WorkedExample) {
  const MetricsRow r = metrics_from_confusion({50, 10, 20, 20});
  EXPECT_NEAR(r.accuracy, 0.70, 1e-12);
  EXPECT_NEAR(r.iou, 0.625, 1e-12);
  EXPECT_NEAR(r.precision, 50.0 / 60.0, 1e-12);
  EXPECT_NEAR(r.recall, 50.0 / 70.0, 1e-12);
  const double p = 50.0 / 60.0, q = 50.0 / 70.0;
  EXPECT_NEAR(r.f1, 2 * p * q / (p + q), 1e-12);
  EXPECT_NEAR(r.f1, 0.7692, 5e-5);
  EXPECT_NEAR(r.mean_iou, 0.5 * (0.625 + 20.0 / 50.0), 1e-12);
  EXPECT_EQ(r.undefined, 0);
}

TEST(Metrics, PerfectPrediction) {
  const MetricsRow r = metrics_from_confusion({30, 0, 0, 70});
  for (double v : {r.accuracy, r.iou, r.recall, r.precision, r.f1, r.mean_iou}) EXPECT_EQ(v, 1.0);
}

TEST(Metrics, ZeroDenominatorsAreFlaggedZeros) {
  const MetricsRow r = metrics_from_confusion({0, 0, 5, 10});
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_TRUE(r.undefined & kPrecisionUndefined);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_TRUE(r.undefined & kF1Undefined);
  EXPECT_FALSE(r.undefined & kRecallUndefined);

  const MetricsRow none = metrics_from_confusion({0, 0, 0, 10});  // no target anywhere
  EXPECT_TRUE(none.undefined & kIouUndefined);
  EXPECT_TRUE(none.undefined & kRecallUndefined);
  EXPECT_EQ(none.accuracy, 1.0);
  try {
    metrics_from_confusion({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyComparison);
  }
}

TEST(Metrics, PropertiesOnRandomMatrices) {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 1000; ++trial) {
    const ConfusionMatrix cm{rng() % 1000, rng() % 1000, rng() % 1000, rng() % 1000 + 1};
    const MetricsRow r = metrics_from_confusion(cm);
    for (double v : {r.accuracy, r.iou, r.recall, r.precision, r.f1, r.mean_iou}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_NEAR(r.f1, 2 * r.iou / (1 + r.iou), 1e-12);
  }
}

TEST(Aggregate, PublishedGridAverageRow) {
  const std::map<LulcClass, MetricsRow> rows = {
      {LulcClass::Forest, row(0.915, 0.847, 0.565, 0.901, 0.640)},
      {LulcClass::Builtup, row(0.914, 0.846, 0.506, 0.850, 0.626)},
      {LulcClass::Farmland, row(0.845, 0.735, 0.711, 0.699, 0.691)},
      {LulcClass::Water, row(0.964, 0.932, 0.862, 0.905, 0.877)}};
  const MetricsRow avg = aggregate(rows);
  constexpr double kRounding = 0.0005 + 1e-12;
  EXPECT_NEAR(avg.accuracy, 0.910, kRounding);
  EXPECT_NEAR(avg.iou, 0.840, kRounding);
  EXPECT_NEAR(avg.recall, 0.661, kRounding);
  EXPECT_NEAR(avg.precision, 0.839, kRounding);
  EXPECT_NEAR(avg.f1, 0.708, kRounding);
}

TEST(Aggregate, IdenticalRowsAndMissingClass) {
  const MetricsRow r = row(0.5, 0.4, 0.3, 0.2, 0.1);
  std::map<LulcClass, MetricsRow> rows;
  for (LulcClass c : kAllClasses) rows[c] = r;
  const MetricsRow avg = aggregate(rows);
  EXPECT_DOUBLE_EQ(avg.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(avg.f1, 0.1);
  rows.erase(LulcClass::Water);
  try {
    aggregate(rows);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingClass);
  }
}

TEST(ClassRow, MeanOfPerImageMetrics) {
  const std::vector<ConfusionMatrix> images = {{10, 0, 0, 10}, {0, 0, 10, 10}, {}};
  const MetricsRow r = class_row(images);  // the empty image is skipped
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r.iou, 0.5);
  EXPECT_THROW(class_row(std::vector<ConfusionMatrix>{{}}), Error);
}

TEST(ErrorMap, FourOutcomeColours) {
  BinaryMask pred(5, 1), gt(5, 1);
  const std::pair<MaskValue, MaskValue> cases[] = {{MaskValue::Target, MaskValue::Target},
                                                   {MaskValue::Other, MaskValue::Target},
                                                   {MaskValue::Target, MaskValue::Other},
                                                   {MaskValue::Other, MaskValue::Other},
                                                   {MaskValue::Target, MaskValue::Ignore}};
  for (int i = 0; i < 5; ++i) {
    pred.set(i, 0, cases[i].first);
    gt.set(i, 0, cases[i].second);
  }
  const RgbRaster m = error_map(pred, gt);
  EXPECT_EQ(m.at(0, 0), (Rgb{0, 255, 255}));
  EXPECT_EQ(m.at(1, 0), (Rgb{0, 0, 255}));
  EXPECT_EQ(m.at(2, 0), (Rgb{255, 0, 0}));
  EXPECT_EQ(m.at(3, 0), (Rgb{128, 128, 128}));
  EXPECT_EQ(m.at(4, 0), (Rgb{128, 128, 128}));
  EXPECT_THROW(error_map(pred, BinaryMask(4, 1)), Error);
}

TEST(References, PublishedLiterals) {
  const auto ecog = reference_by_name("ecognition");
  ASSERT_TRUE(ecog);
  EXPECT_DOUBLE_EQ(ecog->rows.at("forest").accuracy, 0.80);
  EXPECT_DOUBLE_EQ(ecog->rows.at("water").precision, 0.40);
  EXPECT_DOUBLE_EQ(reference_fcn8_grid().rows.at("average").iou, 0.840);
  EXPECT_DOUBLE_EQ(reference_fcn8_downsampled().rows.at("farmland").f1, 0.3);
  EXPECT_FALSE(reference_by_name("nope"));
}

std::map<LulcClass, ClassResult> four_classes() {
  std::map<LulcClass, ClassResult> out;
  std::uint64_t k = 1;
  for (LulcClass c : kAllClasses) {
    const ConfusionMatrix cm{10 * k, 3, 2 * k, 40};
    out[c] = {metrics_from_confusion(cm), cm, 2};
    ++k;
  }
  return out;
}

TEST(Report, FiveRowsWithAverage) {
  const Report r = build_report(four_classes());
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(r.rows[0].label, "forest");
  EXPECT_EQ(r.rows[4].label, "average");
  EXPECT_FALSE(r.footer.empty());
  EXPECT_FALSE(r.reference_name);
}

TEST(Report, PartialClassesHaveNoAverage) {
  auto partial = four_classes();
  partial.erase(LulcClass::Forest);
  const Report r = build_report(partial);
  EXPECT_EQ(r.rows.size(), 3u);
}

TEST(Report, ReferenceColumnAndImprovement) {
  ReportOptions opts;
  opts.reference = reference_ecognition();
  opts.improvement = true;
  const Report r = build_report(four_classes(), opts);
  ASSERT_TRUE(r.rows[0].reference);
  EXPECT_DOUBLE_EQ(r.rows[0].reference->accuracy, 0.80);
  ASSERT_TRUE(r.rows[0].accuracy_improvement_pct);
  EXPECT_NEAR(*r.rows[0].accuracy_improvement_pct,
              (r.rows[0].metrics.accuracy - 0.80) / 0.80 * 100.0, 1e-12);
  const std::string text = render_text(r);
  EXPECT_NE(text.find("ecognition"), std::string::npos);
  EXPECT_NE(text.find("AccGain%"), std::string::npos);
}

TEST(Report, TextAndJsonCarryTheSameValues) {
  const Report r = build_report(four_classes());
  const std::string text = render_text(r);
  const nlohmann::json j = to_json(r);
  ASSERT_EQ(j.at("rows").size(), r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = j.at("rows")[i];
    EXPECT_EQ(row.at("label"), r.rows[i].label);
    const MetricsRow back = metrics_row_from_json(row.at("metrics"));
    EXPECT_EQ(back.accuracy, r.rows[i].metrics.accuracy);
    EXPECT_EQ(back.f1, r.rows[i].metrics.f1);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", back.iou);
    EXPECT_NE(text.find(buf), std::string::npos) << buf;
  }
  EXPECT_EQ(confusion_from_json(j.at("rows")[0].at("pooled_confusion")), (ConfusionMatrix{10, 3, 2, 40}));
}

TEST(Report, FlagsSurviveJson) {
  MetricsRow r = metrics_from_confusion({0, 0, 5, 10});
  EXPECT_EQ(metrics_row_from_json(to_json(r)).undefined, r.undefined);
}

}  // namespace
}  // namespace lulc
