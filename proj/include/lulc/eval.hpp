#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "lulc/labels.hpp"
#include "lulc/raster.hpp"

namespace lulc {

/// Pixel counts over non-Ignore ground truth.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Bits set in MetricsRow::undefined when a ratio had a zero denominator
/// and was reported as 0.
enum MetricFlag : std::uint8_t {
  kIouUndefined = 1 << 0,
  kPrecisionUndefined = 1 << 1,
  kRecallUndefined = 1 << 2,
  kF1Undefined = 1 << 3,
  kMeanIouUndefined = 1 << 4,
};

struct MetricsRow {
  double accuracy = 0.0;
  double iou = 0.0;  // target class
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  /// Mean of target IoU and other-class IoU tn/(tn+fp+fn).
  double mean_iou = 0.0;
  std::uint8_t undefined = 0;
};

/// Pixels whose ground truth is Ignore are skipped. A prediction of Ignore
/// against non-Ignore truth counts as Other.
ConfusionMatrix confusion(const BinaryMask& pred, const BinaryMask& gt);

/// Throws EmptyComparison if cm.total() == 0.
MetricsRow metrics_from_confusion(const ConfusionMatrix& cm);

/// Unweighted mean per metric over rows; flags are OR-ed.
MetricsRow mean_rows(std::span<const MetricsRow> rows);

/// Unweighted mean over the four classes; throws MissingClass otherwise.
MetricsRow aggregate(const std::map<LulcClass, MetricsRow>& rows);

/// Per-image metrics averaged over the images (the class-row rule).
/// Images with an empty comparison are skipped; throws EmptyComparison if
/// none remain.
MetricsRow class_row(std::span<const ConfusionMatrix> per_image);

struct ErrorMapLegend {
  Rgb tp{0, 255, 255};
  Rgb fn{0, 0, 255};
  Rgb fp{255, 0, 0};
  Rgb tn{128, 128, 128};
};

/// One legend colour per pixel; Ignore ground truth renders as tn (background).
RgbRaster error_map(const BinaryMask& pred, const BinaryMask& gt,
                    const ErrorMapLegend& legend = {});

/// Fixed comparison columns for reports, keyed by row label ("forest", ...,
/// "average").
struct ReferenceSet {
  std::string name;
  std::map<std::string, MetricsRow> rows;
};

/// Published comparator numbers: eCognition test-set scores, and the FCN-8
/// downsampled and grid-wise scores.
ReferenceSet reference_ecognition();
ReferenceSet reference_fcn8_downsampled();
ReferenceSet reference_fcn8_grid();
std::optional<ReferenceSet> reference_by_name(std::string_view name);

struct ReportOptions {
  std::optional<ReferenceSet> reference;
  /// Adds relative accuracy improvement over the reference, in percent.
  bool improvement = false;
};

struct ReportRow {
  std::string label;
  MetricsRow metrics;
  std::optional<MetricsRow> reference;
  std::optional<double> accuracy_improvement_pct;
  std::optional<ConfusionMatrix> pooled;
  std::size_t images = 0;
};

struct Report {
  std::vector<ReportRow> rows;  // classes in canonical order, then "average" when all four exist
  std::optional<std::string> reference_name;
  std::string footer;
};

struct ClassResult {
  MetricsRow row;
  ConfusionMatrix pooled;
  std::size_t images = 0;
};

Report build_report(const std::map<LulcClass, ClassResult>& per_class,
                    const ReportOptions& options = {});
std::string render_text(const Report& report);
nlohmann::json to_json(const Report& report);
nlohmann::json to_json(const MetricsRow& row);
nlohmann::json to_json(const ConfusionMatrix& cm);
MetricsRow metrics_row_from_json(const nlohmann::json& j);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);

}  // namespace lulc
