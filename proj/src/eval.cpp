#include "lulc/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace lulc {

ConfusionMatrix confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.dims() != gt.dims()) {
    throw Error(ErrorKind::DimMismatch, "prediction and ground truth dims differ");
  }
  ConfusionMatrix cm;
  const auto& p = pred.values();
  const auto& g = gt.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == MaskValue::Ignore) continue;
    const bool pt = p[i] == MaskValue::Target;
    if (g[i] == MaskValue::Target) {
      pt ? ++cm.tp : ++cm.fn;
    } else {
      pt ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, std::uint8_t flag, std::uint8_t& flags) {
  if (den == 0) {
    flags |= flag;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsRow metrics_from_confusion(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorKind::EmptyComparison, "no pixels were compared");
  MetricsRow r;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.iou = ratio(cm.tp, cm.tp + cm.fp + cm.fn, kIouUndefined, r.undefined);
  r.precision = ratio(cm.tp, cm.tp + cm.fp, kPrecisionUndefined, r.undefined);
  r.recall = ratio(cm.tp, cm.tp + cm.fn, kRecallUndefined, r.undefined);
  // 2PR/(P+R) == 2tp/(2tp+fp+fn); the count form keeps f1 == 2iou/(1+iou)
  // tight. P+R vanishes exactly when tp == 0.
  if (cm.tp == 0) {
    r.undefined |= kF1Undefined;
  } else {
    r.f1 = static_cast<double>(2 * cm.tp) / static_cast<double>(2 * cm.tp + cm.fp + cm.fn);
  }
  std::uint8_t other_flag = 0;
  const double other_iou = ratio(cm.tn, cm.tn + cm.fp + cm.fn, kMeanIouUndefined, other_flag);
  r.undefined |= other_flag;
  r.mean_iou = 0.5 * (r.iou + other_iou);
  return r;
}

MetricsRow mean_rows(std::span<const MetricsRow> rows) {
  MetricsRow m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.accuracy += r.accuracy;
    m.iou += r.iou;
    m.recall += r.recall;
    m.precision += r.precision;
    m.f1 += r.f1;
    m.mean_iou += r.mean_iou;
    m.undefined |= r.undefined;
  }
  const double n = static_cast<double>(rows.size());
  m.accuracy /= n;
  m.iou /= n;
  m.recall /= n;
  m.precision /= n;
  m.f1 /= n;
  m.mean_iou /= n;
  return m;
}

MetricsRow aggregate(const std::map<LulcClass, MetricsRow>& rows) {
  std::vector<MetricsRow> ordered;
  for (LulcClass cls : kAllClasses) {
    const auto it = rows.find(cls);
    if (it == rows.end()) {
      throw Error(ErrorKind::MissingClass, "no metrics for class " + std::string(to_string(cls)));
    }
    ordered.push_back(it->second);
  }
  return mean_rows(ordered);
}

MetricsRow class_row(std::span<const ConfusionMatrix> per_image) {
  std::vector<MetricsRow> rows;
  for (const auto& cm : per_image) {
    if (cm.total() > 0) rows.push_back(metrics_from_confusion(cm));
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyComparison, "no image had scorable pixels");
  return mean_rows(rows);
}

RgbRaster error_map(const BinaryMask& pred, const BinaryMask& gt, const ErrorMapLegend& legend) {
  if (pred.dims() != gt.dims()) {
    throw Error(ErrorKind::DimMismatch, "prediction and ground truth dims differ");
  }
  RgbRaster out(gt.width(), gt.height(), legend.tn);
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const MaskValue g = gt.at(x, y);
      if (g == MaskValue::Ignore) continue;
      const bool pt = pred.at(x, y) == MaskValue::Target;
      if (g == MaskValue::Target) {
        out.set(x, y, pt ? legend.tp : legend.fn);
      } else if (pt) {
        out.set(x, y, legend.fp);
      }
    }
  }
  return out;
}

namespace {

MetricsRow row(double acc, double iou, double recall, double precision, double f1) {
  MetricsRow r;
  r.accuracy = acc;
  r.iou = iou;
  r.recall = recall;
  r.precision = precision;
  r.f1 = f1;
  return r;
}

}  // namespace

ReferenceSet reference_ecognition() {
  return {"ecognition",
          {{"forest", row(0.80, 0.77, 0.63, 0.72, 0.65)},
           {"builtup", row(0.73, 0.58, 0.30, 0.19, 0.21)},
           {"farmland", row(0.63, 0.47, 0.23, 0.32, 0.32)},
           {"water", row(0.73, 0.59, 0.69, 0.40, 0.48)},
           {"average", row(0.74, 0.60, 0.46, 0.41, 0.42)}}};
}

ReferenceSet reference_fcn8_downsampled() {
  return {"fcn8-downsampled",
          {{"forest", row(0.82, 0.73, 0.30, 0.81, 0.40)},
           {"builtup", row(0.83, 0.71, 0.52, 0.51, 0.45)},
           {"farmland", row(0.73, 0.60, 0.33, 0.59, 0.3)},
           {"water", row(0.93, 0.86, 0.76, 0.78, 0.76)},
           {"average", row(0.85, 0.76, 0.43, 0.75, 0.48)}}};
}

ReferenceSet reference_fcn8_grid() {
  return {"fcn8-grid",
          {{"forest", row(0.915, 0.847, 0.565, 0.901, 0.640)},
           {"builtup", row(0.914, 0.846, 0.506, 0.850, 0.626)},
           {"farmland", row(0.845, 0.735, 0.711, 0.699, 0.691)},
           {"water", row(0.964, 0.932, 0.862, 0.905, 0.877)},
           {"average", row(0.910, 0.840, 0.661, 0.839, 0.708)}}};
}

std::optional<ReferenceSet> reference_by_name(std::string_view name) {
  for (auto make : {reference_ecognition, reference_fcn8_downsampled, reference_fcn8_grid}) {
    ReferenceSet r = make();
    if (r.name == name) return r;
  }
  return std::nullopt;
}

Report build_report(const std::map<LulcClass, ClassResult>& per_class,
                    const ReportOptions& options) {
  Report report;
  if (options.reference) report.reference_name = options.reference->name;

  auto attach = [&](ReportRow& r) {
    if (!options.reference) return;
    const auto it = options.reference->rows.find(r.label);
    if (it == options.reference->rows.end()) return;
    r.reference = it->second;
    if (options.improvement && it->second.accuracy > 0.0) {
      r.accuracy_improvement_pct =
          (r.metrics.accuracy - it->second.accuracy) / it->second.accuracy * 100.0;
    }
  };

  std::map<LulcClass, MetricsRow> rows;
  for (LulcClass cls : kAllClasses) {
    const auto it = per_class.find(cls);
    if (it == per_class.end()) continue;
    ReportRow r;
    r.label = std::string(to_string(cls));
    r.metrics = it->second.row;
    r.pooled = it->second.pooled;
    r.images = it->second.images;
    attach(r);
    report.rows.push_back(r);
    rows[cls] = it->second.row;
  }
  if (rows.size() == kAllClasses.size()) {
    ReportRow avg;
    avg.label = "average";
    avg.metrics = aggregate(rows);
    attach(avg);
    report.rows.push_back(avg);
  }
  report.footer =
      "Per-image metrics come from each image's pooled pixel counts; a class row is the "
      "unweighted mean over that class's test images; the average row is the unweighted mean "
      "over classes. IoU is target-class IoU; mIoU averages target and other-class IoU. "
      "Undefined ratios (0/0) are reported as 0 and flagged with '*'.";
  return report;
}

namespace {

std::string cell(double v, bool flagged) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f%s", v, flagged ? "*" : "");
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string render_text(const Report& report) {
  std::ostringstream os;
  const bool ref = report.reference_name.has_value();
  const bool impr = std::any_of(report.rows.begin(), report.rows.end(),
                                [](const ReportRow& r) { return r.accuracy_improvement_pct.has_value(); });
  const char* names[] = {"Accuracy", "IoU", "Recall", "Precision", "F-1"};
  const std::size_t w = ref ? 16 : 10;

  os << pad("Class", 10);
  for (const char* n : names) os << pad(n, w);
  os << pad("mIoU", 10);
  if (impr) os << "AccGain%";
  os << "\n";
  if (ref) {
    os << pad("", 10);
    for (std::size_t i = 0; i < 5; ++i) os << pad("FCN-8  " + *report.reference_name, w);
    os << "\n";
  }
  for (const auto& r : report.rows) {
    const MetricsRow& m = r.metrics;
    const double vals[5] = {m.accuracy, m.iou, m.recall, m.precision, m.f1};
    const bool flags[5] = {false, (m.undefined & kIouUndefined) != 0,
                           (m.undefined & kRecallUndefined) != 0,
                           (m.undefined & kPrecisionUndefined) != 0,
                           (m.undefined & kF1Undefined) != 0};
    double refs[5] = {0, 0, 0, 0, 0};
    if (r.reference) {
      refs[0] = r.reference->accuracy;
      refs[1] = r.reference->iou;
      refs[2] = r.reference->recall;
      refs[3] = r.reference->precision;
      refs[4] = r.reference->f1;
    }
    os << pad(r.label, 10);
    for (std::size_t i = 0; i < 5; ++i) {
      std::string c = cell(vals[i], flags[i]);
      if (ref) c = pad(c, 7) + (r.reference ? cell(refs[i], false) : std::string("-"));
      os << pad(c, w);
    }
    os << pad(cell(m.mean_iou, (m.undefined & kMeanIouUndefined) != 0), 10);
    if (impr && r.accuracy_improvement_pct) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%+.2f", *r.accuracy_improvement_pct);
      os << buf;
    }
    os << "\n";
  }
  os << "\n" << report.footer << "\n";
  return os.str();
}

nlohmann::json to_json(const MetricsRow& row) {
  nlohmann::json j = {{"accuracy", row.accuracy}, {"iou", row.iou},
                      {"recall", row.recall},     {"precision", row.precision},
                      {"f1", row.f1},             {"mean_iou", row.mean_iou}};
  nlohmann::json undefined = nlohmann::json::array();
  if (row.undefined & kIouUndefined) undefined.push_back("iou");
  if (row.undefined & kPrecisionUndefined) undefined.push_back("precision");
  if (row.undefined & kRecallUndefined) undefined.push_back("recall");
  if (row.undefined & kF1Undefined) undefined.push_back("f1");
  if (row.undefined & kMeanIouUndefined) undefined.push_back("mean_iou");
  j["undefined"] = undefined;
  return j;
}

MetricsRow metrics_row_from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.accuracy = j.at("accuracy").get<double>();
  r.iou = j.at("iou").get<double>();
  r.recall = j.at("recall").get<double>();
  r.precision = j.at("precision").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.mean_iou = j.value("mean_iou", 0.0);
  if (j.contains("undefined")) {
    for (const auto& u : j.at("undefined")) {
      const auto s = u.get<std::string>();
      if (s == "iou") r.undefined |= kIouUndefined;
      if (s == "precision") r.undefined |= kPrecisionUndefined;
      if (s == "recall") r.undefined |= kRecallUndefined;
      if (s == "f1") r.undefined |= kF1Undefined;
      if (s == "mean_iou") r.undefined |= kMeanIouUndefined;
    }
  }
  return r;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  return {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(),
          j.at("fn").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>()};
}

nlohmann::json to_json(const Report& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row = {{"label", r.label}, {"metrics", to_json(r.metrics)}};
    if (r.reference) row["reference"] = to_json(*r.reference);
    if (r.accuracy_improvement_pct) row["accuracy_improvement_pct"] = *r.accuracy_improvement_pct;
    if (r.pooled) row["pooled_confusion"] = to_json(*r.pooled);
    if (r.images > 0) row["images"] = r.images;
    rows.push_back(row);
  }
  nlohmann::json j = {{"rows", rows}, {"footer", report.footer}};
  j["reference"] = report.reference_name ? nlohmann::json(*report.reference_name) : nlohmann::json();
  return j;
}

}  // namespace lulc
