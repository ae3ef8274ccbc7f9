#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lulc/checkpoint.hpp"
#include "lulc/eval.hpp"
#include "lulc/labels.hpp"
#include "lulc/training.hpp"

namespace lulc {

namespace fs = std::filesystem;

/// One manifest pair. Paths are resolved against the manifest's directory.
struct DatasetEntry {
  std::string stem;
  fs::path image;
  fs::path labels;
};

/// Accepts either {"images": [...]} or a bare array of {"image", "labels"}
/// objects. Stems (image file stems) must be unique.
std::vector<DatasetEntry> load_manifest(const fs::path& path);

/// Everything a run needs; built from the JSON config file with flag
/// overrides merged on top.
struct PipelineConfig {
  std::optional<fs::path> dataset;
  fs::path output = "lulc_out";
  int threads = 1;
  std::uint64_t seed = 0;
  Palette palette = Palette::standard();
  int color_tolerance = 0;
  SplitConfig split;
  AugmentConfig augmentation;
  TrainConfig train;  // defaults for every class
  std::map<LulcClass, nlohmann::json> class_overrides;
  std::optional<LulcClass> target_class;
  std::optional<TrainMode> mode;
  std::optional<std::string> reference;
  bool improvement = false;
  std::optional<fs::path> init_weights;
  /// The merged configuration as parsed, for the run record.
  nlohmann::json resolved;

  /// Training settings for one class and mode, with the class overrides,
  /// seed and thread count applied.
  TrainConfig train_config(LulcClass cls, TrainMode mode) const;
};

/// Parses a merged config document. Every problem found is reported in a
/// single ConfigError rather than stopping at the first.
PipelineConfig parse_config(const nlohmann::json& merged);

/// Reads a JSON file; MissingFile / ConfigError on failure.
nlohmann::json read_json_file(const fs::path& path);
/// Pretty-printed with a trailing newline; IoFailure on failure.
void write_json_file(const fs::path& path, const nlohmann::json& j);

/// Library versions linked into this build.
nlohmann::json library_versions();

ClassMap load_class_map(const DatasetEntry& entry, const PipelineConfig& cfg);
BinaryMask load_binary_mask(const DatasetEntry& entry, LulcClass cls, const PipelineConfig& cfg);

struct LabelStats {
  std::vector<ClassCounts> counts;
  std::vector<Dims> dims;
};

/// Decodes every label image once.
LabelStats scan_labels(const std::vector<DatasetEntry>& entries, const PipelineConfig& cfg,
                       int threads);

struct SplitResult {
  LulcClass cls = LulcClass::Forest;
  std::vector<std::size_t> selected;
  Split split;
};

SplitResult make_split(const LabelStats& stats, LulcClass cls, const PipelineConfig& cfg);
nlohmann::json to_json(const SplitResult& s, const std::vector<DatasetEntry>& entries);
std::string split_summary(const SplitResult& s);

/// Output file names.
std::string mask_name(const std::string& stem, LulcClass cls);
std::string tile_name(const std::string& stem, TileIndex idx);
std::string checkpoint_name(LulcClass cls, TrainMode mode);

struct TrainOutcome {
  Fcn8Model model;
  TrainResult log;
};

/// Trains one class/mode model on the split's training images. `log` gets
/// one line per epoch.
TrainOutcome train_split(const std::vector<DatasetEntry>& entries, const LabelStats& stats,
                         const SplitResult& split, TrainMode mode, const PipelineConfig& cfg,
                         std::ostream* log);

BinaryMask predict_mask(const Fcn8Model& model, TrainMode mode, const RgbRaster& raster,
                        int threads);

struct ImageEvaluation {
  std::string stem;
  ConfusionMatrix confusion;
  BinaryMask prediction;
  BinaryMask truth;
};

struct ClassEvaluation {
  LulcClass cls = LulcClass::Forest;
  TrainMode mode = TrainMode::Downsample;
  std::vector<ImageEvaluation> images;
  ClassResult result;
};

/// Predicts every test image of the split and scores it against its mask.
ClassEvaluation evaluate_split(const Fcn8Model& model, const std::vector<DatasetEntry>& entries,
                               const SplitResult& split, TrainMode mode,
                               const PipelineConfig& cfg);

ClassResult summarise(const std::vector<ConfusionMatrix>& per_image);

/// Metrics document consumed by `report`.
nlohmann::json metrics_json(const ClassEvaluation& ev);
/// Recovers (class, result) from a metrics document.
std::pair<LulcClass, ClassResult> class_result_from_json(const nlohmann::json& j);

ReportOptions report_options(const PipelineConfig& cfg);

}  // namespace lulc
