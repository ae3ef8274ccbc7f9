#include "lulc/pipeline.hpp"

#include <openssl/crypto.h>
#include <png.h>
#include <tiffio.h>

#include <Eigen/Core>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "lulc/parallel.hpp"

namespace lulc {

using nlohmann::json;

namespace {

std::string path_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Collects every problem instead of stopping at the first.
class ConfigReader {
 public:
  void problem(std::string msg) { problems_.push_back(std::move(msg)); }

  void unknown_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> known) {
    const std::set<std::string> ok(known.begin(), known.end());
    for (const auto& [k, v] : obj.items()) {
      if (!ok.count(k)) problem(path_key(prefix, k) + ": unknown key");
    }
  }

  bool object(const json& obj, const char* key, const std::string& prefix) {
    if (!obj.contains(key) || obj.at(key).is_null()) return false;
    if (!obj.at(key).is_object()) {
      problem(path_key(prefix, key) + ": expected an object");
      return false;
    }
    return true;
  }

  template <typename Int>
  void integer(const json& obj, const char* key, const std::string& prefix, Int& out, long long lo,
               long long hi) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < lo || v.get<long long>() > hi) {
      problem(path_key(prefix, key) + ": expected an integer in [" + std::to_string(lo) + ", " +
              std::to_string(hi) + "]");
      return;
    }
    out = static_cast<Int>(v.get<long long>());
  }

  void seed(const json& obj, const char* key, const std::string& prefix, std::uint64_t& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    const json& v = obj.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<long long>() >= 0) {
      out = static_cast<std::uint64_t>(v.get<long long>());
    } else {
      problem(path_key(prefix, key) + ": expected a non-negative integer");
    }
  }

  void number(const json& obj, const char* key, const std::string& prefix, double& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    if (!obj.at(key).is_number()) {
      problem(path_key(prefix, key) + ": expected a number");
      return;
    }
    out = obj.at(key).get<double>();
  }

  void boolean(const json& obj, const char* key, const std::string& prefix, bool& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    if (!obj.at(key).is_boolean()) {
      problem(path_key(prefix, key) + ": expected true or false");
      return;
    }
    out = obj.at(key).get<bool>();
  }

  std::optional<std::string> string(const json& obj, const char* key, const std::string& prefix) {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    if (!obj.at(key).is_string()) {
      problem(path_key(prefix, key) + ": expected a string");
      return std::nullopt;
    }
    return obj.at(key).get<std::string>();
  }

  void color(const json& obj, const char* key, const std::string& prefix, Rgb& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    const json& v = obj.at(key);
    bool ok = v.is_array() && v.size() == 3;
    for (std::size_t i = 0; ok && i < 3; ++i) {
      ok = v[i].is_number_integer() && v[i].get<int>() >= 0 && v[i].get<int>() <= 255;
    }
    if (!ok) {
      problem(path_key(prefix, key) + ": expected [r, g, b] with 0..255 components");
      return;
    }
    out = {v[0].get<std::uint8_t>(), v[1].get<std::uint8_t>(), v[2].get<std::uint8_t>()};
  }

  std::optional<LulcClass> cls(const std::string& name, const std::string& where) {
    const auto c = parse_class(name);
    if (!c) problem(where + ": unknown class '" + name + "' (forest, farmland, builtup, water)");
    return c;
  }

  template <typename Fn>
  void check(const std::string& where, Fn fn) {
    try {
      fn();
    } catch (const Error& e) {
      problem(where + ": " + e.what());
    }
  }

  void finish() const {
    if (problems_.empty()) return;
    std::string msg = std::to_string(problems_.size()) + " configuration problem" +
                      (problems_.size() == 1 ? "" : "s") + ": ";
    for (std::size_t i = 0; i < problems_.size(); ++i) msg += (i ? "; " : "") + problems_[i];
    throw Error(ErrorKind::ConfigError, msg);
  }

 private:
  std::vector<std::string> problems_;
};

void read_train_fields(ConfigReader& r, const json& obj, const std::string& prefix, TrainConfig& t) {
  r.integer(obj, "epochs", prefix, t.epochs, 1, 1'000'000);
  r.number(obj, "learning_rate", prefix, t.learning_rate);
  r.integer(obj, "batch_size", prefix, t.batch_size, 1, 4096);
  r.number(obj, "width_multiplier", prefix, t.width_multiplier);
  if (obj.contains("augment") && !obj.at("augment").is_null()) {
    bool a = false;
    r.boolean(obj, "augment", prefix, a);
    if (obj.at("augment").is_boolean()) t.augment = a;
  }
}

}  // namespace

TrainConfig PipelineConfig::train_config(LulcClass cls, TrainMode m) const {
  TrainConfig t = train;
  if (const auto it = class_overrides.find(cls); it != class_overrides.end()) {
    ConfigReader r;
    read_train_fields(r, it->second, "", t);
  }
  t.mode = m;
  t.target_class = cls;
  t.seed = seed;
  t.threads = threads;
  t.augmentation = augmentation;
  return t;
}

PipelineConfig parse_config(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "configuration must be a JSON object");
  ConfigReader r;
  PipelineConfig cfg;
  cfg.resolved = j;
  r.unknown_keys(j, "", {"dataset", "output", "threads", "seed", "palette", "color_tolerance",
                         "split", "augmentation", "train", "class", "mode", "reference",
                         "improvement", "init_weights"});

  if (auto d = r.string(j, "dataset", "")) cfg.dataset = *d;
  if (auto o = r.string(j, "output", "")) {
    if (o->empty()) r.problem("output: must not be empty");
    else cfg.output = *o;
  }
  r.integer(j, "threads", "", cfg.threads, 1, 4096);
  r.seed(j, "seed", "", cfg.seed);
  r.integer(j, "color_tolerance", "", cfg.color_tolerance, 0, 255);

  if (r.object(j, "palette", "")) {
    const json& p = j.at("palette");
    r.unknown_keys(p, "palette", {"forest", "farmland", "builtup", "water", "ignore"});
    for (LulcClass c : kAllClasses) {
      r.color(p, std::string(to_string(c)).c_str(), "palette",
              cfg.palette.colors[static_cast<std::size_t>(c)]);
    }
    r.color(p, "ignore", "palette", cfg.palette.ignore);
    r.check("palette", [&] { cfg.palette.validate(); });
  }

  if (r.object(j, "split", "")) {
    const json& s = j.at("split");
    r.unknown_keys(s, "split", {"presence_threshold", "test_counts"});
    r.number(s, "presence_threshold", "split", cfg.split.presence_threshold);
    if (r.object(s, "test_counts", "split")) {
      for (const auto& [name, v] : s.at("test_counts").items()) {
        const auto c = r.cls(name, "split.test_counts");
        if (!v.is_number_integer() || v.get<long long>() < 1) {
          r.problem("split.test_counts." + name + ": expected a positive integer");
        } else if (c) {
          cfg.split.test_counts[*c] = v.get<std::size_t>();
        }
      }
    }
    r.check("split", [&] { cfg.split.validate(); });
  }

  if (r.object(j, "augmentation", "")) {
    const json& a = j.at("augmentation");
    r.unknown_keys(a, "augmentation", {"kinds", "gamma", "hue_degrees", "stretch_low", "stretch_high"});
    if (a.contains("kinds")) {
      if (!a.at("kinds").is_array()) {
        r.problem("augmentation.kinds: expected an array of names");
      } else {
        cfg.augmentation.kinds.clear();
        for (const auto& k : a.at("kinds")) {
          const auto kind = k.is_string() ? parse_augment_kind(k.get<std::string>()) : std::nullopt;
          if (!kind) r.problem("augmentation.kinds: unknown kind " + k.dump());
          else cfg.augmentation.kinds.push_back(*kind);
        }
      }
    }
    r.number(a, "gamma", "augmentation", cfg.augmentation.gamma);
    r.number(a, "hue_degrees", "augmentation", cfg.augmentation.hue_degrees);
    r.number(a, "stretch_low", "augmentation", cfg.augmentation.stretch_low);
    r.number(a, "stretch_high", "augmentation", cfg.augmentation.stretch_high);
    r.check("augmentation", [&] { cfg.augmentation.validate(); });
  }

  if (auto c = r.string(j, "class", "")) cfg.target_class = r.cls(*c, "class");
  if (auto m = r.string(j, "mode", "")) {
    cfg.mode = parse_mode(*m);
    if (!cfg.mode) r.problem("mode: expected 'downsample' or 'grid'");
  }

  if (r.object(j, "train", "")) {
    const json& t = j.at("train");
    r.unknown_keys(t, "train", {"epochs", "learning_rate", "batch_size", "width_multiplier",
                                "augment", "classes"});
    read_train_fields(r, t, "train", cfg.train);
    if (r.object(t, "classes", "train")) {
      for (const auto& [name, v] : t.at("classes").items()) {
        const auto c = r.cls(name, "train.classes");
        const std::string prefix = "train.classes." + name;
        if (!v.is_object()) {
          r.problem(prefix + ": expected an object");
          continue;
        }
        r.unknown_keys(v, prefix, {"epochs", "learning_rate", "batch_size", "width_multiplier", "augment"});
        TrainConfig probe = cfg.train;
        read_train_fields(r, v, prefix, probe);
        if (c) cfg.class_overrides[*c] = v;
      }
    }
  }
  // Validate the effective settings for every class in each relevant mode.
  for (LulcClass c : kAllClasses) {
    if (cfg.target_class && *cfg.target_class != c) continue;
    for (TrainMode m : {TrainMode::Downsample, TrainMode::Grid}) {
      if (cfg.mode && *cfg.mode != m) continue;
      TrainConfig t = cfg.train_config(c, m);
      // An explicit augment=true only conflicts with grid mode when grid mode is requested.
      if (!cfg.mode && m == TrainMode::Grid && t.augment.value_or(false)) continue;
      r.check("train (" + std::string(to_string(c)) + ", " + std::string(to_string(m)) + ")",
              [&] { t.validate(); });
    }
  }

  if (auto ref = r.string(j, "reference", "")) {
    if (!reference_by_name(*ref)) {
      r.problem("reference: unknown set '" + *ref + "' (ecognition, fcn8-downsampled, fcn8-grid)");
    }
    cfg.reference = *ref;
  }
  r.boolean(j, "improvement", "", cfg.improvement);
  if (auto w = r.string(j, "init_weights", "")) cfg.init_weights = *w;
  r.finish();
  return cfg;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::IoFailure, path.string() + ": write failed");
}

json library_versions() {
  std::string tiff = TIFFGetVersion();
  if (const auto nl = tiff.find('\n'); nl != std::string::npos) tiff.resize(nl);
  return {{"libpng", PNG_LIBPNG_VER_STRING},
          {"libtiff", tiff},
          {"openssl", OpenSSL_version(OPENSSL_VERSION)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)}};
}

std::vector<DatasetEntry> load_manifest(const fs::path& path) {
  const json j = read_json_file(path);
  const json* list = &j;
  if (j.is_object() && j.contains("images")) list = &j.at("images");
  if (!list->is_array()) {
    throw Error(ErrorKind::ConfigError,
                path.string() + ": expected an array of {\"image\", \"labels\"} pairs");
  }
  const fs::path base = path.parent_path();
  std::vector<DatasetEntry> out;
  std::set<std::string> stems;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& e = (*list)[i];
    if (!e.is_object() || !e.contains("image") || !e.contains("labels") ||
        !e.at("image").is_string() || !e.at("labels").is_string()) {
      problems.push_back("entry " + std::to_string(i) + " needs string fields image and labels");
      continue;
    }
    DatasetEntry d;
    d.image = base / e.at("image").get<std::string>();
    d.labels = base / e.at("labels").get<std::string>();
    d.stem = d.image.stem().string();
    if (!stems.insert(d.stem).second) problems.push_back("duplicate image stem '" + d.stem + "'");
    out.push_back(std::move(d));
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw Error(ErrorKind::ConfigError, msg);
  }
  return out;
}

ClassMap load_class_map(const DatasetEntry& entry, const PipelineConfig& cfg) {
  try {
    return decode_labels(load_rgb(entry.labels), cfg.palette, cfg.color_tolerance);
  } catch (const UnmappedColorError& e) {
    throw Error(ErrorKind::UnmappedColor, entry.labels.string() + ": " + e.what());
  }
}

BinaryMask load_binary_mask(const DatasetEntry& entry, LulcClass cls, const PipelineConfig& cfg) {
  return make_binary_mask(load_class_map(entry, cfg), cls);
}

LabelStats scan_labels(const std::vector<DatasetEntry>& entries, const PipelineConfig& cfg,
                       int threads) {
  LabelStats stats;
  stats.counts.resize(entries.size());
  stats.dims.resize(entries.size());
  parallel_chunks(entries.size(), threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const ClassMap map = load_class_map(entries[i], cfg);
      stats.counts[i] = class_counts(map);
      stats.dims[i] = map.dims();
    }
  });
  return stats;
}

SplitResult make_split(const LabelStats& stats, LulcClass cls, const PipelineConfig& cfg) {
  SplitConfig sc = cfg.split;
  sc.rng_seed = cfg.seed;
  SplitResult r;
  r.cls = cls;
  r.selected = select_images(std::span<const ClassCounts>(stats.counts), cls, sc);
  r.split = split_train_test(r.selected, cls, sc);
  return r;
}

json to_json(const SplitResult& s, const std::vector<DatasetEntry>& entries) {
  auto stems = [&](const std::vector<std::size_t>& idx) {
    json a = json::array();
    for (std::size_t i : idx) a.push_back(entries[i].stem);
    return a;
  };
  return {{"class", to_string(s.cls)},
          {"selected", stems(s.selected)},
          {"train", stems(s.split.train)},
          {"test", stems(s.split.test)}};
}

std::string split_summary(const SplitResult& s) {
  return "selected " + std::to_string(s.selected.size()) + ", train " +
         std::to_string(s.split.train.size()) + ", test " + std::to_string(s.split.test.size());
}

std::string mask_name(const std::string& stem, LulcClass cls) {
  return stem + "." + std::string(to_string(cls)) + ".mask.png";
}

std::string tile_name(const std::string& stem, TileIndex idx) {
  return stem + ".r" + std::to_string(idx.row) + "c" + std::to_string(idx.col) + ".png";
}

std::string checkpoint_name(LulcClass cls, TrainMode mode) {
  return std::string(to_string(cls)) + "." + std::string(to_string(mode)) + ".ckpt";
}

TrainOutcome train_split(const std::vector<DatasetEntry>& entries, const LabelStats& stats,
                         const SplitResult& split, TrainMode mode, const PipelineConfig& cfg,
                         std::ostream* log) {
  const TrainConfig tc = cfg.train_config(split.cls, mode);
  std::vector<TrainingImage> images;
  for (std::size_t i : split.split.train) {
    const DatasetEntry entry = entries[i];
    const LulcClass cls = split.cls;
    images.push_back({stats.dims[i], [entry, cls, &cfg] {
                        return Sample{load_rgb(entry.image), load_binary_mask(entry, cls, cfg)};
                      }});
  }
  const TrainingSet set = build_training_set(std::move(images), tc);

  TrainOutcome out{Fcn8Model::init(tc.seed, tc.width_multiplier), {}};
  if (cfg.init_weights) {
    const std::size_t n = load_matching_weights(out.model, load_checkpoint(*cfg.init_weights));
    if (log) *log << "loaded " << n << " tensors from " << cfg.init_weights->string() << "\n";
  }
  out.log = train(out.model, set, tc, [&](int epoch, double loss) {
    if (log) *log << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << loss << std::endl;
  });
  return out;
}

BinaryMask predict_mask(const Fcn8Model& model, TrainMode mode, const RgbRaster& raster,
                        int threads) {
  return mode == TrainMode::Grid ? predict_grid(model, raster, threads)
                                 : predict_downsampled(model, raster);
}

ClassResult summarise(const std::vector<ConfusionMatrix>& per_image) {
  ClassResult r;
  for (const auto& cm : per_image) r.pooled += cm;
  r.row = class_row(per_image);
  r.images = per_image.size();
  return r;
}

ClassEvaluation evaluate_split(const Fcn8Model& model, const std::vector<DatasetEntry>& entries,
                               const SplitResult& split, TrainMode mode,
                               const PipelineConfig& cfg) {
  ClassEvaluation ev;
  ev.cls = split.cls;
  ev.mode = mode;
  std::vector<ConfusionMatrix> per_image;
  for (std::size_t i : split.split.test) {
    const DatasetEntry& e = entries[i];
    ImageEvaluation ie;
    ie.stem = e.stem;
    const RgbRaster image = load_rgb(e.image);
    ie.truth = load_binary_mask(e, split.cls, cfg);
    if (image.dims() != ie.truth.dims()) {
      throw Error(ErrorKind::DimMismatch, e.stem + ": image and label dims differ");
    }
    ie.prediction = predict_mask(model, mode, image, cfg.threads);
    ie.confusion = confusion(ie.prediction, ie.truth);
    per_image.push_back(ie.confusion);
    ev.images.push_back(std::move(ie));
  }
  ev.result = summarise(per_image);
  return ev;
}

json metrics_json(const ClassEvaluation& ev) {
  json images = json::array();
  for (const auto& ie : ev.images) {
    json entry = {{"stem", ie.stem}, {"confusion", to_json(ie.confusion)}};
    if (ie.confusion.total() > 0) entry["metrics"] = to_json(metrics_from_confusion(ie.confusion));
    images.push_back(entry);
  }
  return {{"class", to_string(ev.cls)},
          {"mode", to_string(ev.mode)},
          {"row", to_json(ev.result.row)},
          {"pooled_confusion", to_json(ev.result.pooled)},
          {"images", images}};
}

std::pair<LulcClass, ClassResult> class_result_from_json(const json& j) {
  try {
    const auto cls = parse_class(j.at("class").get<std::string>());
    if (!cls) throw Error(ErrorKind::ConfigError, "metrics document names an unknown class");
    ClassResult r;
    r.row = metrics_row_from_json(j.at("row"));
    r.pooled = confusion_from_json(j.at("pooled_confusion"));
    r.images = j.at("images").size();
    return {*cls, r};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("malformed metrics document: ") + e.what());
  }
}

ReportOptions report_options(const PipelineConfig& cfg) {
  ReportOptions o;
  if (cfg.reference) o.reference = reference_by_name(*cfg.reference);
  o.improvement = cfg.improvement;
  return o;
}

}  // namespace lulc
