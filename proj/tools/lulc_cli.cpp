// lulc_cli: per-class binary land-cover segmentation, one subcommand per
// pipeline stage plus `pipeline` for the whole chain.

#include <CLI11.hpp>

#include <charconv>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "lulc/parallel.hpp"
#include "lulc/pipeline.hpp"

namespace {

using namespace lulc;
using nlohmann::json;

struct Flags {
  std::string config, out, dataset, cls, mode, reference, init_weights, checkpoint;
  std::string pred, gt, mask, labels, tiles;
  std::vector<std::string> images, stems, metrics;
  int threads = 0;
  std::uint64_t seed = 0;
  int epochs = 0;
  double lr = 0.0;
  int batch = 0;
  double width = 0.0;
  bool augment = false;
  bool improvement = false;
  bool dry_run = false;
  // Which options were actually given.
  std::set<std::string> seen;
};

struct Run {
  std::string command;
  PipelineConfig cfg;
  const Flags& flags;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--dataset", f.dataset, "Dataset manifest (JSON)");
  sub->add_option("--threads", f.threads, "Worker threads");
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--class", f.cls, "forest | farmland | builtup | water");
  sub->add_option("--mode", f.mode, "downsample | grid");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--lr", f.lr, "SGD learning rate");
  sub->add_option("--batch-size", f.batch, "Mini-batch size");
  sub->add_option("--width", f.width, "Width multiplier (1, 0.5, 0.25, 0.125, 0.0625)");
  sub->add_option("--augment", f.augment, "Override augmentation (true/false)");
  sub->add_option("--init-weights", f.init_weights, "Checkpoint to warm-start from");
  sub->add_option("--reference", f.reference, "ecognition | fcn8-downsampled | fcn8-grid");
  sub->add_flag("--improvement", f.improvement, "Report accuracy gain over the reference");
  sub->add_flag("--dry-run", f.dry_run, "Validate config and dataset, then stop");
}

json merged_config(const Flags& f) {
  json j = json::object();
  if (!f.config.empty()) {
    j = read_json_file(f.config);
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, f.config + ": expected a JSON object");
  }
  if (const char* env = std::getenv("LULC_SEED")) {
    std::uint64_t v = 0;
    const std::string s = env;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) {
      throw Error(ErrorKind::ConfigError, "LULC_SEED must be a non-negative integer, got '" + s + "'");
    }
    j["seed"] = v;
  }
  auto given = [&](const char* name) { return f.seen.count(name) > 0; };
  if (given("--seed")) j["seed"] = f.seed;
  if (given("--out")) j["output"] = f.out;
  if (given("--dataset")) j["dataset"] = f.dataset;
  if (given("--threads")) j["threads"] = f.threads;
  if (given("--class")) j["class"] = f.cls;
  if (given("--mode")) j["mode"] = f.mode;
  if (given("--reference")) j["reference"] = f.reference;
  if (given("--improvement")) j["improvement"] = f.improvement;
  if (given("--init-weights")) j["init_weights"] = f.init_weights;
  auto train = [&]() -> json& {
    if (!j.contains("train") || !j["train"].is_object()) j["train"] = json::object();
    return j["train"];
  };
  if (given("--epochs")) train()["epochs"] = f.epochs;
  if (given("--lr")) train()["learning_rate"] = f.lr;
  if (given("--batch-size")) train()["batch_size"] = f.batch;
  if (given("--width")) train()["width_multiplier"] = f.width;
  if (given("--augment")) train()["augment"] = f.augment;
  if (!j.contains("threads")) j["threads"] = default_threads();
  return j;
}

fs::path out_path(const Run& r, const fs::path& rel) {
  const fs::path p = r.cfg.output / rel;
  fs::create_directories(p.parent_path());
  return p;
}

LulcClass need_class(const Run& r) {
  if (!r.cfg.target_class) throw Error(ErrorKind::ConfigError, r.command + " needs --class");
  return *r.cfg.target_class;
}

TrainMode need_mode(const Run& r) {
  if (!r.cfg.mode) throw Error(ErrorKind::ConfigError, r.command + " needs --mode");
  return *r.cfg.mode;
}

std::vector<DatasetEntry> need_dataset(const Run& r) {
  if (!r.cfg.dataset) throw Error(ErrorKind::ConfigError, r.command + " needs a dataset manifest");
  auto entries = load_manifest(*r.cfg.dataset);
  std::string missing;
  std::size_t n = 0;
  for (const auto& e : entries) {
    for (const fs::path& p : {e.image, e.labels}) {
      if (fs::exists(p)) continue;
      if (n++ < 5) missing += (missing.empty() ? "" : ", ") + p.string();
    }
  }
  if (n) {
    throw Error(ErrorKind::MissingFile,
                std::to_string(n) + " dataset file(s) missing: " + missing + (n > 5 ? ", ..." : ""));
  }
  if (entries.empty()) throw Error(ErrorKind::EmptySelection, "dataset manifest lists no images");
  return entries;
}

void need_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorKind::ConfigError, std::string("missing ") + what);
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path + ": not found");
}

void write_run_record(const Run& r) {
  json rec = {{"command", r.command},
              {"config", r.cfg.resolved},
              {"seed", r.cfg.seed},
              {"threads", r.cfg.threads},
              {"dry_run", r.flags.dry_run},
              {"versions", library_versions()}};
  write_json_file(out_path(r, "run_record.json"), rec);
}

void write_mask(const Run& r, const fs::path& rel, const BinaryMask& m) {
  save_rgb(render_mask(m), out_path(r, rel));
}

struct Prepared {
  std::vector<DatasetEntry> entries;
  LabelStats stats;
  SplitResult split;
};

Prepared prepare_split(const Run& r, LulcClass cls) {
  Prepared p;
  p.entries = need_dataset(r);
  p.stats = scan_labels(p.entries, r.cfg, r.cfg.threads);
  p.split = make_split(p.stats, cls, r.cfg);
  json doc = to_json(p.split, p.entries);
  doc["presence_threshold"] = r.cfg.split.presence_threshold;
  write_json_file(out_path(r, "split." + std::string(to_string(cls)) + ".json"), doc);
  std::cout << split_summary(p.split) << std::endl;
  return p;
}

int cmd_masks(const Run& r) {
  const auto entries = need_dataset(r);
  if (r.flags.dry_run) return 0;
  std::vector<LulcClass> classes(kAllClasses.begin(), kAllClasses.end());
  if (r.cfg.target_class) classes = {*r.cfg.target_class};
  for (const auto& e : entries) {
    const ClassMap map = load_class_map(e, r.cfg);
    for (LulcClass c : classes) write_mask(r, fs::path("masks") / mask_name(e.stem, c), make_binary_mask(map, c));
  }
  std::cout << "wrote " << entries.size() * classes.size() << " masks" << std::endl;
  return 0;
}

int cmd_split(const Run& r) {
  const LulcClass cls = need_class(r);
  if (r.flags.dry_run) {
    need_dataset(r);
    return 0;
  }
  prepare_split(r, cls);
  return 0;
}

// A binary mask for augment/tile: --mask (rendered mask PNG) or --labels
// (colour label image, needs --class).
std::optional<BinaryMask> optional_mask(const Run& r) {
  if (!r.flags.mask.empty()) {
    need_file(r.flags.mask, "--mask");
    return decode_mask(load_rgb(r.flags.mask));
  }
  if (!r.flags.labels.empty()) {
    need_file(r.flags.labels, "--labels");
    const LulcClass cls = need_class(r);
    DatasetEntry e{"", "", r.flags.labels};
    return load_binary_mask(e, cls, r.cfg);
  }
  return std::nullopt;
}

int cmd_augment(const Run& r) {
  if (r.flags.images.size() != 1) throw Error(ErrorKind::ConfigError, "augment needs one --image");
  const std::string& image = r.flags.images.front();
  need_file(image, "--image");
  auto mask = optional_mask(r);
  if (r.flags.dry_run) return 0;
  const RgbRaster raster = load_rgb(image);
  if (!mask) mask = BinaryMask(raster.width(), raster.height(), MaskValue::Other);
  const auto variants = augment_set(raster, *mask, r.cfg.augmentation);
  const std::string stem = fs::path(image).stem().string();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string kind = i == 0 ? "original" : std::string(to_string(r.cfg.augmentation.kinds[i - 1]));
    const std::string base = stem + "." + std::to_string(i) + "-" + kind;
    save_rgb(variants[i].first, out_path(r, fs::path("augment") / (base + ".png")));
    write_mask(r, fs::path("augment") / (base + ".mask.png"), variants[i].second);
  }
  std::cout << "wrote " << variants.size() << " variants" << std::endl;
  return 0;
}

json grid_json(const TileGrid& g) {
  return {{"width", g.source.width}, {"height", g.source.height}, {"tile", g.tile},
          {"rows", g.rows},          {"cols", g.cols},            {"pad_right", g.pad_right},
          {"pad_bottom", g.pad_bottom}};
}

int cmd_tile(const Run& r) {
  std::vector<std::pair<std::string, fs::path>> sources;
  for (const auto& i : r.flags.images) {
    need_file(i, "--image");
    sources.emplace_back(fs::path(i).stem().string(), i);
  }
  if (sources.empty()) {
    for (const auto& e : need_dataset(r)) sources.emplace_back(e.stem, e.image);
  }
  const auto mask = optional_mask(r);
  if (mask && sources.size() != 1) throw Error(ErrorKind::ConfigError, "--mask/--labels need exactly one --image");
  if (r.flags.dry_run) return 0;
  std::size_t written = 0;
  for (const auto& [stem, path] : sources) {
    const RgbRaster raster = load_rgb(path);
    if (mask && mask->dims() != raster.dims()) throw Error(ErrorKind::DimMismatch, "mask and image dims differ");
    const TileGrid g = plan_grid(raster.dims());
    write_json_file(out_path(r, fs::path("tiles") / (stem + ".grid.json")), grid_json(g));
    for (TileIndex idx : grid_indices(g)) {
      save_rgb(extract_tile(raster, g, idx), out_path(r, fs::path("tiles") / tile_name(stem, idx)));
      if (mask) {
        const std::string name = tile_name(stem + ".mask", idx);
        write_mask(r, fs::path("tiles") / name, extract_tile(*mask, g, idx));
      }
      ++written;
    }
  }
  std::cout << "wrote " << written << " tiles" << std::endl;
  return 0;
}

int cmd_stitch(const Run& r) {
  const fs::path dir = r.flags.tiles.empty() ? r.cfg.output / "tiles" : fs::path(r.flags.tiles);
  if (r.flags.stems.empty()) throw Error(ErrorKind::ConfigError, "stitch needs --stem");
  for (const auto& stem : r.flags.stems) need_file((dir / (stem + ".grid.json")).string(), "grid file");
  if (r.flags.dry_run) return 0;
  for (const auto& stem : r.flags.stems) {
    const json gj = read_json_file(dir / (stem + ".grid.json"));
    TileGrid g;
    try {
      g = plan_grid({gj.at("width").get<int>(), gj.at("height").get<int>()}, gj.at("tile").get<int>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ConfigError, stem + ".grid.json: " + e.what());
    }
    std::map<TileIndex, RgbRaster> tiles;
    for (TileIndex idx : grid_indices(g)) {
      const fs::path p = dir / tile_name(stem, idx);
      if (!fs::exists(p)) throw Error(ErrorKind::MissingTile, p.string() + ": tile missing");
      tiles.emplace(idx, load_rgb(p));
    }
    save_rgb(stitch(tiles, g), out_path(r, fs::path("stitched") / (stem + ".png")));
  }
  std::cout << "stitched " << r.flags.stems.size() << " image(s)" << std::endl;
  return 0;
}

CheckpointManifest manifest_for(const Run& r, LulcClass cls, TrainMode mode, const TrainResult& log) {
  const TrainConfig tc = r.cfg.train_config(cls, mode);
  CheckpointManifest m;
  m.target_class = cls;
  m.mode = mode;
  m.epoch = static_cast<int>(log.epoch_loss.size());
  m.seed = tc.seed;
  m.epochs = tc.epochs;
  m.learning_rate = tc.learning_rate;
  m.batch_size = tc.batch_size;
  m.metrics = {{"final_loss", log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back()}};
  return m;
}

Fcn8Model train_and_save(const Run& r, const Prepared& p, TrainMode mode) {
  TrainOutcome t = train_split(p.entries, p.stats, p.split, mode, r.cfg, &std::cout);
  const std::string base = std::string(to_string(p.split.cls)) + "." + std::string(to_string(mode));
  save_checkpoint(make_checkpoint(t.model, manifest_for(r, p.split.cls, mode, t.log)),
                  out_path(r, checkpoint_name(p.split.cls, mode)));
  write_json_file(out_path(r, "train_log." + base + ".json"), {{"epoch_loss", t.log.epoch_loss}});
  return std::move(t.model);
}

int cmd_train(const Run& r) {
  const LulcClass cls = need_class(r);
  const TrainMode mode = need_mode(r);
  if (r.cfg.init_weights) need_file(r.cfg.init_weights->string(), "--init-weights");
  if (r.flags.dry_run) {
    need_dataset(r);
    return 0;
  }
  train_and_save(r, prepare_split(r, cls), mode);
  return 0;
}

struct LoadedModel {
  Fcn8Model model;
  LulcClass cls;
  TrainMode mode;
};

LoadedModel load_model(const Run& r) {
  need_file(r.flags.checkpoint, "--checkpoint");
  const Checkpoint cp = load_checkpoint(r.flags.checkpoint);
  if (r.cfg.target_class) {
    if (auto w = class_mismatch_warning(cp, *r.cfg.target_class)) std::cerr << "warning: " << *w << "\n";
  }
  return {model_from_checkpoint(cp), cp.manifest.target_class, cp.manifest.mode};
}

std::string pred_name(const std::string& stem, LulcClass cls) {
  return stem + "." + std::string(to_string(cls)) + ".pred.png";
}

std::string errormap_name(const std::string& stem, LulcClass cls) {
  return stem + "." + std::string(to_string(cls)) + ".error.png";
}

int cmd_predict(const Run& r) {
  for (const auto& i : r.flags.images) need_file(i, "--image");
  if (r.flags.images.empty()) need_dataset(r);
  need_file(r.flags.checkpoint, "--checkpoint");
  if (r.flags.dry_run) return 0;
  const LoadedModel m = load_model(r);
  std::vector<std::pair<std::string, fs::path>> targets;
  for (const auto& i : r.flags.images) targets.emplace_back(fs::path(i).stem().string(), i);
  if (targets.empty()) {
    const Prepared p = prepare_split(r, m.cls);
    for (std::size_t i : p.split.split.test) targets.emplace_back(p.entries[i].stem, p.entries[i].image);
  }
  for (const auto& [stem, path] : targets) {
    const BinaryMask pred = predict_mask(m.model, m.mode, load_rgb(path), r.cfg.threads);
    write_mask(r, fs::path("predictions") / pred_name(stem, m.cls), pred);
  }
  std::cout << "predicted " << targets.size() << " image(s)" << std::endl;
  return 0;
}

std::string metrics_name(LulcClass cls, TrainMode mode) {
  return "metrics." + std::string(to_string(cls)) + "." + std::string(to_string(mode)) + ".json";
}

void print_row(const std::string& label, const MetricsRow& row) {
  std::cout << label << ": " << to_json(row).dump() << std::endl;
}

ClassEvaluation evaluate_and_write(const Run& r, const Fcn8Model& model, const Prepared& p, TrainMode mode) {
  ClassEvaluation ev = evaluate_split(model, p.entries, p.split, mode, r.cfg);
  for (const auto& ie : ev.images) {
    write_mask(r, fs::path("predictions") / pred_name(ie.stem, ev.cls), ie.prediction);
    save_rgb(error_map(ie.prediction, ie.truth), out_path(r, fs::path("errormaps") / errormap_name(ie.stem, ev.cls)));
  }
  write_json_file(out_path(r, metrics_name(ev.cls, mode)), metrics_json(ev));
  print_row(std::string(to_string(ev.cls)) + " " + std::string(to_string(mode)), ev.result.row);
  return ev;
}

std::pair<BinaryMask, BinaryMask> pred_gt_pair(const Run& r) {
  need_file(r.flags.pred, "--pred");
  need_file(r.flags.gt, "--gt");
  BinaryMask pred = decode_mask(load_rgb(r.flags.pred));
  BinaryMask gt = decode_mask(load_rgb(r.flags.gt));
  if (pred.dims() != gt.dims()) throw Error(ErrorKind::DimMismatch, "--pred and --gt dims differ");
  return {std::move(pred), std::move(gt)};
}

int cmd_evaluate(const Run& r) {
  if (!r.flags.pred.empty() || !r.flags.gt.empty()) {
    need_file(r.flags.pred, "--pred");
    need_file(r.flags.gt, "--gt");
    if (r.flags.dry_run) return 0;
    const auto [pred, gt] = pred_gt_pair(r);
    const ConfusionMatrix cm = confusion(pred, gt);
    const MetricsRow row = metrics_from_confusion(cm);
    const std::string stem = fs::path(r.flags.pred).stem().string();
    write_json_file(out_path(r, "metrics." + stem + ".json"),
                    {{"pred", r.flags.pred}, {"gt", r.flags.gt}, {"confusion", to_json(cm)}, {"row", to_json(row)}});
    print_row(stem, row);
    return 0;
  }
  need_file(r.flags.checkpoint, "--checkpoint");
  if (r.flags.dry_run) {
    need_dataset(r);
    return 0;
  }
  const LoadedModel m = load_model(r);
  evaluate_and_write(r, m.model, prepare_split(r, m.cls), m.mode);
  return 0;
}

int cmd_errormap(const Run& r) {
  if (r.flags.checkpoint.empty()) {
    need_file(r.flags.pred, "--pred");
    need_file(r.flags.gt, "--gt");
    if (r.flags.dry_run) return 0;
    const auto [pred, gt] = pred_gt_pair(r);
    const std::string stem = fs::path(r.flags.pred).stem().string();
    save_rgb(error_map(pred, gt), out_path(r, fs::path("errormaps") / (stem + ".error.png")));
    return 0;
  }
  need_file(r.flags.checkpoint, "--checkpoint");
  if (r.flags.dry_run) {
    need_dataset(r);
    return 0;
  }
  const LoadedModel m = load_model(r);
  const Prepared p = prepare_split(r, m.cls);
  const ClassEvaluation ev = evaluate_split(m.model, p.entries, p.split, m.mode, r.cfg);
  for (const auto& ie : ev.images) {
    save_rgb(error_map(ie.prediction, ie.truth), out_path(r, fs::path("errormaps") / errormap_name(ie.stem, ev.cls)));
  }
  std::cout << "wrote " << ev.images.size() << " error map(s)" << std::endl;
  return 0;
}

void write_report(const Run& r, const std::map<LulcClass, ClassResult>& per_class, const std::string& base) {
  const Report report = build_report(per_class, report_options(r.cfg));
  const std::string text = render_text(report);
  std::ofstream(out_path(r, base + ".txt"), std::ios::trunc) << text;
  write_json_file(out_path(r, base + ".json"), to_json(report));
  std::cout << text;
}

int cmd_report(const Run& r) {
  std::vector<fs::path> files;
  for (const auto& m : r.flags.metrics) {
    need_file(m, "--metrics");
    files.emplace_back(m);
  }
  if (files.empty()) {
    const TrainMode mode = need_mode(r);
    const std::string suffix = "." + std::string(to_string(mode)) + ".json";
    if (fs::is_directory(r.cfg.output)) {
      for (const auto& d : fs::directory_iterator(r.cfg.output)) {
        const std::string name = d.path().filename().string();
        if (name.starts_with("metrics.") && name.ends_with(suffix)) files.push_back(d.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw Error(ErrorKind::MissingFile, "no metrics.*" + suffix + " files in " + r.cfg.output.string());
    }
  }
  if (r.flags.dry_run) return 0;
  std::map<LulcClass, ClassResult> per_class;
  for (const auto& f : files) {
    const auto [cls, result] = class_result_from_json(read_json_file(f));
    if (!per_class.emplace(cls, result).second) {
      throw Error(ErrorKind::ConfigError, "two metrics files for class " + std::string(to_string(cls)));
    }
  }
  write_report(r, per_class, r.cfg.mode ? "report." + std::string(to_string(*r.cfg.mode)) : "report");
  return 0;
}

int cmd_pipeline(const Run& r) {
  const LulcClass cls = need_class(r);
  const TrainMode mode = need_mode(r);
  if (r.cfg.init_weights) need_file(r.cfg.init_weights->string(), "--init-weights");
  if (r.flags.dry_run) {
    need_dataset(r);
    return 0;
  }
  const Prepared p = prepare_split(r, cls);
  for (std::size_t i : p.split.selected) {
    write_mask(r, fs::path("masks") / mask_name(p.entries[i].stem, cls), load_binary_mask(p.entries[i], cls, r.cfg));
  }
  const Fcn8Model model = train_and_save(r, p, mode);
  const ClassEvaluation ev = evaluate_and_write(r, model, p, mode);
  write_report(r, {{cls, ev.result}}, "report." + std::string(to_string(cls)) + "." + std::string(to_string(mode)));
  return 0;
}

void print_error(std::string_view kind, const std::string& message) {
  std::string one_line = message;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: kind=" << kind << " message=" << one_line << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-class land-cover segmentation with FCN-8", "lulc_cli"};
  app.require_subcommand(1);
  Flags flags;
  using Handler = int (*)(const Run&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"masks", "Write binary target masks from colour label images", cmd_masks},
      {"split", "Select images by class presence and split train/test", cmd_split},
      {"augment", "Write the augmentation variants of one image", cmd_augment},
      {"tile", "Cut images into 224x224 tiles", cmd_tile},
      {"train", "Train one class/mode model", cmd_train},
      {"predict", "Predict masks with a checkpoint", cmd_predict},
      {"stitch", "Reassemble tiles into full images", cmd_stitch},
      {"evaluate", "Score predictions against ground truth", cmd_evaluate},
      {"errormap", "Render TP/FN/FP/TN error maps", cmd_errormap},
      {"report", "Aggregate per-class metrics into a table", cmd_report},
      {"pipeline", "Split, train, predict, evaluate and report for one class", cmd_pipeline},
  };
  std::map<CLI::App*, Handler> handlers;
  for (const auto& [name, desc, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    add_common(sub, flags);
    const std::string n = name;
    if (n == "augment" || n == "tile" || n == "predict") {
      sub->add_option("--image", flags.images, "Input image(s)");
    }
    if (n == "augment" || n == "tile") {
      sub->add_option("--mask", flags.mask, "Binary mask PNG to transform alongside");
      sub->add_option("--labels", flags.labels, "Colour label image (with --class)");
    }
    if (n == "predict" || n == "evaluate" || n == "errormap") {
      sub->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
    }
    if (n == "evaluate" || n == "errormap") {
      sub->add_option("--pred", flags.pred, "Predicted mask PNG");
      sub->add_option("--gt", flags.gt, "Ground-truth mask PNG");
    }
    if (n == "stitch") {
      sub->add_option("--tiles", flags.tiles, "Tile directory (default <out>/tiles)");
      sub->add_option("--stem", flags.stems, "Image stem(s) to stitch");
    }
    if (n == "report") sub->add_option("--metrics", flags.metrics, "Metrics JSON files");
    handlers[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    print_error(to_string(ErrorKind::ConfigError), e.what());
    return exit_code(ErrorKind::ConfigError);
  }

  CLI::App* sub = app.get_subcommands().front();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->count() > 0) flags.seen.insert(opt->get_name());
  }

  try {
    Run run{sub->get_name(), parse_config(merged_config(flags)), flags};
    write_run_record(run);
    const int code = handlers.at(sub)(run);
    if (flags.dry_run && code == 0) std::cout << "dry run: configuration and inputs are valid" << std::endl;
    return code;
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 3;
  }
}
