#pragma once

// Helpers for driving the CLI binary: a toy dataset on disk and a runner
// that captures exit status, stdout and stderr.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "lulc/labels.hpp"
#include "lulc/raster.hpp"
#include "toy_data.hpp"

namespace lulc::testing {

namespace fs = std::filesystem;

// `n` toy scenes of size x size; even-numbered scenes also get a water pond
// covering roughly a seventh of the image. Returns the manifest path.
inline fs::path write_toy_dataset(const fs::path& dir, int n, int size, std::uint64_t seed = 500) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  nlohmann::json images = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    ToyScene s = toy_scene(size, size, seed + static_cast<std::uint64_t>(i));
    if (i % 2 == 0) {
      const int w = size * 3 / 8, x0 = size / 8, y0 = size / 2;
      for (int y = y0; y < y0 + w; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          s.labels.set(x, y, Label::Water);
          const Rgb c = toy_color(Label::Water);
          s.image.set(x, y, {static_cast<std::uint8_t>(c[0] + (x * 7 + y * 3) % 9),
                             static_cast<std::uint8_t>(c[1] + (x * 5 + y) % 9),
                             static_cast<std::uint8_t>(c[2] + (x + y * 11) % 9)});
        }
      }
    }
    const std::string stem = "scene" + std::to_string(i);
    save_rgb(s.image, dir / "images" / (stem + ".png"));
    save_rgb(render_labels(s.labels, Palette::standard()), dir / "labels" / (stem + "_label.png"));
    images.push_back({{"image", "images/" + stem + ".png"}, {"labels", "labels/" + stem + "_label.png"}});
  }
  const fs::path manifest = dir / "manifest.json";
  std::ofstream(manifest) << nlohmann::json{{"images", images}}.dump(2);
  return manifest;
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI through the shell; `env` is a prefix such as "LULC_SEED=3".
inline CliResult run_cli(const std::string& args, const fs::path& scratch, const std::string& env = "") {
  fs::create_directories(scratch);
  const fs::path out = scratch / "cli.stdout", err = scratch / "cli.stderr";
  const std::string cmd = (env.empty() ? "" : "env " + env + " ") + std::string(LULC_CLI_PATH) + " " + args +
                          " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace lulc::testing
