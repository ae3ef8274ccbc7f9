#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lulc/fcn8.hpp"
#include "lulc/labels.hpp"
#include "lulc/training.hpp"

namespace lulc {

// On disk: "FCN8CKPT", u16 version, u32 manifest length, UTF-8 JSON
// manifest, then the blobs in manifest order as little-endian f32. The
// manifest lists every blob's name, shape and byte length and carries a
// SHA-256 over the concatenated blob bytes.
inline constexpr char kCheckpointMagic[8] = {'F', 'C', 'N', '8', 'C', 'K', 'P', 'T'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Blob {
  std::string name;  // "<layer>.weight" / "<layer>.bias"
  Tensor<float> tensor;
};

struct CheckpointManifest {
  std::string architecture;
  double width_multiplier = 1.0;
  LulcClass target_class = LulcClass::Forest;
  TrainMode mode = TrainMode::Downsample;
  int epoch = 0;
  std::uint64_t seed = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  int batch_size = 0;
  nlohmann::json metrics = nlohmann::json::object();
};

struct Checkpoint {
  CheckpointManifest manifest;
  std::vector<Blob> blobs;
};

Checkpoint make_checkpoint(const Fcn8Model& model, const CheckpointManifest& manifest);

/// Every blob must be present with the declared shape.
Fcn8Model model_from_checkpoint(const Checkpoint& cp);

/// Copies blobs whose name and shape match a layer of `model` (e.g. an
/// encoder-only weight file) and returns how many tensors were loaded.
std::size_t load_matching_weights(Fcn8Model& model, const Checkpoint& cp);

/// Warning text when the checkpoint was trained for another class.
std::optional<std::string> class_mismatch_warning(const Checkpoint& cp, LulcClass expected);

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Lower-case hex SHA-256.
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

}  // namespace lulc
