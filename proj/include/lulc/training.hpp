#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "lulc/augment.hpp"
#include "lulc/eval.hpp"
#include "lulc/fcn8.hpp"
#include "lulc/grid.hpp"
#include "lulc/labels.hpp"

namespace lulc {

enum class TrainMode { Downsample, Grid };

std::string_view to_string(TrainMode mode);
std::optional<TrainMode> parse_mode(std::string_view name);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.01;
  int batch_size = 8;
  TrainMode mode = TrainMode::Downsample;
  std::uint64_t seed = 0;
  LulcClass target_class = LulcClass::Forest;
  double width_multiplier = 1.0;
  /// Unset: on for Downsample, off for Grid. Grid with augmentation is a
  /// configuration error.
  std::optional<bool> augment;
  AugmentConfig augmentation;
  int threads = 1;

  bool augmentation_enabled() const { return augment.value_or(mode == TrainMode::Downsample); }
  void validate() const;
};

using Sample = std::pair<RgbRaster, BinaryMask>;

/// A training image that is only decoded when a sample needs it.
struct TrainingImage {
  Dims dims;
  std::function<Sample()> load;
};

/// Fixed-size (tile x tile) samples. Downsample sets are materialised up
/// front; grid sets extract tiles on demand from lazily loaded images.
class TrainingSet {
 public:
  std::size_t size() const noexcept { return refs_.size(); }
  Sample get(std::size_t i) const;

 private:
  friend TrainingSet build_training_set(std::vector<TrainingImage>, const TrainConfig&);

  struct Ref {
    std::size_t image;
    TileIndex tile;
  };

  struct Sources {
    std::vector<TrainingImage> images;
    std::vector<TileGrid> grids;
    std::mutex mutex;
    std::map<std::size_t, std::shared_ptr<const Sample>> loaded;
  };

  std::shared_ptr<const Sample> source(std::size_t image) const;

  std::vector<Sample> materialised_;  // Downsample
  std::vector<Ref> refs_;             // Grid (or one Ref per materialised sample)
  std::shared_ptr<Sources> sources_;
};

TrainingSet build_training_set(std::vector<TrainingImage> images, const TrainConfig& cfg);

/// Nearest-neighbour resampling for label planes (half-pixel centres).
BinaryMask resize_nearest(const BinaryMask& mask, Dims target);

class DivergedLossError : public Error {
 public:
  DivergedLossError(int epoch, double loss);
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Plain mini-batch SGD. Each epoch visits the samples in a fresh seeded
/// order; the logged loss is the pixel-weighted mean over the epoch. On a
/// non-finite loss the model is rolled back to the start of the failing
/// epoch and DivergedLossError is thrown.
TrainResult train(Fcn8Model& model, const TrainingSet& set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Loss and summed gradients for one batch, split over `threads` workers.
struct BatchGradients {
  double loss = 0.0;
  std::size_t scored = 0;
  Gradients<float> grads;
};
BatchGradients batch_gradients(const Fcn8Model& model, const Tensor<float>& batch,
                               std::span<const BinaryMask> masks, int threads);

/// Tile, run, argmax, stitch. Output dims equal input dims.
BinaryMask predict_grid(const Fcn8Model& model, const RgbRaster& raster, int threads = 1,
                        int batch_size = 8);

/// Resize to 224x224, run, argmax, nearest-neighbour upscale to input dims.
BinaryMask predict_downsampled(const Fcn8Model& model, const RgbRaster& raster);

/// Pooled confusion of the model's argmax predictions over every sample.
ConfusionMatrix evaluate_set(const Fcn8Model& model, const TrainingSet& set, int threads = 1);

}  // namespace lulc
