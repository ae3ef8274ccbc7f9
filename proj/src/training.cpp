#include "lulc/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace lulc {

std::string_view to_string(TrainMode mode) {
  return mode == TrainMode::Grid ? "grid" : "downsample";
}

std::optional<TrainMode> parse_mode(std::string_view name) {
  if (name == "grid") return TrainMode::Grid;
  if (name == "downsample") return TrainMode::Downsample;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::ConfigError, "epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::ConfigError, "learning_rate must be > 0");
  }
  if (batch_size < 1) throw Error(ErrorKind::ConfigError, "batch_size must be >= 1");
  if (threads < 1) throw Error(ErrorKind::ConfigError, "threads must be >= 1");
  if (mode == TrainMode::Grid && augment.value_or(false)) {
    throw Error(ErrorKind::ConfigError, "grid-mode training does not use augmentation");
  }
  validate_width_multiplier(width_multiplier);
  augmentation.validate();
}

BinaryMask resize_nearest(const BinaryMask& mask, Dims target) {
  if (target == mask.dims()) return mask;
  BinaryMask out(target.width, target.height);
  auto src = [](int t, int src_n, int dst_n) {
    const auto s = static_cast<int>(std::floor((t + 0.5) * src_n / dst_n));
    return std::min(s, src_n - 1);
  };
  for (int y = 0; y < target.height; ++y) {
    const int sy = src(y, mask.height(), target.height);
    for (int x = 0; x < target.width; ++x) {
      out.set(x, y, mask.at(src(x, mask.width(), target.width), sy));
    }
  }
  return out;
}

TrainingSet build_training_set(std::vector<TrainingImage> images, const TrainConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw Error(ErrorKind::EmptySplit, "training split is empty");
  TrainingSet set;
  const Dims input{kFcnInput, kFcnInput};

  if (cfg.mode == TrainMode::Downsample) {
    AugmentConfig aug = cfg.augmentation;
    if (!cfg.augmentation_enabled()) aug.kinds.clear();
    for (auto& image : images) {
      auto [raster, mask] = image.load();
      if (raster.dims() != mask.dims()) {
        throw Error(ErrorKind::DimMismatch, "training image and mask dims differ");
      }
      for (auto& variant : augment_set(resize_bilinear(raster, input), resize_nearest(mask, input), aug)) {
        set.materialised_.push_back(std::move(variant));
      }
    }
    set.refs_.resize(set.materialised_.size());
    return set;
  }

  set.sources_ = std::make_shared<TrainingSet::Sources>();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const TileGrid grid = plan_grid(images[i].dims, kFcnInput);
    for (TileIndex idx : grid_indices(grid)) set.refs_.push_back({i, idx});
    set.sources_->grids.push_back(grid);
  }
  set.sources_->images = std::move(images);
  return set;
}

std::shared_ptr<const Sample> TrainingSet::source(std::size_t image) const {
  std::lock_guard lock(sources_->mutex);
  auto& slot = sources_->loaded[image];
  if (!slot) {
    auto sample = std::make_shared<Sample>(sources_->images[image].load());
    if (sample->first.dims() != sources_->grids[image].source ||
        sample->second.dims() != sources_->grids[image].source) {
      throw Error(ErrorKind::DimMismatch, "training image dims differ from the declared dims");
    }
    slot = std::move(sample);
  }
  return slot;
}

Sample TrainingSet::get(std::size_t i) const {
  if (!sources_) return materialised_.at(i);
  const Ref& ref = refs_.at(i);
  const auto src = source(ref.image);
  const TileGrid& grid = sources_->grids[ref.image];
  return {extract_tile(src->first, grid, ref.tile), extract_tile(src->second, grid, ref.tile)};
}

DivergedLossError::DivergedLossError(int epoch, double loss)
    : Error(ErrorKind::DivergedLoss,
            "non-finite loss (" + std::to_string(loss) + ") in epoch " + std::to_string(epoch)),
      epoch_(epoch) {}

BatchGradients batch_gradients(const Fcn8Model& model, const Tensor<float>& batch,
                               std::span<const BinaryMask> masks, int threads) {
  BatchGradients out;
  out.scored = count_scored_pixels(masks);
  out.grads = model.zero_gradients();
  if (out.scored == 0) return out;

  const std::size_t n = batch.shape().n;
  const std::size_t chunks = chunk_count(n, threads);
  std::vector<Gradients<float>> partial(chunks);
  std::vector<double> losses(chunks, 0.0);
  parallel_chunks(n, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    Gradients<float>& acc = c == 0 ? out.grads : partial[c];
    if (c != 0) acc = model.zero_gradients();
    const auto pass = model.forward_train(batch.slice(b, e));
    const auto loss = softmax_cross_entropy(pass.logits, masks.subspan(b, e - b), out.scored);
    losses[c] = loss.loss;
    model.backward(pass, loss.grad, acc);
  });
  for (std::size_t c = 1; c < chunks; ++c) out.grads += partial[c];
  for (double l : losses) out.loss += l;
  return out;
}

namespace {

bool parameters_finite(const Fcn8Model& model) {
  for (const auto& l : model.layers()) {
    if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
  }
  return true;
}

}  // namespace

TrainResult train(Fcn8Model& model, const TrainingSet& set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (set.size() == 0) throw Error(ErrorKind::EmptySplit, "training set is empty");
  if (model.width_multiplier() != cfg.width_multiplier) {
    throw Error(ErrorKind::ConfigError, "model width does not match the training config");
  }

  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(set.size());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto input = static_cast<std::size_t>(kFcnInput);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    const Fcn8Model snapshot = model;
    double loss_sum = 0.0;
    std::size_t scored = 0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      Tensor<float> inputs({count, 3, input, input});
      std::vector<BinaryMask> masks;
      masks.reserve(count);
      for (std::size_t k = 0; k < count; ++k) {
        auto [raster, mask] = set.get(order[start + k]);
        raster_to_tensor(raster, inputs, k);
        masks.push_back(std::move(mask));
      }
      BatchGradients bg = batch_gradients(model, inputs, masks, cfg.threads);
      if (bg.scored == 0) continue;
      if (!std::isfinite(bg.loss)) {
        model = snapshot;
        throw DivergedLossError(epoch, bg.loss);
      }
      loss_sum += bg.loss * static_cast<double>(bg.scored);
      scored += bg.scored;
      model.sgd_step(bg.grads, static_cast<float>(cfg.learning_rate));
      // A finite loss can still push weights to inf; the next forward would
      // only yield NaN, so stop here while the snapshot is still clean.
      if (!parameters_finite(model)) {
        model = snapshot;
        throw DivergedLossError(epoch, std::numeric_limits<double>::quiet_NaN());
      }
    }
    const double epoch_loss = scored ? loss_sum / static_cast<double>(scored) : 0.0;
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

BinaryMask predict_grid(const Fcn8Model& model, const RgbRaster& raster, int threads,
                        int batch_size) {
  const TileGrid grid = plan_grid(raster.dims(), kFcnInput);
  const auto indices = grid_indices(grid);
  const auto input = static_cast<std::size_t>(kFcnInput);
  const auto step = static_cast<std::size_t>(std::max(1, batch_size));
  std::map<TileIndex, BinaryMask> tiles;
  for (std::size_t start = 0; start < indices.size(); start += step) {
    const std::size_t count = std::min(step, indices.size() - start);
    Tensor<float> batch({count, 3, input, input});
    for (std::size_t k = 0; k < count; ++k) {
      raster_to_tensor(extract_tile(raster, grid, indices[start + k]), batch, k);
    }
    const Tensor<float> logits = model.forward(batch, threads);
    for (std::size_t k = 0; k < count; ++k) {
      tiles.emplace(indices[start + k], argmax_mask(logits, k));
    }
  }
  return stitch(tiles, grid);
}

BinaryMask predict_downsampled(const Fcn8Model& model, const RgbRaster& raster) {
  const auto input = static_cast<std::size_t>(kFcnInput);
  Tensor<float> batch({1, 3, input, input});
  raster_to_tensor(resize_bilinear(raster, {kFcnInput, kFcnInput}), batch, 0);
  return resize_nearest(argmax_mask(model.forward(batch), 0), raster.dims());
}

ConfusionMatrix evaluate_set(const Fcn8Model& model, const TrainingSet& set, int threads) {
  ConfusionMatrix cm;
  const auto input = static_cast<std::size_t>(kFcnInput);
  constexpr std::size_t kBatch = 8;
  for (std::size_t start = 0; start < set.size(); start += kBatch) {
    const std::size_t count = std::min(kBatch, set.size() - start);
    Tensor<float> batch({count, 3, input, input});
    std::vector<BinaryMask> masks;
    for (std::size_t k = 0; k < count; ++k) {
      auto [raster, mask] = set.get(start + k);
      raster_to_tensor(raster, batch, k);
      masks.push_back(std::move(mask));
    }
    const Tensor<float> logits = model.forward(batch, threads);
    for (std::size_t k = 0; k < count; ++k) cm += confusion(argmax_mask(logits, k), masks[k]);
  }
  return cm;
}

}  // namespace lulc
