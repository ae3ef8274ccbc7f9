#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lulc/labels.hpp"
#include "lulc/parallel.hpp"
#include "lulc/layers.hpp"
#include "lulc/raster.hpp"

namespace lulc {

inline constexpr int kFcnInput = 224;
inline constexpr int kNumOutputs = 2;  // channel 0: other, channel 1: target

/// Per-layer parameter gradients aligned with BasicFcn8::layers(); entries
/// for parameter-free layers are empty tensors.
template <typename T>
struct Gradients {
  std::vector<Tensor<T>> weight;
  std::vector<Tensor<T>> bias;

  Gradients& operator+=(const Gradients& other);
};

/// VGG-16 encoder, convolutionalised fc6/fc7 head and the three-stage
/// transposed-convolution decoder with pool4 and pool3 skip scores.
///
/// Layer order (indices are stable and used by the checkpoint format):
///   conv1_1..pool1, conv2_1..pool2, conv3_1..pool3, conv4_1..pool4,
///   conv5_1..pool5, fc6, relu6, fc7, relu7, score_fr, upscore2,
///   score_pool4, fuse_pool4, upscore_pool4, score_pool3, fuse_pool3,
///   upscore8.
template <typename T>
class BasicFcn8 {
 public:
  /// Every tensor needed for backward, one cache per layer in layer order.
  struct Pass {
    Tensor<T> logits;
    std::vector<LayerCache<T>> caches;
  };

  /// Architecture only; every parameter zero.
  static BasicFcn8 architecture(double width_multiplier);

  /// He-normal conv weights, bilinear transposed-conv kernels, zero score
  /// layers and zero biases. Deterministic in `seed`.
  static BasicFcn8 init(std::uint64_t seed, double width_multiplier);

  double width_multiplier() const noexcept { return width_multiplier_; }
  /// e.g. "fcn8-vgg16 width=0.0625"
  std::string architecture_name() const;

  const std::vector<LayerSpec<T>>& layers() const noexcept { return layers_; }
  std::vector<LayerSpec<T>>& layers() noexcept { return layers_; }
  const LayerSpec<T>& layer(std::string_view name) const;

  std::size_t parameter_count() const;

  /// (n,3,224,224) -> (n,2,224,224). Items are split into `threads`
  /// contiguous chunks; the result does not depend on `threads`.
  Tensor<T> forward(const Tensor<T>& batch, int threads = 1) const;

  Pass forward_train(const Tensor<T>& batch) const;

  /// Adds parameter gradients for `pass` into `acc`.
  void backward(const Pass& pass, const Tensor<T>& grad_logits, Gradients<T>& acc) const;

  Gradients<T> zero_gradients() const;

  /// Plain SGD: p -= lr * g. Invalidates outstanding caches.
  void sgd_step(const Gradients<T>& grads, T learning_rate);

  template <typename U>
  BasicFcn8<U> cast() const;

 private:
  template <typename U>
  friend class BasicFcn8;

  Tensor<T> run(const Tensor<T>& batch, std::vector<LayerCache<T>>* caches) const;

  double width_multiplier_ = 1.0;
  std::vector<LayerSpec<T>> layers_;
};

using Fcn8Model = BasicFcn8<float>;

/// Layer indices of the pooled feature maps feeding the skip scores.
inline constexpr std::size_t kPool3Layer = 16;
inline constexpr std::size_t kPool4Layer = 23;
inline constexpr std::size_t kPool5Layer = 30;

/// Throws ConfigError unless m is one of 1, 1/2, 1/4, 1/8, 1/16.
void validate_width_multiplier(double m);

template <typename T>
struct LossResult {
  double loss = 0.0;       // summed loss / normalizer
  Tensor<T> grad;          // d loss / d logits
  std::size_t counted = 0; // non-Ignore pixels in this batch
};

/// Mean over non-Ignore pixels of -log softmax(logits)[true class]. Throws
/// AllPixelsIgnored when nothing is left to score.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const BinaryMask> masks);

/// Same, but divides by an externally supplied pixel count so that a batch
/// split across workers sums to the whole-batch loss.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const BinaryMask> masks,
                                    std::size_t normalizer);

std::size_t count_scored_pixels(std::span<const BinaryMask> masks);

/// RGB bytes scaled to [0,1], written as item `index` of `batch`.
template <typename T>
void raster_to_tensor(const RgbRaster& raster, Tensor<T>& batch, std::size_t index);

template <typename T>
Tensor<T> rasters_to_tensor(std::span<const RgbRaster> rasters);

/// Per-pixel argmax; ties resolve to Other.
template <typename T>
BinaryMask argmax_mask(const Tensor<T>& logits, std::size_t index);

}  // namespace lulc
