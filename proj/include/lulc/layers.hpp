#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lulc/tensor.hpp"

namespace lulc {

enum class LayerKind { Conv, Relu, MaxPool, ConvTranspose, ScoreFuse };

std::string_view to_string(LayerKind kind);

/// One node of the network. Conv weights are (out, in, k, k); ConvTranspose
/// weights are (in, out, k, k). MaxPool is fixed at 2x2 stride 2; ScoreFuse
/// adds a skip tensor of identical shape.
template <typename T>
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  Tensor<T> weight;
  Tensor<T> bias;
  /// Bumped on every parameter update; caches taken earlier become stale.
  std::uint64_t version = 0;

  bool has_params() const noexcept {
    return kind == LayerKind::Conv || kind == LayerKind::ConvTranspose;
  }
  /// Output (h, w) for an input of (h, w).
  std::pair<std::size_t, std::size_t> output_hw(std::size_t h, std::size_t w) const;

  static LayerSpec conv(std::string name, int in_ch, int out_ch, int kernel, int stride = 1,
                        int padding = 0);
  static LayerSpec conv_transpose(std::string name, int in_ch, int out_ch, int kernel, int stride,
                                  int padding);
  static LayerSpec relu(std::string name);
  static LayerSpec max_pool(std::string name);
  static LayerSpec score_fuse(std::string name);
};

/// What backward needs from forward. Opaque to callers.
template <typename T>
struct LayerCache {
  const LayerSpec<T>* layer = nullptr;
  std::uint64_t version = 0;
  Shape in_shape;
  Shape out_shape;
  Tensor<T> input;                   // Conv, ConvTranspose
  std::vector<std::uint32_t> argmax; // MaxPool: flat input offset per output element
  std::vector<std::uint8_t> active;  // Relu: input > 0
};

template <typename T>
struct LayerOutput {
  Tensor<T> output;
  LayerCache<T> cache;
};

template <typename T>
struct LayerGrads {
  Tensor<T> grad_in;
  Tensor<T> grad_skip;  // ScoreFuse only
  Tensor<T> weight;     // empty for parameter-free kinds
  Tensor<T> bias;
};

/// `skip` is required for ScoreFuse and ignored otherwise.
template <typename T>
LayerOutput<T> layer_forward(const LayerSpec<T>& layer, const Tensor<T>& input,
                             const Tensor<T>* skip = nullptr);

/// Same as layer_forward but drops the cache (inference).
template <typename T>
Tensor<T> layer_infer(const LayerSpec<T>& layer, const Tensor<T>& input,
                      const Tensor<T>* skip = nullptr);

template <typename T>
LayerGrads<T> layer_backward(const LayerSpec<T>& layer, const LayerCache<T>& cache,
                             const Tensor<T>& grad_out);

/// Like layer_backward, but parameter gradients are added into
/// `weight_acc`/`bias_acc` (which must already have the parameter shapes)
/// and only the input gradients are returned.
template <typename T>
LayerGrads<T> layer_backward_accumulate(const LayerSpec<T>& layer, const LayerCache<T>& cache,
                                        const Tensor<T>& grad_out, Tensor<T>& weight_acc,
                                        Tensor<T>& bias_acc);

}  // namespace lulc
