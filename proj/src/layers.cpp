#include "lulc/layers.hpp"

#include <Eigen/Core>

#include <limits>

namespace lulc {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::ConvTranspose: return "conv_transpose";
    case LayerKind::ScoreFuse: return "score_fuse";
  }
  return "unknown";
}

template <typename T>
std::pair<std::size_t, std::size_t> LayerSpec<T>::output_hw(std::size_t h, std::size_t w) const {
  const auto k = static_cast<std::ptrdiff_t>(kernel);
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto p = static_cast<std::ptrdiff_t>(padding);
  const auto ih = static_cast<std::ptrdiff_t>(h);
  const auto iw = static_cast<std::ptrdiff_t>(w);
  switch (kind) {
    case LayerKind::Conv: {
      const std::ptrdiff_t oh = (ih + 2 * p - k) / s + 1;
      const std::ptrdiff_t ow = (iw + 2 * p - k) / s + 1;
      if (ih + 2 * p < k || iw + 2 * p < k) {
        throw Error(ErrorKind::ShapeMismatch, name + ": input smaller than kernel");
      }
      return {static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
    }
    case LayerKind::ConvTranspose: {
      const std::ptrdiff_t oh = (ih - 1) * s - 2 * p + k;
      const std::ptrdiff_t ow = (iw - 1) * s - 2 * p + k;
      if (oh < 1 || ow < 1) throw Error(ErrorKind::ShapeMismatch, name + ": empty output");
      return {static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
    }
    case LayerKind::MaxPool:
      if (h < 2 || w < 2) throw Error(ErrorKind::ShapeMismatch, name + ": pool input below 2x2");
      return {h / 2, w / 2};
    default:
      return {h, w};
  }
}

template <typename T>
LayerSpec<T> LayerSpec<T>::conv(std::string name, int in_ch, int out_ch, int kernel, int stride,
                                int padding) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.name = std::move(name);
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.weight = Tensor<T>({static_cast<std::size_t>(out_ch), static_cast<std::size_t>(in_ch),
                        static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)});
  l.bias = Tensor<T>({1, static_cast<std::size_t>(out_ch), 1, 1});
  return l;
}

template <typename T>
LayerSpec<T> LayerSpec<T>::conv_transpose(std::string name, int in_ch, int out_ch, int kernel,
                                          int stride, int padding) {
  LayerSpec l = conv(std::move(name), in_ch, out_ch, kernel, stride, padding);
  l.kind = LayerKind::ConvTranspose;
  l.weight = Tensor<T>({static_cast<std::size_t>(in_ch), static_cast<std::size_t>(out_ch),
                        static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)});
  return l;
}

template <typename T>
LayerSpec<T> LayerSpec<T>::relu(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Relu;
  l.name = std::move(name);
  return l;
}

template <typename T>
LayerSpec<T> LayerSpec<T>::max_pool(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool;
  l.name = std::move(name);
  l.kernel = 2;
  l.stride = 2;
  return l;
}

template <typename T>
LayerSpec<T> LayerSpec<T>::score_fuse(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::ScoreFuse;
  l.name = std::move(name);
  return l;
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct Geometry {
  std::size_t channels, h, w;    // image side
  std::size_t out_h, out_w;      // column (sliding-window) side
  int kernel, stride, padding;

  std::size_t rows() const { return channels * static_cast<std::size_t>(kernel * kernel); }
  std::size_t cols() const { return out_h * out_w; }
  bool trivial() const { return kernel == 1 && stride == 1 && padding == 0; }
};

// col[(c*k + ki)*k + kj][oh*out_w + ow] = image[c][oh*s - p + ki][ow*s - p + kj]
template <typename T>
void im2col(const T* image, const Geometry& g, T* col) {
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  const std::size_t cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.h * g.w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * static_cast<std::size_t>(g.kernel) + static_cast<std::size_t>(ki)) *
                            static_cast<std::size_t>(g.kernel) +
                        static_cast<std::size_t>(kj)) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * g.stride - g.padding + ki;
          T* dst = row + oh * g.out_w;
          if (y < 0 || y >= h) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = plane + y * w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow) * g.stride - g.padding + kj;
            dst[ow] = (x < 0 || x >= w) ? T{0} : src[x];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image (image is
// accumulated into, caller zeroes it).
template <typename T>
void col2im(const T* col, const Geometry& g, T* image) {
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  const std::size_t cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.h * g.w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * static_cast<std::size_t>(g.kernel) + static_cast<std::size_t>(ki)) *
                                  static_cast<std::size_t>(g.kernel) +
                              static_cast<std::size_t>(kj)) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * g.stride - g.padding + ki;
          if (y < 0 || y >= h) continue;
          const T* src = row + oh * g.out_w;
          T* dst = plane + y * w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow) * g.stride - g.padding + kj;
            if (x >= 0 && x < w) dst[x] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void check_input(const LayerSpec<T>& layer, const Tensor<T>& input) {
  const Shape& s = input.shape();
  if (s.size() == 0) throw Error(ErrorKind::ShapeMismatch, layer.name + ": empty input");
  if (layer.has_params() && s.c != static_cast<std::size_t>(layer.in_ch)) {
    throw Error(ErrorKind::ShapeMismatch, layer.name + ": expected " +
                                              std::to_string(layer.in_ch) + " input channels, got " +
                                              to_string(s));
  }
}

template <typename T>
Tensor<T> conv_forward(const LayerSpec<T>& layer, const Tensor<T>& input) {
  const Shape& in = input.shape();
  const auto [oh, ow] = layer.output_hw(in.h, in.w);
  const Shape out_shape{in.n, static_cast<std::size_t>(layer.out_ch), oh, ow};
  Tensor<T> out(out_shape);
  const Geometry g{in.c, in.h, in.w, oh, ow, layer.kernel, layer.stride, layer.padding};
  ConstMatMap<T> weight(layer.weight.data(), layer.out_ch, static_cast<Eigen::Index>(g.rows()));
  AlignedVector<T> col(g.trivial() ? 0 : g.rows() * g.cols());
  for (std::size_t n = 0; n < in.n; ++n) {
    const T* col_ptr = input.item(n);
    if (!g.trivial()) {
      im2col(input.item(n), g, col.data());
      col_ptr = col.data();
    }
    ConstMatMap<T> cols(col_ptr, static_cast<Eigen::Index>(g.rows()),
                        static_cast<Eigen::Index>(g.cols()));
    MatMap<T> result(out.item(n), layer.out_ch, static_cast<Eigen::Index>(g.cols()));
    result.noalias() = weight * cols;
    for (int c = 0; c < layer.out_ch; ++c) {
      result.row(c).array() += layer.bias.data()[c];
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv_backward(const LayerSpec<T>& layer, const LayerCache<T>& cache,
                        const Tensor<T>& grad_out, Tensor<T>& weight_acc, Tensor<T>& bias_acc) {
  const Shape& in = cache.in_shape;
  const Shape& out = cache.out_shape;
  const Geometry g{in.c, in.h, in.w, out.h, out.w, layer.kernel, layer.stride, layer.padding};
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols_n = static_cast<Eigen::Index>(g.cols());
  ConstMatMap<T> weight(layer.weight.data(), layer.out_ch, rows);
  MatMap<T> dweight(weight_acc.data(), layer.out_ch, rows);
  Tensor<T> grad_in(in);
  AlignedVector<T> col(g.trivial() ? 0 : g.rows() * g.cols());
  AlignedVector<T> dcol(g.trivial() ? 0 : g.rows() * g.cols());
  for (std::size_t n = 0; n < in.n; ++n) {
    ConstMatMap<T> gout(grad_out.item(n), layer.out_ch, cols_n);
    const T* col_ptr = cache.input.item(n);
    if (!g.trivial()) {
      im2col(cache.input.item(n), g, col.data());
      col_ptr = col.data();
    }
    ConstMatMap<T> cols(col_ptr, rows, cols_n);
    dweight.noalias() += gout * cols.transpose();
    for (int c = 0; c < layer.out_ch; ++c) bias_acc.data()[c] += gout.row(c).sum();
    if (g.trivial()) {
      MatMap<T> dx(grad_in.item(n), rows, cols_n);
      dx.noalias() = weight.transpose() * gout;
    } else {
      MatMap<T> dc(dcol.data(), rows, cols_n);
      dc.noalias() = weight.transpose() * gout;
      col2im(dcol.data(), g, grad_in.item(n));
    }
  }
  return grad_in;
}

// Transposed convolution is the adjoint of a convolution whose input is our
// output: columns live on the (small) input grid, the image is the output.
template <typename T>
Tensor<T> conv_transpose_forward(const LayerSpec<T>& layer, const Tensor<T>& input) {
  const Shape& in = input.shape();
  const auto [oh, ow] = layer.output_hw(in.h, in.w);
  const Shape out_shape{in.n, static_cast<std::size_t>(layer.out_ch), oh, ow};
  Tensor<T> out(out_shape);
  const Geometry g{static_cast<std::size_t>(layer.out_ch), oh, ow, in.h, in.w,
                   layer.kernel, layer.stride, layer.padding};
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols_n = static_cast<Eigen::Index>(g.cols());
  ConstMatMap<T> weight(layer.weight.data(), layer.in_ch, rows);
  AlignedVector<T> col(g.rows() * g.cols());
  for (std::size_t n = 0; n < in.n; ++n) {
    ConstMatMap<T> x(input.item(n), layer.in_ch, cols_n);
    MatMap<T> c(col.data(), rows, cols_n);
    c.noalias() = weight.transpose() * x;
    col2im(col.data(), g, out.item(n));
    T* o = out.item(n);
    for (std::size_t ch = 0; ch < out_shape.c; ++ch) {
      const T b = layer.bias.data()[ch];
      for (std::size_t i = 0; i < out_shape.plane(); ++i) o[ch * out_shape.plane() + i] += b;
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose_backward(const LayerSpec<T>& layer, const LayerCache<T>& cache,
                                  const Tensor<T>& grad_out, Tensor<T>& weight_acc,
                                  Tensor<T>& bias_acc) {
  const Shape& in = cache.in_shape;
  const Shape& out = cache.out_shape;
  const Geometry g{out.c, out.h, out.w, in.h, in.w, layer.kernel, layer.stride, layer.padding};
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols_n = static_cast<Eigen::Index>(g.cols());
  ConstMatMap<T> weight(layer.weight.data(), layer.in_ch, rows);
  MatMap<T> dweight(weight_acc.data(), layer.in_ch, rows);
  Tensor<T> grad_in(in);
  AlignedVector<T> gcol(g.rows() * g.cols());
  for (std::size_t n = 0; n < in.n; ++n) {
    im2col(grad_out.item(n), g, gcol.data());
    ConstMatMap<T> gc(gcol.data(), rows, cols_n);
    ConstMatMap<T> x(cache.input.item(n), layer.in_ch, cols_n);
    dweight.noalias() += x * gc.transpose();
    MatMap<T> dx(grad_in.item(n), layer.in_ch, cols_n);
    dx.noalias() = weight * gc;
    const T* go = grad_out.item(n);
    for (std::size_t ch = 0; ch < out.c; ++ch) {
      T s{0};
      for (std::size_t i = 0; i < out.plane(); ++i) s += go[ch * out.plane() + i];
      bias_acc.data()[ch] += s;
    }
  }
  return grad_in;
}

template <typename T>
Tensor<T> max_pool_forward(const LayerSpec<T>& layer, const Tensor<T>& input,
                           std::vector<std::uint32_t>* argmax) {
  const Shape& in = input.shape();
  const auto [oh, ow] = layer.output_hw(in.h, in.w);
  Tensor<T> out({in.n, in.c, oh, ow});
  if (argmax) argmax->resize(out.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const std::size_t base = (n * in.c + c) * in.plane();
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++o) {
          std::size_t best = base + (2 * y) * in.w + 2 * x;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + (2 * y + dy) * in.w + 2 * x + dx;
              if (input.data()[idx] > input.data()[best]) best = idx;
            }
          }
          out.data()[o] = input.data()[best];
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return out;
}

template <typename T>
void check_cache(const LayerSpec<T>& layer, const LayerCache<T>& cache, const Tensor<T>& grad_out) {
  if (cache.layer != &layer || cache.version != layer.version) {
    throw Error(ErrorKind::StaleCache,
                layer.name + ": cache was not produced by the current parameters of this layer");
  }
  if (grad_out.shape() != cache.out_shape) {
    throw Error(ErrorKind::ShapeMismatch, layer.name + ": grad_out " + to_string(grad_out.shape()) +
                                              " vs forward output " + to_string(cache.out_shape));
  }
}

template <typename T>
Tensor<T> run_forward(const LayerSpec<T>& layer, const Tensor<T>& input, const Tensor<T>* skip,
                      LayerCache<T>* cache) {
  check_input(layer, input);
  switch (layer.kind) {
    case LayerKind::Conv: {
      Tensor<T> out = conv_forward(layer, input);
      if (cache) cache->input = input;
      return out;
    }
    case LayerKind::ConvTranspose: {
      Tensor<T> out = conv_transpose_forward(layer, input);
      if (cache) cache->input = input;
      return out;
    }
    case LayerKind::Relu: {
      Tensor<T> out = input;
      if (cache) cache->active.resize(input.size());
      T* d = out.data();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const bool on = d[i] > T{0};
        if (!on) d[i] = T{0};
        if (cache) cache->active[i] = on;
      }
      return out;
    }
    case LayerKind::MaxPool:
      return max_pool_forward(layer, input, cache ? &cache->argmax : nullptr);
    case LayerKind::ScoreFuse: {
      if (!skip) throw Error(ErrorKind::ShapeMismatch, layer.name + ": score fuse needs a skip input");
      if (skip->shape() != input.shape()) {
        throw Error(ErrorKind::ShapeMismatch, layer.name + ": cannot fuse " +
                                                  to_string(input.shape()) + " with " +
                                                  to_string(skip->shape()));
      }
      Tensor<T> out = input;
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += skip->data()[i];
      return out;
    }
  }
  throw Error(ErrorKind::ShapeMismatch, layer.name + ": unknown layer kind");
}

}  // namespace

template <typename T>
LayerOutput<T> layer_forward(const LayerSpec<T>& layer, const Tensor<T>& input,
                             const Tensor<T>* skip) {
  LayerOutput<T> result;
  result.cache.layer = &layer;
  result.cache.version = layer.version;
  result.cache.in_shape = input.shape();
  result.output = run_forward(layer, input, skip, &result.cache);
  result.cache.out_shape = result.output.shape();
  return result;
}

template <typename T>
Tensor<T> layer_infer(const LayerSpec<T>& layer, const Tensor<T>& input, const Tensor<T>* skip) {
  return run_forward<T>(layer, input, skip, nullptr);
}

template <typename T>
LayerGrads<T> layer_backward_accumulate(const LayerSpec<T>& layer, const LayerCache<T>& cache,
                                        const Tensor<T>& grad_out, Tensor<T>& weight_acc,
                                        Tensor<T>& bias_acc) {
  check_cache(layer, cache, grad_out);
  LayerGrads<T> grads;
  switch (layer.kind) {
    case LayerKind::Conv:
      grads.grad_in = conv_backward(layer, cache, grad_out, weight_acc, bias_acc);
      break;
    case LayerKind::ConvTranspose:
      grads.grad_in = conv_transpose_backward(layer, cache, grad_out, weight_acc, bias_acc);
      break;
    case LayerKind::Relu:
      grads.grad_in = grad_out;
      for (std::size_t i = 0; i < grads.grad_in.size(); ++i) {
        if (!cache.active[i]) grads.grad_in.data()[i] = T{0};
      }
      break;
    case LayerKind::MaxPool:
      grads.grad_in = Tensor<T>(cache.in_shape);
      for (std::size_t o = 0; o < grad_out.size(); ++o) {
        grads.grad_in.data()[cache.argmax[o]] += grad_out.data()[o];
      }
      break;
    case LayerKind::ScoreFuse:
      grads.grad_in = grad_out;
      grads.grad_skip = grad_out;
      break;
  }
  return grads;
}

template <typename T>
LayerGrads<T> layer_backward(const LayerSpec<T>& layer, const LayerCache<T>& cache,
                             const Tensor<T>& grad_out) {
  Tensor<T> weight_acc(layer.weight.shape());
  Tensor<T> bias_acc(layer.bias.shape());
  LayerGrads<T> grads = layer_backward_accumulate(layer, cache, grad_out, weight_acc, bias_acc);
  if (layer.has_params()) {
    grads.weight = std::move(weight_acc);
    grads.bias = std::move(bias_acc);
  }
  return grads;
}

#define LULC_INSTANTIATE_LAYERS(T)                                                              \
  template struct LayerSpec<T>;                                                                 \
  template LayerOutput<T> layer_forward(const LayerSpec<T>&, const Tensor<T>&, const Tensor<T>*); \
  template Tensor<T> layer_infer(const LayerSpec<T>&, const Tensor<T>&, const Tensor<T>*);      \
  template LayerGrads<T> layer_backward(const LayerSpec<T>&, const LayerCache<T>&,              \
                                        const Tensor<T>&);                                      \
  template LayerGrads<T> layer_backward_accumulate(const LayerSpec<T>&, const LayerCache<T>&,   \
                                                   const Tensor<T>&, Tensor<T>&, Tensor<T>&);

LULC_INSTANTIATE_LAYERS(float)
LULC_INSTANTIATE_LAYERS(double)

#undef LULC_INSTANTIATE_LAYERS

}  // namespace lulc
