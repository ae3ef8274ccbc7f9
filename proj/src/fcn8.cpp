#include "lulc/fcn8.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace lulc {

template <typename T>
Gradients<T>& Gradients<T>::operator+=(const Gradients& other) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    auto add = [](Tensor<T>& dst, const Tensor<T>& src) {
      for (std::size_t k = 0; k < dst.size(); ++k) dst.data()[k] += src.data()[k];
    };
    add(weight[i], other.weight[i]);
    add(bias[i], other.bias[i]);
  }
  return *this;
}

void validate_width_multiplier(double m) {
  for (double ok : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
    if (m == ok) return;
  }
  throw Error(ErrorKind::ConfigError, "width_multiplier must be one of 1, 1/2, 1/4, 1/8, 1/16");
}

namespace {

int scaled(int base, double m) { return static_cast<int>(std::lround(base * m)); }

// Portable N(0,1) draws: the engine output is standardised, the std
// distributions are not.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

bool is_score_layer(const std::string& name) { return name.rfind("score_", 0) == 0; }

template <typename T>
void fill_bilinear(LayerSpec<T>& layer) {
  const int k = layer.kernel;
  const double factor = (k + 1) / 2;
  const double center = k % 2 == 1 ? factor - 1.0 : factor - 0.5;
  layer.weight.fill(T{0});
  const int channels = std::min(layer.in_ch, layer.out_ch);
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const double v = (1.0 - std::abs(i - center) / factor) * (1.0 - std::abs(j - center) / factor);
        layer.weight(static_cast<std::size_t>(c), static_cast<std::size_t>(c),
                     static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = static_cast<T>(v);
      }
    }
  }
}

}  // namespace

template <typename T>
BasicFcn8<T> BasicFcn8<T>::architecture(double width_multiplier) {
  validate_width_multiplier(width_multiplier);
  BasicFcn8 model;
  model.width_multiplier_ = width_multiplier;
  auto& L = model.layers_;
  using Spec = LayerSpec<T>;

  const int widths[5] = {64, 128, 256, 512, 512};
  const int depth[5] = {2, 2, 3, 3, 3};
  int in = 3;
  for (int b = 0; b < 5; ++b) {
    const int out = scaled(widths[b], width_multiplier);
    for (int d = 0; d < depth[b]; ++d) {
      const std::string id = std::to_string(b + 1) + "_" + std::to_string(d + 1);
      L.push_back(Spec::conv("conv" + id, in, out, 3, 1, 1));
      L.push_back(Spec::relu("relu" + id));
      in = out;
    }
    L.push_back(Spec::max_pool("pool" + std::to_string(b + 1)));
  }
  const int fc = scaled(4096, width_multiplier);
  const int pool3_ch = scaled(256, width_multiplier);
  const int pool4_ch = scaled(512, width_multiplier);
  L.push_back(Spec::conv("fc6", in, fc, 7, 1, 3));
  L.push_back(Spec::relu("relu6"));
  L.push_back(Spec::conv("fc7", fc, fc, 1));
  L.push_back(Spec::relu("relu7"));
  L.push_back(Spec::conv("score_fr", fc, kNumOutputs, 1));
  L.push_back(Spec::conv_transpose("upscore2", kNumOutputs, kNumOutputs, 4, 2, 1));
  L.push_back(Spec::conv("score_pool4", pool4_ch, kNumOutputs, 1));
  L.push_back(Spec::score_fuse("fuse_pool4"));
  L.push_back(Spec::conv_transpose("upscore_pool4", kNumOutputs, kNumOutputs, 4, 2, 1));
  L.push_back(Spec::conv("score_pool3", pool3_ch, kNumOutputs, 1));
  L.push_back(Spec::score_fuse("fuse_pool3"));
  L.push_back(Spec::conv_transpose("upscore8", kNumOutputs, kNumOutputs, 16, 8, 4));
  return model;
}

template <typename T>
BasicFcn8<T> BasicFcn8<T>::init(std::uint64_t seed, double width_multiplier) {
  BasicFcn8 model = architecture(width_multiplier);
  NormalSource normal(seed);
  for (auto& layer : model.layers_) {
    if (layer.kind == LayerKind::ConvTranspose) {
      fill_bilinear(layer);
    } else if (layer.kind == LayerKind::Conv && !is_score_layer(layer.name)) {
      const double fan_in = static_cast<double>(layer.in_ch) * layer.kernel * layer.kernel;
      const double stddev = std::sqrt(2.0 / fan_in);
      for (auto& w : layer.weight.values()) w = static_cast<T>(normal.next() * stddev);
    }
  }
  return model;
}

template <typename T>
std::string BasicFcn8<T>::architecture_name() const {
  std::ostringstream os;
  os << "fcn8-vgg16 width=" << width_multiplier_;
  return os.str();
}

template <typename T>
const LayerSpec<T>& BasicFcn8<T>::layer(std::string_view name) const {
  for (const auto& l : layers_) {
    if (l.name == name) return l;
  }
  throw Error(ErrorKind::ShapeMismatch, "no layer named " + std::string(name));
}

template <typename T>
std::size_t BasicFcn8<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename T>
Tensor<T> BasicFcn8<T>::run(const Tensor<T>& batch, std::vector<LayerCache<T>>* caches) const {
  const Shape& s = batch.shape();
  if (s.c != 3 || s.h != kFcnInput || s.w != kFcnInput || s.n == 0) {
    throw Error(ErrorKind::ShapeMismatch,
                "FCN-8 expects (n,3,224,224), got " + to_string(batch.shape()));
  }
  if (caches) caches->assign(layers_.size(), {});

  auto step = [&](std::size_t i, const Tensor<T>& in, const Tensor<T>* skip = nullptr) {
    if (caches) {
      auto r = layer_forward(layers_[i], in, skip);
      (*caches)[i] = std::move(r.cache);
      return std::move(r.output);
    }
    return layer_infer(layers_[i], in, skip);
  };

  Tensor<T> x = batch;
  Tensor<T> pool3, pool4;
  constexpr std::size_t kScoreFr = kPool5Layer + 5;
  for (std::size_t i = 0; i <= kScoreFr; ++i) {
    x = step(i, x);
    if (i == kPool3Layer) pool3 = x;
    if (i == kPool4Layer) pool4 = x;
  }
  Tensor<T> up2 = step(kScoreFr + 1, x);
  Tensor<T> s4 = step(kScoreFr + 2, pool4);
  Tensor<T> f4 = step(kScoreFr + 3, up2, &s4);
  Tensor<T> up4 = step(kScoreFr + 4, f4);
  Tensor<T> s3 = step(kScoreFr + 5, pool3);
  Tensor<T> f3 = step(kScoreFr + 6, up4, &s3);
  return step(kScoreFr + 7, f3);
}

template <typename T>
Tensor<T> BasicFcn8<T>::forward(const Tensor<T>& batch, int threads) const {
  const Shape& s = batch.shape();
  if (chunk_count(s.n, threads) <= 1) return run(batch, nullptr);
  Tensor<T> out({s.n, kNumOutputs, s.h, s.w});
  parallel_chunks(s.n, threads, [&](std::size_t, std::size_t b, std::size_t e) {
    Tensor<T> part = run(batch.slice(b, e), nullptr);
    std::copy(part.data(), part.data() + part.size(), out.item(b));
  });
  return out;
}

template <typename T>
typename BasicFcn8<T>::Pass BasicFcn8<T>::forward_train(const Tensor<T>& batch) const {
  Pass pass;
  pass.logits = run(batch, &pass.caches);
  return pass;
}

template <typename T>
void BasicFcn8<T>::backward(const Pass& pass, const Tensor<T>& grad_logits,
                            Gradients<T>& acc) const {
  if (pass.caches.size() != layers_.size()) {
    throw Error(ErrorKind::StaleCache, "pass does not belong to this model");
  }
  auto back = [&](std::size_t i, const Tensor<T>& g) {
    return layer_backward_accumulate(layers_[i], pass.caches[i], g, acc.weight[i], acc.bias[i]);
  };
  constexpr std::size_t kScoreFr = kPool5Layer + 5;
  auto g8 = back(kScoreFr + 7, grad_logits);
  auto gf3 = back(kScoreFr + 6, g8.grad_in);
  auto gs3 = back(kScoreFr + 5, gf3.grad_skip);
  auto gu4 = back(kScoreFr + 4, gf3.grad_in);
  auto gf4 = back(kScoreFr + 3, gu4.grad_in);
  auto gs4 = back(kScoreFr + 2, gf4.grad_skip);
  auto gu2 = back(kScoreFr + 1, gf4.grad_in);

  Tensor<T> g = std::move(gu2.grad_in);
  auto add_into = [](Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t k = 0; k < dst.size(); ++k) dst.data()[k] += src.data()[k];
  };
  for (std::size_t i = kScoreFr + 1; i-- > 0;) {
    if (i == kPool4Layer) add_into(g, gs4.grad_in);
    if (i == kPool3Layer) add_into(g, gs3.grad_in);
    g = back(i, g).grad_in;
  }
}

template <typename T>
Gradients<T> BasicFcn8<T>::zero_gradients() const {
  Gradients<T> g;
  for (const auto& l : layers_) {
    g.weight.emplace_back(l.weight.shape());
    g.bias.emplace_back(l.bias.shape());
  }
  return g;
}

template <typename T>
void BasicFcn8<T>::sgd_step(const Gradients<T>& grads, T learning_rate) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    if (!l.has_params()) continue;
    for (std::size_t k = 0; k < l.weight.size(); ++k) {
      l.weight.data()[k] -= learning_rate * grads.weight[i].data()[k];
    }
    for (std::size_t k = 0; k < l.bias.size(); ++k) {
      l.bias.data()[k] -= learning_rate * grads.bias[i].data()[k];
    }
    ++l.version;
  }
}

template <typename T>
template <typename U>
BasicFcn8<U> BasicFcn8<T>::cast() const {
  BasicFcn8<U> out = BasicFcn8<U>::architecture(width_multiplier_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.layers_[i].weight = layers_[i].weight.template cast<U>();
    out.layers_[i].bias = layers_[i].bias.template cast<U>();
  }
  return out;
}

std::size_t count_scored_pixels(std::span<const BinaryMask> masks) {
  std::size_t n = 0;
  for (const auto& m : masks) {
    for (MaskValue v : m.values()) n += v != MaskValue::Ignore;
  }
  return n;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const BinaryMask> masks,
                                    std::size_t normalizer) {
  const Shape& s = logits.shape();
  if (s.c != kNumOutputs || s.n != masks.size()) {
    throw Error(ErrorKind::ShapeMismatch, "logits " + to_string(s) + " vs " +
                                              std::to_string(masks.size()) + " masks");
  }
  for (const auto& m : masks) {
    if (static_cast<std::size_t>(m.width()) != s.w || static_cast<std::size_t>(m.height()) != s.h) {
      throw Error(ErrorKind::ShapeMismatch, "mask dims do not match logits " + to_string(s));
    }
  }
  if (normalizer == 0) throw Error(ErrorKind::AllPixelsIgnored, "every pixel is Ignore");

  LossResult<T> r;
  r.grad = Tensor<T>(s);
  const double inv = 1.0 / static_cast<double>(normalizer);
  double total = 0.0;
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z0 = logits.item(n);
    const T* z1 = z0 + plane;
    T* g0 = r.grad.item(n);
    T* g1 = g0 + plane;
    const auto& mask = masks[n].values();
    for (std::size_t i = 0; i < plane; ++i) {
      if (mask[i] == MaskValue::Ignore) continue;
      ++r.counted;
      const double a = z0[i], b = z1[i];
      const double m = std::max(a, b);
      const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
      const double p1 = std::exp(b - lse);
      const double p0 = std::exp(a - lse);
      const bool target = mask[i] == MaskValue::Target;
      total += lse - (target ? b : a);
      g0[i] = static_cast<T>((p0 - (target ? 0.0 : 1.0)) * inv);
      g1[i] = static_cast<T>((p1 - (target ? 1.0 : 0.0)) * inv);
    }
  }
  r.loss = total * inv;
  return r;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const BinaryMask> masks) {
  return softmax_cross_entropy(logits, masks, count_scored_pixels(masks));
}

template <typename T>
void raster_to_tensor(const RgbRaster& raster, Tensor<T>& batch, std::size_t index) {
  const Shape& s = batch.shape();
  if (s.c != 3 || static_cast<std::size_t>(raster.width()) != s.w ||
      static_cast<std::size_t>(raster.height()) != s.h || index >= s.n) {
    throw Error(ErrorKind::ShapeMismatch, "raster does not fit batch " + to_string(s));
  }
  T* dst = batch.item(index);
  const auto& bytes = raster.bytes();
  const std::size_t plane = s.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      dst[c * plane + i] = static_cast<T>(bytes[i * 3 + c]) / T{255};
    }
  }
}

template <typename T>
Tensor<T> rasters_to_tensor(std::span<const RgbRaster> rasters) {
  if (rasters.empty()) throw Error(ErrorKind::ShapeMismatch, "empty raster batch");
  Tensor<T> batch({rasters.size(), 3, static_cast<std::size_t>(rasters[0].height()),
                   static_cast<std::size_t>(rasters[0].width())});
  for (std::size_t i = 0; i < rasters.size(); ++i) raster_to_tensor(rasters[i], batch, i);
  return batch;
}

template <typename T>
BinaryMask argmax_mask(const Tensor<T>& logits, std::size_t index) {
  const Shape& s = logits.shape();
  if (s.c != kNumOutputs || index >= s.n) {
    throw Error(ErrorKind::ShapeMismatch, "argmax needs 2-channel logits");
  }
  BinaryMask mask(static_cast<int>(s.w), static_cast<int>(s.h), MaskValue::Other);
  const T* z0 = logits.item(index);
  const T* z1 = z0 + s.plane();
  auto& out = mask.values();
  for (std::size_t i = 0; i < s.plane(); ++i) {
    if (z1[i] > z0[i]) out[i] = MaskValue::Target;
  }
  return mask;
}

#define LULC_INSTANTIATE_FCN8(T)                                                              \
  template struct Gradients<T>;                                                               \
  template class BasicFcn8<T>;                                                                \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&, std::span<const BinaryMask>); \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&, std::span<const BinaryMask>, \
                                               std::size_t);                                  \
  template void raster_to_tensor(const RgbRaster&, Tensor<T>&, std::size_t);                  \
  template Tensor<T> rasters_to_tensor(std::span<const RgbRaster>);                           \
  template BinaryMask argmax_mask(const Tensor<T>&, std::size_t);

LULC_INSTANTIATE_FCN8(float)
LULC_INSTANTIATE_FCN8(double)

template BasicFcn8<double> BasicFcn8<float>::cast<double>() const;
template BasicFcn8<float> BasicFcn8<double>::cast<float>() const;

#undef LULC_INSTANTIATE_FCN8

}  // namespace lulc
