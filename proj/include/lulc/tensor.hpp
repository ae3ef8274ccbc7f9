#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "lulc/error.hpp"

namespace lulc {

/// 64-byte aligned storage. Eigen's vectorised kernels pick their peeling
/// split from the pointer alignment, so buffers whose alignment varied with
/// the heap would round differently from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// NCHW extents.
struct Shape {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const noexcept { return n * c * h * w; }
  std::size_t item_size() const noexcept { return c * h * w; }
  std::size_t plane() const noexcept { return h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense row-major NCHW array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, const std::vector<T>& data)
      : shape_(shape), data_(data.begin(), data.end()) {
    if (data_.size() != shape_.size()) {
      throw Error(ErrorKind::ShapeMismatch, "tensor data length does not match shape " +
                                                to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T* item(std::size_t i) noexcept { return data_.data() + i * shape_.item_size(); }
  const T* item(std::size_t i) const noexcept { return data_.data() + i * shape_.item_size(); }

  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  T operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  /// Copy of items [begin, end) as a new tensor.
  Tensor slice(std::size_t begin, std::size_t end) const {
    Shape s = shape_;
    s.n = end - begin;
    Tensor out(s);
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * shape_.item_size()),
              data_.begin() + static_cast<std::ptrdiff_t>(end * shape_.item_size()), out.data_.begin());
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

}  // namespace lulc
