#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "fsr/errors.hpp"
#include "fsr/image.hpp"

namespace fsr {

/// Allocator with a fixed 64-byte start address. Eigen's vectorized
/// reductions split work by pointer alignment, so buffers it maps must start
/// on the same boundary in every run for training to be bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Channel-planar C x H x W feature grid used inside the network. Unlike
/// Image, values are unrestricted reals.
template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  AlignedVector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }
  T* plane(int c) { return data.data() + c * plane_size(); }
  const T* plane(int c) const { return data.data() + c * plane_size(); }
  T& operator()(int c, int r, int col) { return data[c * plane_size() + static_cast<std::size_t>(r) * width + col]; }
  T operator()(int c, int r, int col) const {
    return data[c * plane_size() + static_cast<std::size_t>(r) * width + col];
  }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

template <typename T>
Tensor<T> to_tensor(const Image& img) {
  Tensor<T> t(img.channels(), img.height(), img.width());
  const std::size_t plane = t.plane_size();
  const auto src = img.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < img.channels(); ++c) t.data[c * plane + i] = static_cast<T>(src[i * img.channels() + c]);
  }
  return t;
}

/// Clamps to [0, 1] and converts back to an interleaved Image (export path).
template <typename T>
Image finalize_image(const Tensor<T>& t) {
  const std::size_t plane = t.plane_size();
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < t.channels; ++c) out[i * t.channels + c] = static_cast<double>(t.data[c * plane + i]);
  }
  return image_from_clamped(t.height, t.width, t.channels, std::move(out));
}

}  // namespace fsr
