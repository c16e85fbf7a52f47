#pragma once

#include <array>
#include <cstddef>
#include <cstdlib>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "tforge/errors.hpp"
#include "tforge/image.hpp"

namespace tforge::nn {

// 64-byte aligned storage for everything the Eigen kernels touch. Keeping a
// fixed alignment phase keeps the vectorized accumulation order (and so the
// rounding) identical from run to run.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;

  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}

  T* allocate(std::size_t n) {
    std::size_t bytes = (n * sizeof(T) + Align - 1) / Align * Align;
    if (bytes == 0) bytes = Align;
    void* p = std::aligned_alloc(Align, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }

  template <typename U>
  bool operator==(const AlignedAllocator<U, Align>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Rank-4 array (batch, channel, height, width), row-major contiguous.
// T is float for training, double for gradient verification.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  AlignedVector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {
    if (n_ < 0 || c_ <= 0 || h_ <= 0 || w_ <= 0)
      throw ShapeMismatch("bad tensor shape (" + shape_string() + ")");
  }

  std::size_t size() const { return v.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T* sample(int i) { return v.data() + static_cast<std::size_t>(i) * sample_size(); }
  const T* sample(int i) const {
    return v.data() + static_cast<std::size_t>(i) * sample_size();
  }

  T& at(int ni, int ci, int yi, int xi) {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + yi) * w + xi];
  }
  T at(int ni, int ci, int yi, int xi) const {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + yi) * w + xi];
  }

  std::array<int, 4> shape() const { return {n, c, h, w}; }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_string() const {
    return std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w);
  }

  bool operator==(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w && v == o.v;
  }
};

template <typename T>
Tensor<T> batch_from_images(std::span<const image::Image> images) {
  if (images.empty()) throw ShapeMismatch("empty image batch");
  Tensor<T> t(static_cast<int>(images.size()), 1, images[0].height, images[0].width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height != t.h || images[i].width != t.w)
      throw ShapeMismatch("images in a batch must share dimensions");
    for (std::size_t k = 0; k < images[i].pixels.size(); ++k)
      t.sample(static_cast<int>(i))[k] = static_cast<T>(images[i].pixels[k]);
  }
  return t;
}

template <typename T>
std::vector<image::Image> batch_to_images(const Tensor<T>& t) {
  if (t.c != 1) throw ShapeMismatch("expected a single-channel tensor");
  std::vector<image::Image> out;
  out.reserve(static_cast<std::size_t>(t.n));
  for (int i = 0; i < t.n; ++i) {
    image::Image img(t.h, t.w);
    const T* src = t.sample(i);
    for (std::size_t k = 0; k < img.pixels.size(); ++k)
      img.pixels[k] = static_cast<float>(src[k]);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace tforge::nn
