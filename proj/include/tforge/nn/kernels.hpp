#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <vector>

#include <Eigen/Core>

#include "tforge/errors.hpp"
#include "tforge/tensor.hpp"
#include "tforge/threading.hpp"

// Forward/backward compute kernels. Convolutions run per sample as
// im2col + GEMM (Eigen supplies the matrix product); everything that
// parallelizes does so over fixed work units so results do not depend on the
// worker count. Reductions over the batch run serially in index order.
namespace tforge::nn::kernels {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;
template <typename T>
using MapV = Eigen::Map<Vec<T>>;
template <typename T>
using MapCV = Eigen::Map<const Vec<T>>;

inline constexpr std::size_t kElemChunk = 1 << 16;

namespace detail {

// col has 9*c_in rows of h*w entries: row (ci*9 + ky*3 + kx) holds the input
// plane ci shifted by (ky-1, kx-1) with zero padding.
template <typename T>
void im2col_3x3(const T* x, int c_in, int h, int w, T* col) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c_in; ++ci) {
    const T* src_plane = x + static_cast<std::size_t>(ci) * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * plane;
        for (int y = 0; y < h; ++y) {
          int ys = y + ky - 1;
          T* drow = dst + static_cast<std::size_t>(y) * w;
          if (ys < 0 || ys >= h) {
            std::memset(drow, 0, sizeof(T) * static_cast<std::size_t>(w));
            continue;
          }
          const T* srow = src_plane + static_cast<std::size_t>(ys) * w;
          if (kx == 0) {
            drow[0] = T(0);
            std::memcpy(drow + 1, srow, sizeof(T) * static_cast<std::size_t>(w - 1));
          } else if (kx == 1) {
            std::memcpy(drow, srow, sizeof(T) * static_cast<std::size_t>(w));
          } else {
            std::memcpy(drow, srow + 1, sizeof(T) * static_cast<std::size_t>(w - 1));
            drow[w - 1] = T(0);
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds column gradients back onto the image.
template <typename T>
void col2im_3x3_add(const T* col, int c_in, int h, int w, T* dx) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c_in; ++ci) {
    T* dst_plane = dx + static_cast<std::size_t>(ci) * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * plane;
        for (int y = 0; y < h; ++y) {
          int ys = y + ky - 1;
          if (ys < 0 || ys >= h) continue;
          const T* srow = src + static_cast<std::size_t>(y) * w;
          T* drow = dst_plane + static_cast<std::size_t>(ys) * w;
          if (kx == 0) {
            for (int xp = 1; xp < w; ++xp) drow[xp - 1] += srow[xp];
          } else if (kx == 1) {
            for (int xp = 0; xp < w; ++xp) drow[xp] += srow[xp];
          } else {
            for (int xp = 0; xp < w - 1; ++xp) drow[xp + 1] += srow[xp];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---- 3x3 convolution, stride 1, zero padding 1 ("same") ----

template <typename T>
void conv3x3_check(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b) {
  if (wt.h != 3 || wt.w != 3) throw ShapeMismatch("conv3x3 kernel must be 3x3");
  if (x.c != wt.c)
    throw ShapeMismatch("conv3x3 input channels " + std::to_string(x.c) +
                        " do not match kernel channels " + std::to_string(wt.c));
  if (b.c != wt.n || b.n != 1 || b.h != 1 || b.w != 1)
    throw ShapeMismatch("conv3x3 bias shape must be (1,c_out,1,1)");
}

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b) {
  conv3x3_check(x, wt, b);
  const int c_out = wt.n, c_in = x.c, h = x.h, w = x.w;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor<T> out(x.n, c_out, h, w);
  threading::parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
    AlignedVector<T> col(static_cast<std::size_t>(9) * c_in * hw);
    detail::im2col_3x3(x.sample(static_cast<int>(s)), c_in, h, w, col.data());
    MapCM<T> wm(wt.data(), c_out, 9 * c_in);
    MapCM<T> cm(col.data(), 9 * c_in, static_cast<Eigen::Index>(hw));
    MapM<T> om(out.sample(static_cast<int>(s)), c_out, static_cast<Eigen::Index>(hw));
    om.noalias() = wm * cm;
    om.colwise() += MapCV<T>(b.data(), c_out);
  });
  return out;
}

template <typename T>
void conv3x3_backward(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& dy,
                      Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int c_out = wt.n, c_in = x.c, h = x.h, w = x.w;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t wsz = static_cast<std::size_t>(c_out) * 9 * c_in;
  AlignedVector<T> dw_parts;
  if (dw) dw_parts.assign(static_cast<std::size_t>(x.n) * wsz, T(0));
  threading::parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
    MapCM<T> dym(dy.sample(static_cast<int>(s)), c_out, static_cast<Eigen::Index>(hw));
    AlignedVector<T> col(static_cast<std::size_t>(9) * c_in * hw);
    detail::im2col_3x3(x.sample(static_cast<int>(s)), c_in, h, w, col.data());
    MapCM<T> cm(col.data(), 9 * c_in, static_cast<Eigen::Index>(hw));
    if (dw) {
      MapM<T> dwp(dw_parts.data() + s * wsz, c_out, 9 * c_in);
      dwp.noalias() = dym * cm.transpose();
    }
    if (dx) {
      AlignedVector<T> dcol(static_cast<std::size_t>(9) * c_in * hw);
      MapM<T> dcm(dcol.data(), 9 * c_in, static_cast<Eigen::Index>(hw));
      MapCM<T> wm(wt.data(), c_out, 9 * c_in);
      dcm.noalias() = wm.transpose() * dym;
      detail::col2im_3x3_add(dcol.data(), c_in, h, w, dx->sample(static_cast<int>(s)));
    }
  });
  if (dw) {
    MapM<T> dwm(dw->data(), c_out, 9 * c_in);
    for (int s = 0; s < x.n; ++s)
      dwm += MapCM<T>(dw_parts.data() + static_cast<std::size_t>(s) * wsz, c_out, 9 * c_in);
  }
  if (db) {
    for (int s = 0; s < x.n; ++s) {
      MapCM<T> dym(dy.sample(s), c_out, static_cast<Eigen::Index>(hw));
      MapV<T>(db->data(), c_out) += dym.rowwise().sum();
    }
  }
}

// ---- 1x1 convolution ----

template <typename T>
void conv1x1_check(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b) {
  if (wt.h != 1 || wt.w != 1) throw ShapeMismatch("conv1x1 kernel must be 1x1");
  if (x.c != wt.c)
    throw ShapeMismatch("conv1x1 input channels " + std::to_string(x.c) +
                        " do not match kernel channels " + std::to_string(wt.c));
  if (b.c != wt.n || b.n != 1 || b.h != 1 || b.w != 1)
    throw ShapeMismatch("conv1x1 bias shape must be (1,c_out,1,1)");
}

template <typename T>
Tensor<T> conv1x1_forward(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b) {
  conv1x1_check(x, wt, b);
  const int c_out = wt.n, c_in = x.c;
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  Tensor<T> out(x.n, c_out, x.h, x.w);
  threading::parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
    MapCM<T> wm(wt.data(), c_out, c_in);
    MapCM<T> xm(x.sample(static_cast<int>(s)), c_in, static_cast<Eigen::Index>(hw));
    MapM<T> om(out.sample(static_cast<int>(s)), c_out, static_cast<Eigen::Index>(hw));
    om.noalias() = wm * xm;
    om.colwise() += MapCV<T>(b.data(), c_out);
  });
  return out;
}

template <typename T>
void conv1x1_backward(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& dy,
                      Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int c_out = wt.n, c_in = x.c;
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t wsz = static_cast<std::size_t>(c_out) * c_in;
  AlignedVector<T> dw_parts;
  if (dw) dw_parts.assign(static_cast<std::size_t>(x.n) * wsz, T(0));
  threading::parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
    MapCM<T> dym(dy.sample(static_cast<int>(s)), c_out, static_cast<Eigen::Index>(hw));
    if (dw) {
      MapCM<T> xm(x.sample(static_cast<int>(s)), c_in, static_cast<Eigen::Index>(hw));
      MapM<T> dwp(dw_parts.data() + s * wsz, c_out, c_in);
      dwp.noalias() = dym * xm.transpose();
    }
    if (dx) {
      MapCM<T> wm(wt.data(), c_out, c_in);
      MapM<T> dxm(dx->sample(static_cast<int>(s)), c_in, static_cast<Eigen::Index>(hw));
      dxm.noalias() += wm.transpose() * dym;
    }
  });
  if (dw) {
    MapM<T> dwm(dw->data(), c_out, c_in);
    for (int s = 0; s < x.n; ++s)
      dwm += MapCM<T>(dw_parts.data() + static_cast<std::size_t>(s) * wsz, c_out, c_in);
  }
  if (db) {
    for (int s = 0; s < x.n; ++s) {
      MapCM<T> dym(dy.sample(s), c_out, static_cast<Eigen::Index>(hw));
      MapV<T>(db->data(), c_out) += dym.rowwise().sum();
    }
  }
}

// ---- 2x2 max pooling, stride 2 ----

template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& x, std::vector<std::uint8_t>& mask) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw OddSpatialDim("maxpool2x2 needs even spatial dims, got " + x.shape_string());
  const int oh = x.h / 2, ow = x.w / 2;
  Tensor<T> out(x.n, x.c, oh, ow);
  mask.assign(out.size(), 0);
  threading::parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
    for (int ci = 0; ci < x.c; ++ci)
      for (int y = 0; y < oh; ++y)
        for (int xp = 0; xp < ow; ++xp) {
          // first-max convention on ties
          T best = x.at(static_cast<int>(s), ci, 2 * y, 2 * xp);
          std::uint8_t arg = 0;
          const T cands[3] = {x.at(static_cast<int>(s), ci, 2 * y, 2 * xp + 1),
                              x.at(static_cast<int>(s), ci, 2 * y + 1, 2 * xp),
                              x.at(static_cast<int>(s), ci, 2 * y + 1, 2 * xp + 1)};
          for (std::uint8_t k = 0; k < 3; ++k)
            if (cands[k] > best) {
              best = cands[k];
              arg = static_cast<std::uint8_t>(k + 1);
            }
          out.at(static_cast<int>(s), ci, y, xp) = best;
          mask[((static_cast<std::size_t>(s) * x.c + ci) * oh + y) * ow + xp] = arg;
        }
  });
  return out;
}

template <typename T>
void maxpool2x2_backward(const std::vector<std::uint8_t>& mask, const Tensor<T>& dy,
                         Tensor<T>& dx) {
  const int oh = dy.h, ow = dy.w;
  threading::parallel_for(static_cast<std::size_t>(dy.n), [&](std::size_t s) {
    for (int ci = 0; ci < dy.c; ++ci)
      for (int y = 0; y < oh; ++y)
        for (int xp = 0; xp < ow; ++xp) {
          std::uint8_t arg =
              mask[((static_cast<std::size_t>(s) * dy.c + ci) * oh + y) * ow + xp];
          int yy = 2 * y + (arg >> 1), xx = 2 * xp + (arg & 1);
          dx.at(static_cast<int>(s), ci, yy, xx) += dy.at(static_cast<int>(s), ci, y, xp);
        }
  });
}

// ---- nearest-neighbour 2x upsampling ----

template <typename T>
Tensor<T> upsample2x_forward(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, 2 * x.h, 2 * x.w);
  threading::parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
    for (int ci = 0; ci < x.c; ++ci)
      for (int y = 0; y < out.h; ++y)
        for (int xp = 0; xp < out.w; ++xp)
          out.at(static_cast<int>(s), ci, y, xp) =
              x.at(static_cast<int>(s), ci, y / 2, xp / 2);
  });
  return out;
}

template <typename T>
void upsample2x_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  threading::parallel_for(static_cast<std::size_t>(dy.n), [&](std::size_t s) {
    for (int ci = 0; ci < dx.c; ++ci)
      for (int y = 0; y < dx.h; ++y)
        for (int xp = 0; xp < dx.w; ++xp)
          dx.at(static_cast<int>(s), ci, y, xp) +=
              dy.at(static_cast<int>(s), ci, 2 * y, 2 * xp) +
              dy.at(static_cast<int>(s), ci, 2 * y, 2 * xp + 1) +
              dy.at(static_cast<int>(s), ci, 2 * y + 1, 2 * xp) +
              dy.at(static_cast<int>(s), ci, 2 * y + 1, 2 * xp + 1);
  });
}

// ---- fully connected layer ----
// Rows are processed per sample (matrix-vector products) so inference of a
// sample does not depend on its batch neighbours, bit for bit.

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b) {
  const int d_in = wt.c, d_out = wt.n;
  if (static_cast<int>(x.sample_size()) != d_in)
    throw ShapeMismatch("dense input size " + std::to_string(x.sample_size()) +
                        " does not match weight columns " + std::to_string(d_in));
  if (b.c != d_out || b.n != 1 || b.h != 1 || b.w != 1)
    throw ShapeMismatch("dense bias shape must be (1,d_out,1,1)");
  Tensor<T> out(x.n, d_out, 1, 1);
  threading::parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
    MapCM<T> wm(wt.data(), d_out, d_in);
    MapCV<T> xv(x.sample(static_cast<int>(s)), d_in);
    MapV<T> ov(out.sample(static_cast<int>(s)), d_out);
    ov.noalias() = wm * xv;
    ov += MapCV<T>(b.data(), d_out);
  });
  return out;
}

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& dy,
                    Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int d_in = wt.c, d_out = wt.n, n = x.n;
  if (dx) {
    threading::parallel_for(static_cast<std::size_t>(n), [&](std::size_t s) {
      MapCM<T> wm(wt.data(), d_out, d_in);
      MapCV<T> dyv(dy.sample(static_cast<int>(s)), d_out);
      MapV<T> dxv(dx->sample(static_cast<int>(s)), d_in);
      dxv.noalias() += wm.transpose() * dyv;
    });
  }
  if (dw && n > 0) {
    MapCM<T> dym(dy.data(), n, d_out);
    MapCM<T> xm(x.data(), n, d_in);
    constexpr int kRowTile = 64;
    std::size_t tiles = (static_cast<std::size_t>(d_out) + kRowTile - 1) / kRowTile;
    threading::parallel_for(tiles, [&](std::size_t t) {
      int r0 = static_cast<int>(t) * kRowTile;
      int len = std::min(kRowTile, d_out - r0);
      MapM<T> dwm(dw->data(), d_out, d_in);
      dwm.middleRows(r0, len).noalias() += dym.middleCols(r0, len).transpose() * xm;
    });
  }
  if (db && n > 0) {
    MapCM<T> dym(dy.data(), n, d_out);
    MapV<T>(db->data(), d_out) += dym.colwise().sum().transpose();
  }
}

// ---- elementwise activations ----

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, x.h, x.w);
  threading::parallel_chunks(x.size(), kElemChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
  });
  return out;
}

template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
  threading::parallel_chunks(x.size(), kElemChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      if (x.v[i] > T(0)) dx.v[i] += dy.v[i];
  });
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, x.h, x.w);
  threading::parallel_chunks(x.size(), kElemChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      T v = x.v[i];
      if (v >= T(0)) {
        out.v[i] = T(1) / (T(1) + std::exp(-v));
      } else {
        T ev = std::exp(v);
        out.v[i] = ev / (T(1) + ev);
      }
    }
  });
  return out;
}

template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  threading::parallel_chunks(y.size(), kElemChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) dx.v[i] += dy.v[i] * y.v[i] * (T(1) - y.v[i]);
  });
}

// ---- binary cross entropy, mean over all elements ----

inline constexpr double kBceEps = 1e-7;

template <typename T>
T bce_forward(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.same_shape(target))
    throw ShapeMismatch("bce shapes differ: (" + pred.shape_string() + ") vs (" +
                        target.shape_string() + ")");
  if (pred.size() == 0) throw ShapeMismatch("bce on empty tensor");
  double sum = 0.0;  // serial accumulation, fixed order
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double p = static_cast<double>(pred.v[i]);
    p = std::min(std::max(p, kBceEps), 1.0 - kBceEps);
    double t = static_cast<double>(target.v[i]);
    sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return static_cast<T>(sum / static_cast<double>(pred.size()));
}

template <typename T>
void bce_backward(const Tensor<T>& pred, const Tensor<T>& target, T upstream,
                  Tensor<T>& dpred) {
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  threading::parallel_chunks(pred.size(), kElemChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double p = static_cast<double>(pred.v[i]);
      if (p < kBceEps || p > 1.0 - kBceEps) continue;  // clamped region
      double t = static_cast<double>(target.v[i]);
      dpred.v[i] += static_cast<T>(static_cast<double>(upstream) * (p - t) / (p * (1.0 - p)) * inv_n);
    }
  });
}

// ---- channel concatenation ----

template <typename T>
Tensor<T> concat_channels_forward(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw ShapeMismatch("concat operands disagree: (" + a.shape_string() + ") vs (" +
                        b.shape_string() + ")");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  const std::size_t asz = a.sample_size(), bsz = b.sample_size();
  threading::parallel_for(static_cast<std::size_t>(a.n), [&](std::size_t s) {
    std::memcpy(out.sample(static_cast<int>(s)), a.sample(static_cast<int>(s)),
                sizeof(T) * asz);
    std::memcpy(out.sample(static_cast<int>(s)) + asz, b.sample(static_cast<int>(s)),
                sizeof(T) * bsz);
  });
  return out;
}

template <typename T>
void concat_channels_backward(const Tensor<T>& dy, Tensor<T>* da, Tensor<T>* db_) {
  const std::size_t asz = da ? da->sample_size() : 0;
  threading::parallel_for(static_cast<std::size_t>(dy.n), [&](std::size_t s) {
    const T* src = dy.sample(static_cast<int>(s));
    if (da) {
      T* d = da->sample(static_cast<int>(s));
      for (std::size_t i = 0; i < asz; ++i) d[i] += src[i];
    }
    if (db_) {
      T* d = db_->sample(static_cast<int>(s));
      const std::size_t bsz = db_->sample_size();
      for (std::size_t i = 0; i < bsz; ++i) d[i] += src[asz + i];
    }
  });
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  std::atomic<bool> ok{true};
  threading::parallel_chunks(t.size(), kElemChunk, [&](std::size_t b, std::size_t e) {
    if (!ok.load(std::memory_order_relaxed)) return;
    for (std::size_t i = b; i < e; ++i)
      if (!std::isfinite(static_cast<double>(t.v[i]))) {
        ok.store(false, std::memory_order_relaxed);
        return;
      }
  });
  return ok.load();
}

}  // namespace tforge::nn::kernels
