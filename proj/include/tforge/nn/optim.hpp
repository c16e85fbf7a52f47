#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tforge/errors.hpp"
#include "tforge/nn/graph.hpp"
#include "tforge/threading.hpp"

namespace tforge::nn {

template <typename T>
struct AdamConfig {
  T lr = static_cast<T>(1e-3);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
};

// Adam with bias correction. One shared step counter; moment buffers live on
// the parameters so checkpoints can carry them.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig<T> cfg = {}) : cfg_(cfg) {}

  const AdamConfig<T>& config() const { return cfg_; }
  std::uint64_t step_count() const { return t_; }
  void set_step_count(std::uint64_t t) { t_ = t; }

  void step(std::span<Param<T>* const> params) {
    ++t_;
    const T c1 = static_cast<T>(1.0 - std::pow(static_cast<double>(cfg_.beta1),
                                               static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(static_cast<double>(cfg_.beta2),
                                               static_cast<double>(t_)));
    for (Param<T>* p : params) {
      if (!p->has_grad)
        throw MissingGradient("parameter '" + p->name + "' has no gradient");
      if (p->m.size() != p->value.size()) {
        p->m = Tensor<T>(p->value.n, p->value.c, p->value.h, p->value.w);
        p->v = Tensor<T>(p->value.n, p->value.c, p->value.h, p->value.w);
      }
      T* val = p->value.data();
      T* g = p->grad.data();
      T* m = p->m.data();
      T* v = p->v.data();
      const T b1 = cfg_.beta1, b2 = cfg_.beta2, lr = cfg_.lr, eps = cfg_.eps;
      threading::parallel_chunks(p->value.size(), kernels::kElemChunk,
                                 [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          m[i] = b1 * m[i] + (T(1) - b1) * g[i];
          v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
          T mhat = m[i] / c1;
          T vhat = v[i] / c2;
          val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
      });
    }
  }

 private:
  AdamConfig<T> cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace tforge::nn
