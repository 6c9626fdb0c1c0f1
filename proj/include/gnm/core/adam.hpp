#pragma once

#include <cmath>
#include <vector>

#include "gnm/core/nn.hpp"

namespace gnm {

// Adam with global-norm clipping and a skip policy for non-finite
// gradients: step() returns false and leaves parameters untouched when
// any gradient element is not finite.
template <class T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(const ParamStore<T>& ps, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
                T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, v] : ps.entries())
      slots_.push_back({Tensor<T>::zeros(v->value.shape()), Tensor<T>::zeros(v->value.shape())});
  }

  bool step(ParamStore<T>& ps, T clip_norm) {
    double sq = 0.0;
    for (auto& [name, v] : ps.entries()) {
      if (!v->grad.defined()) continue;
      for (int64_t i = 0; i < v->grad.size(); ++i) {
        double g = static_cast<double>(v->grad[i]);
        if (!std::isfinite(g)) return false;
        sq += g * g;
      }
    }
    double norm = std::sqrt(sq);
    T scale = T(1);
    if (clip_norm > T(0) && norm > static_cast<double>(clip_norm))
      scale = static_cast<T>(static_cast<double>(clip_norm) / norm);
    ++t_;
    T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), t_));
    T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), t_));
    size_t k = 0;
    for (auto& [name, v] : ps.entries()) {
      Slot& s = slots_[k++];
      if (!v->grad.defined()) continue;
      for (int64_t i = 0; i < v->value.size(); ++i) {
        T g = v->grad[i] * scale;
        s.m[i] = beta1_ * s.m[i] + (T(1) - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (T(1) - beta2_) * g * g;
        T mhat = s.m[i] / bc1;
        T vhat = s.v[i] / bc2;
        v->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
    last_grad_norm_ = norm;
    return true;
  }

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  double last_grad_norm() const { return last_grad_norm_; }
  T lr() const { return lr_; }

  struct Slot {
    Tensor<T> m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<Slot> slots_;
  T lr_ = T(1e-4), beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
  int64_t t_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace gnm
