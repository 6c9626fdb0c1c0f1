#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gnm/core/graph.hpp"
#include "gnm/core/ops.hpp"

namespace gnm::testutil {

// Central finite differences against reverse-mode gradients for a
// scalar-valued function of a set of leaf tensors. Returns the largest
// relative error over all checked coordinates.
template <class T>
double grad_check(const std::function<Var<T>(const std::vector<Var<T>>&)>& fn,
                  std::vector<Var<T>> leaves, T h = T(1e-5), int max_coords_per_leaf = 24) {
  Var<T> out = fn(leaves);
  backward(out);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    if (!leaf->requires_grad) continue;
    int64_t n = leaf->value.size();
    int64_t step = std::max<int64_t>(1, n / max_coords_per_leaf);
    for (int64_t i = 0; i < n; i += step) {
      T saved = leaf->value[i];
      leaf->value[i] = saved + h;
      T fplus = fn(leaves)->value[0];
      leaf->value[i] = saved - h;
      T fminus = fn(leaves)->value[0];
      leaf->value[i] = saved;
      double fd = (static_cast<double>(fplus) - static_cast<double>(fminus)) /
                  (2.0 * static_cast<double>(h));
      double an = leaf->grad.defined() ? static_cast<double>(leaf->grad[i]) : 0.0;
      double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

template <class T>
bool tensors_close(const Tensor<T>& a, const Tensor<T>& b, double tol) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) > tol) return false;
  return true;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace gnm::testutil
