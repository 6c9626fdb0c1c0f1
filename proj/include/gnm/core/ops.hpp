#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <utility>
#include <vector>

#include "gnm/core/graph.hpp"
#include "gnm/core/tensor.hpp"

namespace gnm {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using MapCM = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------------------
// raw tensor helpers (no autodiff)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (size_t i = 0; i < n; ++i) {
    int da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    int db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

namespace detail {

// Row-major strides with 0 on broadcast dims, aligned to `out` rank.
inline std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t s = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    size_t oi = out.size() - in.size() + static_cast<size_t>(i);
    strides[oi] = (in[static_cast<size_t>(i)] == 1) ? 0 : s;
    s *= in[static_cast<size_t>(i)];
  }
  return strides;
}

}  // namespace detail

template <class T, class F>
Tensor<T> bcast_apply(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {  // fast path
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(os);
  auto sa = detail::bcast_strides(a.shape(), os);
  auto sb = detail::bcast_strides(b.shape(), os);
  int nd = static_cast<int>(os.size());
  std::vector<int> idx(static_cast<size_t>(nd), 0);
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  int64_t n = out.size();
  int64_t oa = 0, ob = 0;
  for (int64_t i = 0; i < n; ++i) {
    po[i] = f(pa[oa], pb[ob]);
    for (int d = nd - 1; d >= 0; --d) {
      idx[static_cast<size_t>(d)]++;
      oa += sa[static_cast<size_t>(d)];
      ob += sb[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
      oa -= sa[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
      ob -= sb[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
    }
  }
  return out;
}

// Sum `g` down to `target` shape (inverse of broadcasting).
template <class T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor<T> out(target);
  auto st = detail::bcast_strides(target, g.shape());
  const Shape& gs = g.shape();
  int nd = static_cast<int>(gs.size());
  std::vector<int> idx(static_cast<size_t>(nd), 0);
  const T* pg = g.data();
  T* po = out.data();
  int64_t n = g.size();
  int64_t ot = 0;
  for (int64_t i = 0; i < n; ++i) {
    po[ot] += pg[i];
    for (int d = nd - 1; d >= 0; --d) {
      idx[static_cast<size_t>(d)]++;
      ot += st[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < gs[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
      ot -= st[static_cast<size_t>(d)] * gs[static_cast<size_t>(d)];
    }
  }
  return out;
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.size() != src.size()) throw ShapeError("accumulate size mismatch");
  T* pd = dst.data();
  const T* ps = src.data();
  int64_t n = dst.size();
  for (int64_t i = 0; i < n; ++i) pd[i] += ps[i];
}

template <class T>
void accumulate_reduced(Tensor<T>& dst, const Tensor<T>& g) {
  if (dst.shape() == g.shape()) {
    accumulate(dst, g);
  } else {
    accumulate(dst, reduce_to_shape(g, dst.shape()));
  }
}

// ---------------------------------------------------------------------------
// elementwise autodiff ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> value = bcast_apply(a->value, b->value, [](T x, T y) { return x + y; });
  return make_op<T>(std::move(value), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) accumulate_reduced(a->grad_buffer(), n.grad);
    if (b->requires_grad) accumulate_reduced(b->grad_buffer(), n.grad);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tensor<T> value = bcast_apply(a->value, b->value, [](T x, T y) { return x - y; });
  return make_op<T>(std::move(value), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) accumulate_reduced(a->grad_buffer(), n.grad);
    if (b->requires_grad) {
      Tensor<T> neg(n.grad.shape());
      for (int64_t i = 0; i < neg.size(); ++i) neg[i] = -n.grad[i];
      accumulate_reduced(b->grad_buffer(), neg);
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> value = bcast_apply(a->value, b->value, [](T x, T y) { return x * y; });
  return make_op<T>(std::move(value), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad)
      accumulate_reduced(a->grad_buffer(),
                         bcast_apply(n.grad, b->value, [](T g, T y) { return g * y; }));
    if (b->requires_grad)
      accumulate_reduced(b->grad_buffer(),
                         bcast_apply(n.grad, a->value, [](T g, T x) { return g * x; }));
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  Tensor<T> value = bcast_apply(a->value, b->value, [](T x, T y) { return x / y; });
  return make_op<T>(std::move(value), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad)
      accumulate_reduced(a->grad_buffer(),
                         bcast_apply(n.grad, b->value, [](T g, T y) { return g / y; }));
    if (b->requires_grad) {
      Tensor<T> q = bcast_apply(a->value, b->value, [](T x, T y) { return -x / (y * y); });
      accumulate_reduced(b->grad_buffer(),
                         bcast_apply(n.grad, q, [](T g, T d) { return g * d; }));
    }
  });
}

// dy(x) must compute the local derivative from (x, y).
template <class T, class F, class DF>
Var<T> unary_op(const Var<T>& x, F f, DF dy) {
  Tensor<T> value(x->value.shape());
  const T* px = x->value.data();
  T* pv = value.data();
  int64_t n = value.size();
  for (int64_t i = 0; i < n; ++i) pv[i] = f(px[i]);
  return make_op<T>(std::move(value), {x}, [x, dy](Node<T>& n2) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->grad_buffer();
    const T* px2 = x->value.data();
    const T* pv2 = n2.value.data();
    const T* pg = n2.grad.data();
    T* pgx = gx.data();
    int64_t m = n2.value.size();
    for (int64_t i = 0; i < m; ++i) pgx[i] += pg[i] * dy(px2[i], pv2[i]);
  });
}

template <class T>
Var<T> neg(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> exp_op(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log_op(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var<T> sqrt_op(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::sqrt(v); },
      [](T, T y) { return T(0.5) / y; });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
inline T sigmoid_scalar(T v) {
  if (v >= T(0)) {
    T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(v);
  return e / (T(1) + e);
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return sigmoid_scalar(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> tanh_op(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <class T>
inline T softplus_scalar(T v) {
  // log(1 + exp(v)) without overflow
  if (v > T(20)) return v;
  if (v < T(-20)) return std::exp(v);
  return std::log1p(std::exp(v));
}

template <class T>
Var<T> softplus(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return softplus_scalar(v); },
      [](T v, T) { return sigmoid_scalar(v); });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// CELU with alpha = 1 (equals ELU).
template <class T>
Var<T> celu(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T v, T y) { return v > T(0) ? T(1) : y + T(1); });
}

template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return unary_op(
      x, [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// min(x, c): gradient passes where x is below the cap.
template <class T>
Var<T> min_scalar(const Var<T>& x, T c) {
  return unary_op(
      x, [c](T v) { return std::min(v, c); },
      [c](T v, T) { return v <= c ? T(1) : T(0); });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T s) {
  return unary_op(
      x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> mul_scalar(const Var<T>& x, T s) {
  return unary_op(
      x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> rsub_scalar(T s, const Var<T>& x) {
  return unary_op(
      x, [s](T v) { return s - v; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> pow_scalar(const Var<T>& x, T p) {
  return unary_op(
      x, [p](T v) { return std::pow(v, p); },
      [p](T v, T) { return p * std::pow(v, p - T(1)); });
}

// Convenience operators.
template <class T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <class T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <class T> Var<T> operator+(const Var<T>& a, T s) { return add_scalar(a, s); }
template <class T> Var<T> operator-(const Var<T>& a, T s) { return add_scalar(a, -s); }
template <class T> Var<T> operator*(const Var<T>& a, T s) { return mul_scalar(a, s); }
template <class T> Var<T> operator/(const Var<T>& a, T s) { return mul_scalar(a, T(1) / s); }
template <class T> Var<T> operator+(T s, const Var<T>& a) { return add_scalar(a, s); }
template <class T> Var<T> operator-(T s, const Var<T>& a) { return rsub_scalar(s, a); }
template <class T> Var<T> operator*(T s, const Var<T>& a) { return mul_scalar(a, s); }
template <class T> Var<T> operator-(const Var<T>& a) { return neg(a); }

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& x) {
  T acc = 0;
  for (int64_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return make_op<T>(Tensor<T>::scalar(acc), {x}, [x](Node<T>& n) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->grad_buffer();
    T g = n.grad[0];
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
  return mul_scalar(sum_all(x), T(1) / static_cast<T>(x->value.size()));
}

// Sum over a set of axes, keeping them as size-1 dims.
template <class T>
Var<T> sum_axes(const Var<T>& x, std::vector<int> axes) {
  Shape in = x->value.shape();
  Shape out = in;
  for (int& a : axes) {
    if (a < 0) a += static_cast<int>(in.size());
    out[static_cast<size_t>(a)] = 1;
  }
  Tensor<T> value = reduce_to_shape(x->value, out);
  return make_op<T>(std::move(value), {x}, [x](Node<T>& n) {
    if (!x->requires_grad) return;
    accumulate_reduced(x->grad_buffer(),
                       bcast_apply(n.grad, Tensor<T>::zeros(x->value.shape()),
                                   [](T g, T) { return g; }));
  });
}

// log(sum(exp(x), lastdim)), stable; output keeps the last dim as 1.
template <class T>
Var<T> logsumexp_lastdim(const Var<T>& x) {
  Shape in = x->value.shape();
  int d = in.back();
  int64_t rows = x->value.size() / d;
  Shape os = in;
  os.back() = 1;
  Tensor<T> value(os);
  const T* px = x->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    T mx = px[r * d];
    for (int i = 1; i < d; ++i) mx = std::max(mx, px[r * d + i]);
    T s = 0;
    for (int i = 0; i < d; ++i) s += std::exp(px[r * d + i] - mx);
    value[r] = mx + std::log(s);
  }
  return make_op<T>(std::move(value), {x}, [x, d, rows](Node<T>& n) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->grad_buffer();
    const T* px2 = x->value.data();
    const T* pv = n.value.data();
    const T* pg = n.grad.data();
    for (int64_t r = 0; r < rows; ++r)
      for (int i = 0; i < d; ++i)
        gx[r * d + i] += pg[r] * std::exp(px2[r * d + i] - pv[r]);
  });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> value = x->value.reshape(std::move(shape));
  return make_op<T>(std::move(value), {x}, [x](Node<T>& n) {
    if (!x->requires_grad) return;
    accumulate(x->grad_buffer(), n.grad.reshape(x->value.shape()));
  });
}

template <class T>
Var<T> flatten2(const Var<T>& x) {  // [B, ...] -> [B, rest]
  int b = x->value.dim(0);
  return reshape(x, {b, static_cast<int>(x->value.size() / b)});
}

namespace detail {

// Walks the original index space; fn(flat_orig, flat_permuted).
template <class T, class Fn>
void permute_walk(const Shape& orig, const Shape& permuted, const std::vector<int>& perm,
                  Fn fn) {
  int nd = static_cast<int>(orig.size());
  std::vector<int64_t> ostr(static_cast<size_t>(nd));
  int64_t s = 1;
  for (int i = nd - 1; i >= 0; --i) {
    ostr[static_cast<size_t>(i)] = s;
    s *= permuted[static_cast<size_t>(i)];
  }
  std::vector<int> idx(static_cast<size_t>(nd), 0);
  int64_t n = shape_numel(orig);
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t oflat = 0;
    for (int d = 0; d < nd; ++d)  // permuted dim d takes original dim perm[d]
      oflat += static_cast<int64_t>(idx[static_cast<size_t>(perm[static_cast<size_t>(d)])]) *
               ostr[static_cast<size_t>(d)];
    fn(flat, oflat);
    for (int d = nd - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < orig[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

}  // namespace detail

// out dim d = in dim perm[d].
template <class T>
Var<T> permute(const Var<T>& x, std::vector<int> perm) {
  const Shape& is = x->value.shape();
  if (perm.size() != is.size()) throw ShapeError("permute rank mismatch");
  Shape os(perm.size());
  for (size_t d = 0; d < perm.size(); ++d) os[d] = is[static_cast<size_t>(perm[d])];
  Tensor<T> value(os);
  const T* pin = x->value.data();
  T* pout = value.data();
  detail::permute_walk<T>(is, os, perm,
                          [&](int64_t flat, int64_t oflat) { pout[oflat] = pin[flat]; });
  return make_op<T>(std::move(value), {x}, [x, perm, is, os](Node<T>& n) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->grad_buffer();
    const T* pg = n.grad.data();
    T* pgx = gx.data();
    detail::permute_walk<T>(is, os, perm,
                            [&](int64_t flat, int64_t oflat) { pgx[flat] += pg[oflat]; });
  });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of nothing");
  Shape os = xs[0]->value.shape();
  if (axis < 0) axis += static_cast<int>(os.size());
  int total = 0;
  for (const auto& x : xs) total += x->value.dim(axis);
  os[static_cast<size_t>(axis)] = total;
  Tensor<T> value(os);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < os.size(); ++i) inner *= os[i];
  int64_t orow = total * inner;
  int64_t off = 0;
  for (const auto& x : xs) {
    int64_t crow = x->value.dim(axis) * inner;
    const T* px = x->value.data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(value.data() + o * orow + off, px + o * crow,
                  static_cast<size_t>(crow) * sizeof(T));
    off += crow;
  }
  return make_op<T>(std::move(value), xs, [xs, outer, inner, total](Node<T>& n) {
    int64_t orow = static_cast<int64_t>(total) * inner;
    int64_t off = 0;
    for (const auto& x : xs) {
      int64_t crow = x->value.size() / outer;  // axis_len * inner
      if (x->requires_grad) {
        Tensor<T>& gx = x->grad_buffer();
        for (int64_t o = 0; o < outer; ++o) {
          const T* pg = n.grad.data() + o * orow + off;
          T* pgx = gx.data() + o * crow;
          for (int64_t i = 0; i < crow; ++i) pgx[i] += pg[i];
        }
      }
      off += crow;
    }
  });
}

template <class T>
Var<T> slice(const Var<T>& x, int axis, int start, int len) {
  const Shape& is = x->value.shape();
  if (axis < 0) axis += static_cast<int>(is.size());
  if (start < 0 || start + len > is[static_cast<size_t>(axis)])
    throw ShapeError("slice out of range");
  Shape os = is;
  os[static_cast<size_t>(axis)] = len;
  Tensor<T> value(os);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= is[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < is.size(); ++i) inner *= is[i];
  int64_t irow = static_cast<int64_t>(is[static_cast<size_t>(axis)]) * inner;
  int64_t orow = static_cast<int64_t>(len) * inner;
  const T* px = x->value.data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(value.data() + o * orow, px + o * irow + start * inner,
                static_cast<size_t>(orow) * sizeof(T));
  return make_op<T>(std::move(value), {x},
                    [x, outer, inner, irow, orow, start](Node<T>& n) {
                      if (!x->requires_grad) return;
                      Tensor<T>& gx = x->grad_buffer();
                      for (int64_t o = 0; o < outer; ++o) {
                        const T* pg = n.grad.data() + o * orow;
                        T* pgx = gx.data() + o * irow + start * inner;
                        for (int64_t i = 0; i < orow; ++i) pgx[i] += pg[i];
                      }
                    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
    throw ShapeError("matmul shape mismatch " + shape_str(a->value.shape()) + " x " +
                     shape_str(b->value.shape()));
  int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor<T> value({m, n});
  MapM<T>(value.data(), m, n).noalias() =
      MapCM<T>(a->value.data(), m, k) * MapCM<T>(b->value.data(), k, n);
  return make_op<T>(std::move(value), {a, b}, [a, b, m, k, n](Node<T>& nd) {
    MapCM<T> G(nd.grad.data(), m, n);
    if (a->requires_grad) {
      MapM<T> GA(a->grad_buffer().data(), m, k);
      GA.noalias() += G * MapCM<T>(b->value.data(), k, n).transpose();
    }
    if (b->requires_grad) {
      MapM<T> GB(b->grad_buffer().data(), k, n);
      GB.noalias() += MapCM<T>(a->value.data(), m, k).transpose() * G;
    }
  });
}

// y = x * w^T + bias, with w stored [out, in].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  int bdim = x->value.dim(0), in = x->value.dim(1);
  int out = w->value.dim(0);
  if (w->value.dim(1) != in) throw ShapeError("linear weight mismatch");
  Tensor<T> value({bdim, out});
  MapM<T> Y(value.data(), bdim, out);
  Y.noalias() = MapCM<T>(x->value.data(), bdim, in) *
                MapCM<T>(w->value.data(), out, in).transpose();
  if (bias) {
    const T* pb = bias->value.data();
    for (int r = 0; r < bdim; ++r)
      for (int c = 0; c < out; ++c) value[static_cast<int64_t>(r) * out + c] += pb[c];
  }
  std::vector<Var<T>> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_op<T>(std::move(value), parents, [x, w, bias, bdim, in, out](Node<T>& nd) {
    MapCM<T> G(nd.grad.data(), bdim, out);
    if (x->requires_grad) {
      MapM<T> GX(x->grad_buffer().data(), bdim, in);
      GX.noalias() += G * MapCM<T>(w->value.data(), out, in);
    }
    if (w->requires_grad) {
      MapM<T> GW(w->grad_buffer().data(), out, in);
      GW.noalias() += G.transpose() * MapCM<T>(x->value.data(), bdim, in);
    }
    if (bias && bias->requires_grad) {
      T* pgb = bias->grad_buffer().data();
      const T* pg = nd.grad.data();
      for (int r = 0; r < bdim; ++r)
        for (int c = 0; c < out; ++c) pgb[c] += pg[static_cast<int64_t>(r) * out + c];
    }
  });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace detail {

// colT is [C*KH*KW, OH*OW], row-major.
template <class T>
void im2col(const T* x, int C, int H, int W, int KH, int KW, int stride, int pad,
            int OH, int OW, T* colT) {
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < KH; ++kh) {
      for (int kw = 0; kw < KW; ++kw) {
        T* row = colT + ((static_cast<int64_t>(c) * KH + kh) * KW + kw) *
                            (static_cast<int64_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) {
            std::fill(row + static_cast<int64_t>(oh) * OW,
                      row + static_cast<int64_t>(oh + 1) * OW, T(0));
            continue;
          }
          const T* xr = x + (static_cast<int64_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw;
            row[static_cast<int64_t>(oh) * OW + ow] =
                (iw >= 0 && iw < W) ? xr[iw] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* colT, int C, int H, int W, int KH, int KW, int stride,
                int pad, int OH, int OW, T* gx) {
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < KH; ++kh) {
      for (int kw = 0; kw < KW; ++kw) {
        const T* row = colT + ((static_cast<int64_t>(c) * KH + kh) * KW + kw) *
                                  (static_cast<int64_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          T* xr = gx + (static_cast<int64_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) xr[iw] += row[static_cast<int64_t>(oh) * OW + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x [B,C,H,W], w [OC,C,KH,KW], optional bias [OC].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride,
              int pad) {
  if (x->value.ndim() != 4 || w->value.ndim() != 4)
    throw ShapeError("conv2d expects 4-D input and weight");
  int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  int OC = w->value.dim(0), KH = w->value.dim(2), KW = w->value.dim(3);
  if (w->value.dim(1) != C)
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x->value.shape()) +
                     " weight " + shape_str(w->value.shape()));
  int OH = (H + 2 * pad - KH) / stride + 1;
  int OW = (W + 2 * pad - KW) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeError("conv2d output collapses to zero size");
  int ckk = C * KH * KW;
  int64_t opix = static_cast<int64_t>(OH) * OW;
  Tensor<T> value({B, OC, OH, OW});
  {
    std::vector<T> colT(static_cast<size_t>(ckk) * opix);
    for (int b = 0; b < B; ++b) {
      detail::im2col(x->value.data() + static_cast<int64_t>(b) * C * H * W, C, H, W, KH,
                     KW, stride, pad, OH, OW, colT.data());
      MapM<T> O(value.data() + static_cast<int64_t>(b) * OC * opix, OC, opix);
      O.noalias() = MapCM<T>(w->value.data(), OC, ckk) * MapCM<T>(colT.data(), ckk, opix);
    }
  }
  if (bias) {
    const T* pb = bias->value.data();
    T* pv = value.data();
    for (int b = 0; b < B; ++b)
      for (int oc = 0; oc < OC; ++oc) {
        T bv = pb[oc];
        T* row = pv + (static_cast<int64_t>(b) * OC + oc) * opix;
        for (int64_t i = 0; i < opix; ++i) row[i] += bv;
      }
  }
  std::vector<Var<T>> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_op<T>(
      std::move(value), parents,
      [x, w, bias, B, C, H, W, OC, KH, KW, stride, pad, OH, OW, ckk, opix](Node<T>& nd) {
        std::vector<T> colT(static_cast<size_t>(ckk) * opix);
        std::vector<T> gcolT;
        if (x->requires_grad) gcolT.resize(static_cast<size_t>(ckk) * opix);
        for (int b = 0; b < B; ++b) {
          MapCM<T> G(nd.grad.data() + static_cast<int64_t>(b) * OC * opix, OC, opix);
          if (w->requires_grad || x->requires_grad)
            detail::im2col(x->value.data() + static_cast<int64_t>(b) * C * H * W, C, H,
                           W, KH, KW, stride, pad, OH, OW, colT.data());
          if (w->requires_grad) {
            MapM<T> GW(w->grad_buffer().data(), OC, ckk);
            GW.noalias() += G * MapCM<T>(colT.data(), ckk, opix).transpose();
          }
          if (x->requires_grad) {
            MapM<T> GC(gcolT.data(), ckk, opix);
            GC.noalias() = MapCM<T>(w->value.data(), OC, ckk).transpose() * G;
            detail::col2im_add(gcolT.data(), C, H, W, KH, KW, stride, pad, OH, OW,
                               x->grad_buffer().data() +
                                   static_cast<int64_t>(b) * C * H * W);
          }
        }
        if (bias && bias->requires_grad) {
          T* pgb = bias->grad_buffer().data();
          const T* pg = nd.grad.data();
          for (int b = 0; b < B; ++b)
            for (int oc = 0; oc < OC; ++oc) {
              const T* row = pg + (static_cast<int64_t>(b) * OC + oc) * opix;
              T acc = 0;
              for (int64_t i = 0; i < opix; ++i) acc += row[i];
              pgb[oc] += acc;
            }
        }
      });
}

// [B, C*r*r, H, W] -> [B, C, H*r, W*r]
template <class T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  int B = x->value.dim(0), CR = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (CR % (r * r) != 0) throw ShapeError("pixel_shuffle channel count not divisible");
  int C = CR / (r * r);
  Tensor<T> value({B, C, H * r, W * r});
  const T* px = x->value.data();
  T* pv = value.data();
  int Hr = H * r, Wr = W * r;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int dr = 0; dr < r; ++dr)
        for (int dc = 0; dc < r; ++dc) {
          const T* src = px + (((static_cast<int64_t>(b) * CR) +
                                (c * r + dr) * r + dc) *
                               H) * W;
          for (int h = 0; h < H; ++h) {
            T* dst = pv + ((static_cast<int64_t>(b) * C + c) * Hr + (h * r + dr)) * Wr + dc;
            for (int w2 = 0; w2 < W; ++w2) dst[static_cast<int64_t>(w2) * r] = src[static_cast<int64_t>(h) * W + w2];
          }
        }
  return make_op<T>(std::move(value), {x}, [x, B, C, CR, H, W, r](Node<T>& nd) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->grad_buffer();
    const T* pg = nd.grad.data();
    int Hr = H * r, Wr = W * r;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int dr = 0; dr < r; ++dr)
          for (int dc = 0; dc < r; ++dc) {
            T* dst = gx.data() + (((static_cast<int64_t>(b) * CR) +
                                   (c * r + dr) * r + dc) *
                                  H) * W;
            for (int h = 0; h < H; ++h) {
              const T* src = pg + ((static_cast<int64_t>(b) * C + c) * Hr + (h * r + dr)) * Wr + dc;
              for (int w2 = 0; w2 < W; ++w2) dst[static_cast<int64_t>(h) * W + w2] += src[static_cast<int64_t>(w2) * r];
            }
          }
  });
}

// ---------------------------------------------------------------------------
// bilinear sampling (the spatial transformer primitive)
// ---------------------------------------------------------------------------

// Samples `input` [B,C,Hi,Wi] at continuous pixel coordinates
// (xs, ys) [B,Ho,Wo]; pixel centers sit at integer + 0.5, out-of-bounds
// reads are zero. Differentiable w.r.t. input and both coordinate maps.
template <class T>
Var<T> sample_bilinear(const Var<T>& input, const Var<T>& xs, const Var<T>& ys) {
  int B = input->value.dim(0), C = input->value.dim(1);
  int Hi = input->value.dim(2), Wi = input->value.dim(3);
  if (xs->value.ndim() != 3 || xs->value.shape() != ys->value.shape() ||
      xs->value.dim(0) != B)
    throw ShapeError("sample_bilinear coordinate shape mismatch");
  int Ho = xs->value.dim(1), Wo = xs->value.dim(2);
  Tensor<T> value({B, C, Ho, Wo});
  const T* pin = input->value.data();
  const T* pxs = xs->value.data();
  const T* pys = ys->value.data();
  T* pv = value.data();
  auto pix = [&](int b, int c, int y, int x) -> T {
    if (x < 0 || x >= Wi || y < 0 || y >= Hi) return T(0);
    return pin[((static_cast<int64_t>(b) * C + c) * Hi + y) * Wi + x];
  };
  int64_t opix = static_cast<int64_t>(Ho) * Wo;
  for (int b = 0; b < B; ++b) {
    for (int64_t i = 0; i < opix; ++i) {
      T fx = pxs[b * opix + i] - T(0.5);
      T fy = pys[b * opix + i] - T(0.5);
      int x0 = static_cast<int>(std::floor(fx));
      int y0 = static_cast<int>(std::floor(fy));
      T ax = fx - x0, ay = fy - y0;
      for (int c = 0; c < C; ++c) {
        T v00 = pix(b, c, y0, x0), v01 = pix(b, c, y0, x0 + 1);
        T v10 = pix(b, c, y0 + 1, x0), v11 = pix(b, c, y0 + 1, x0 + 1);
        pv[((static_cast<int64_t>(b) * C + c) * Ho) * Wo + i] =
            (T(1) - ay) * ((T(1) - ax) * v00 + ax * v01) +
            ay * ((T(1) - ax) * v10 + ax * v11);
      }
    }
  }
  return make_op<T>(std::move(value), {input, xs, ys},
                    [input, xs, ys, B, C, Hi, Wi, Ho, Wo](Node<T>& nd) {
    const T* pin = input->value.data();
    const T* pxs = xs->value.data();
    const T* pys = ys->value.data();
    const T* pg = nd.grad.data();
    T* gin = input->requires_grad ? input->grad_buffer().data() : nullptr;
    T* gxs = xs->requires_grad ? xs->grad_buffer().data() : nullptr;
    T* gys = ys->requires_grad ? ys->grad_buffer().data() : nullptr;
    auto pix = [&](int b, int c, int y, int x) -> T {
      if (x < 0 || x >= Wi || y < 0 || y >= Hi) return T(0);
      return pin[((static_cast<int64_t>(b) * C + c) * Hi + y) * Wi + x];
    };
    auto add_pix = [&](int b, int c, int y, int x, T v) {
      if (x < 0 || x >= Wi || y < 0 || y >= Hi) return;
      gin[((static_cast<int64_t>(b) * C + c) * Hi + y) * Wi + x] += v;
    };
    int64_t opix = static_cast<int64_t>(Ho) * Wo;
    for (int b = 0; b < B; ++b) {
      for (int64_t i = 0; i < opix; ++i) {
        T fx = pxs[b * opix + i] - T(0.5);
        T fy = pys[b * opix + i] - T(0.5);
        int x0 = static_cast<int>(std::floor(fx));
        int y0 = static_cast<int>(std::floor(fy));
        T ax = fx - x0, ay = fy - y0;
        T dgx = 0, dgy = 0;
        for (int c = 0; c < C; ++c) {
          T g = pg[((static_cast<int64_t>(b) * C + c) * Ho) * Wo + i];
          if (g == T(0)) continue;
          T v00 = pix(b, c, y0, x0), v01 = pix(b, c, y0, x0 + 1);
          T v10 = pix(b, c, y0 + 1, x0), v11 = pix(b, c, y0 + 1, x0 + 1);
          if (gin) {
            add_pix(b, c, y0, x0, g * (T(1) - ay) * (T(1) - ax));
            add_pix(b, c, y0, x0 + 1, g * (T(1) - ay) * ax);
            add_pix(b, c, y0 + 1, x0, g * ay * (T(1) - ax));
            add_pix(b, c, y0 + 1, x0 + 1, g * ay * ax);
          }
          dgx += g * ((T(1) - ay) * (v01 - v00) + ay * (v11 - v10));
          dgy += g * ((T(1) - ax) * (v10 - v00) + ax * (v11 - v01));
        }
        if (gxs) gxs[b * opix + i] += dgx;
        if (gys) gys[b * opix + i] += dgy;
      }
    }
  });
}

}  // namespace gnm
