#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gnm/core/error.hpp"
#include "gnm/core/rng.hpp"

namespace gnm {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor with shared storage. Reshapes are views; all
// other ops copy. Scalar type is a template parameter so the same model
// code can run in double for finite-difference checks.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {
    for (int d : shape_)
      if (d <= 0) throw ShapeError("non-positive tensor dimension " + shape_str(shape_));
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape_))
      throw ShapeError("value count does not match shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.begin(), t.end(), v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, T lo = T(0), T hi = T(1)) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return shape_numel(shape_); }
  bool defined() const { return static_cast<bool>(data_); }

  int dim(int i) const {
    int n = ndim();
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw ShapeError("dim index out of range");
    return shape_[i];
  }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T* begin() { return data(); }
  T* end() { return data() + size(); }
  const T* begin() const { return data(); }
  const T* end() const { return data() + size(); }

  T& operator[](int64_t i) { return (*data_)[i]; }
  const T& operator[](int64_t i) const { return (*data_)[i]; }

  T& at(std::initializer_list<int> idx) { return (*data_)[flat_index(idx)]; }
  const T& at(std::initializer_list<int> idx) const { return (*data_)[flat_index(idx)]; }

  // Shares storage.
  Tensor reshape(Shape shape) const {
    int64_t n = 1;
    int infer = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
      if (shape[i] == -1) {
        if (infer >= 0) throw ShapeError("multiple -1 dims in reshape");
        infer = static_cast<int>(i);
      } else {
        n *= shape[i];
      }
    }
    if (infer >= 0) shape[static_cast<size_t>(infer)] = static_cast<int>(size() / n);
    if (shape_numel(shape) != size())
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  Tensor clone() const {
    Tensor out;
    out.shape_ = shape_;
    out.data_ = std::make_shared<std::vector<T>>(*data_);
    return out;
  }

  void fill(T v) { std::fill(begin(), end(), v); }

  bool all_finite() const {
    for (const T& v : *data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    return (*data_)[0];
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out{shape_, std::vector<U>(static_cast<size_t>(size()))};
    for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>((*data_)[static_cast<size_t>(i)]);
    return out;
  }

 private:
  int64_t flat_index(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != ndim()) throw ShapeError("index rank mismatch");
    int64_t flat = 0;
    int i = 0;
    for (int v : idx) {
      if (v < 0 || v >= shape_[static_cast<size_t>(i)]) throw ShapeError("index out of range");
      flat = flat * shape_[static_cast<size_t>(i)] + v;
      ++i;
    }
    return flat;
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace gnm
