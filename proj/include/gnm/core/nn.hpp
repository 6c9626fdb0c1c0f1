#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gnm/core/ops.hpp"
#include "gnm/core/rng.hpp"

namespace gnm {

// Ordered registry of trainable leaves. Modules register their weights
// here under hierarchical names; the optimizer and the checkpoint
// container both iterate it in registration order.
template <class T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    for (auto& [n, v] : entries_)
      if (n == name) throw InvalidConfig("duplicate parameter name: " + name);
    Var<T> v = make_leaf(std::move(init), true);
    entries_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var<T>>>& entries() { return entries_; }

  Var<T> find(const std::string& name) const {
    for (auto& [n, v] : entries_)
      if (n == name) return v;
    return nullptr;
  }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (auto& [name, v] : entries_) n += v->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : entries_) gnm::zero_grad(v);
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> entries_;
};

// Fan-in variance scaling, the torch default for conv/linear layers.
template <class T>
Tensor<T> fanin_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(fan_in, 1))));
  return Tensor<T>::rand_uniform(std::move(shape), rng, -bound, bound);
}

enum class Act { None, Celu, Relu, Sigmoid, Tanh };

template <class T>
Var<T> apply_act(const Var<T>& x, Act act) {
  switch (act) {
    case Act::None: return x;
    case Act::Celu: return celu(x);
    case Act::Relu: return relu(x);
    case Act::Sigmoid: return sigmoid(x);
    case Act::Tanh: return tanh_op(x);
  }
  return x;
}

template <class T>
struct Linear {
  Var<T> w, b;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, int in, int out, Rng& rng,
         bool bias = true) {
    w = ps.add(name + ".w", fanin_uniform<T>({out, in}, in, rng));
    if (bias) b = ps.add(name + ".b", fanin_uniform<T>({out}, in, rng));
  }

  Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
};

template <class T>
struct Conv2d {
  Var<T> w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, int in, int out, int k, int stride_,
         int pad_, Rng& rng, bool bias = true)
      : stride(stride_), pad(pad_) {
    int64_t fan_in = static_cast<int64_t>(in) * k * k;
    w = ps.add(name + ".w", fanin_uniform<T>({out, in, k, k}, fan_in, rng));
    if (bias) b = ps.add(name + ".b", fanin_uniform<T>({out}, fan_in, rng));
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

// Normalizes over all non-batch dims; affine is per channel (4-D input)
// or per feature (2-D input).
template <class T>
struct LayerNorm {
  Var<T> gain, bias;
  int channels = 0;
  T eps = static_cast<T>(1e-5);

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, int channels_) : channels(channels_) {
    gain = ps.add(name + ".g", Tensor<T>::full({channels}, T(1)));
    bias = ps.add(name + ".b", Tensor<T>::zeros({channels}));
  }

  Var<T> operator()(const Var<T>& x) const {
    int nd = x->value.ndim();
    std::vector<int> axes;
    for (int i = 1; i < nd; ++i) axes.push_back(i);
    T inv_n = T(1) / static_cast<T>(x->value.size() / x->value.dim(0));
    Var<T> mu = mul_scalar(sum_axes(x, axes), inv_n);
    Var<T> centered = sub(x, mu);
    Var<T> var = mul_scalar(sum_axes(square(centered), axes), inv_n);
    Var<T> norm = div(centered, sqrt_op(add_scalar(var, eps)));
    Var<T> g = gain, bb = bias;
    if (nd == 4) {
      g = reshape(g, {1, channels, 1, 1});
      bb = reshape(bb, {1, channels, 1, 1});
    }
    return add(mul(norm, g), bb);
  }
};

// Linear stack; hidden layers get act + layer norm, the output layer is raw.
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;
  std::vector<LayerNorm<T>> norms;
  Act act = Act::Celu;

  Mlp() = default;
  Mlp(ParamStore<T>& ps, const std::string& name, int in, const std::vector<int>& widths,
      Rng& rng, Act act_ = Act::Celu)
      : act(act_) {
    int prev = in;
    for (size_t i = 0; i < widths.size(); ++i) {
      layers.emplace_back(ps, name + ".fc" + std::to_string(i), prev, widths[i], rng);
      if (i + 1 < widths.size())
        norms.emplace_back(ps, name + ".ln" + std::to_string(i), widths[i]);
      prev = widths[i];
    }
  }

  Var<T> operator()(Var<T> x) const {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = norms[i](apply_act(x, act));
    }
    return x;
  }
};

// Conv -> act -> layer norm, the building block of the encoder tables.
template <class T>
struct ConvBlock {
  Conv2d<T> conv;
  LayerNorm<T> norm;
  Act act = Act::Celu;
  bool raw = false;  // output layers skip act/norm

  ConvBlock() = default;
  ConvBlock(ParamStore<T>& ps, const std::string& name, int in, int out, int k, int stride,
            int pad, Rng& rng, Act act_ = Act::Celu, bool raw_ = false)
      : conv(ps, name, in, out, k, stride, pad, rng), act(act_), raw(raw_) {
    if (!raw) norm = LayerNorm<T>(ps, name + ".norm", out);
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> y = conv(x);
    if (raw) return y;
    return norm(apply_act(y, act));
  }
};

// Sub-pixel convolution: k x k conv to out*r^2 channels, then depth-to-space.
template <class T>
struct SubpixelConv {
  Conv2d<T> conv;
  LayerNorm<T> norm;
  int r = 1;
  Act act = Act::Celu;
  bool raw = false;

  SubpixelConv() = default;
  SubpixelConv(ParamStore<T>& ps, const std::string& name, int in, int out, int k, int r_,
               Rng& rng, Act act_ = Act::Celu, bool raw_ = false)
      : r(r_), act(act_), raw(raw_) {
    conv = Conv2d<T>(ps, name, in, out * r_ * r_, k, 1, (k - 1) / 2, rng);
    if (!raw) norm = LayerNorm<T>(ps, name + ".norm", out);
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> y = pixel_shuffle(conv(x), r);
    if (raw) return y;
    return norm(apply_act(y, act));
  }
};

// ConvLSTM cell, kernel 3, stride 1. Forget-gate bias starts at 1.
template <class T>
struct ConvLstmCell {
  Conv2d<T> gates;
  int hidden = 0;

  ConvLstmCell() = default;
  ConvLstmCell(ParamStore<T>& ps, const std::string& name, int in, int hidden_, Rng& rng)
      : hidden(hidden_) {
    gates = Conv2d<T>(ps, name + ".gates", in + hidden_, 4 * hidden_, 3, 1, 1, rng);
    // forget gate slice of the bias
    for (int i = hidden_; i < 2 * hidden_; ++i) gates.b->value[i] = T(1);
  }

  struct State {
    Var<T> h, c;
  };

  State init_state(int batch, int height, int width) const {
    return {constant(Tensor<T>::zeros({batch, hidden, height, width})),
            constant(Tensor<T>::zeros({batch, hidden, height, width}))};
  }

  State operator()(const Var<T>& x, const State& s) const {
    Var<T> z = gates(concat<T>({x, s.h}, 1));
    Var<T> i = sigmoid(slice(z, 1, 0, hidden));
    Var<T> f = sigmoid(slice(z, 1, hidden, hidden));
    Var<T> o = sigmoid(slice(z, 1, 2 * hidden, hidden));
    Var<T> g = tanh_op(slice(z, 1, 3 * hidden, hidden));
    Var<T> c = add(mul(f, s.c), mul(i, g));
    Var<T> h = mul(o, tanh_op(c));
    return {h, c};
  }
};

}  // namespace gnm
