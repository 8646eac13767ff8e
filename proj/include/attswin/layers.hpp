#pragma once

// Small trainable building blocks shared by the network modules.

#include <string>

#include "attswin/optim.hpp"
#include "attswin/tensor.hpp"

namespace attswin {

template <typename T>
struct LinearLayer {
  Tensor<T> w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore<T>& ps, const std::string& prefix, int in, int out, bool bias = true) {
    w = ps.create(prefix + ".weight", {in, out}, Init::TruncNormal002);
    if (bias) b = ps.create(prefix + ".bias", {out}, Init::Zero);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gamma, beta;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<T>& ps, const std::string& prefix, int channels) {
    gamma = ps.create(prefix + ".gamma", {channels}, Init::One);
    beta = ps.create(prefix + ".beta", {channels}, Init::Zero);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

// Token sequence at one spatial scale: tokens are row-major over the grid.
template <typename T>
struct TokenSeq {
  Tensor<T> tokens;  // [h*w, C]
  int h = 0, w = 0;

  int count() const { return h * w; }
  int channels() const { return tokens.shape().back(); }
};

}  // namespace attswin
