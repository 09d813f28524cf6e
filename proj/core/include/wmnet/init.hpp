#pragma once

#include "wmnet/tensor.hpp"

namespace wmnet {

template <typename T, typename Rng>
Tensor<T> init_linear_weight(int fan_in, int fan_out, Rng& rng) {
  const T std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  return Tensor<T>::randn({fan_in, fan_out}, rng, std);
}

template <typename T, typename Rng>
Tensor<T> init_conv_weight(int kh, int kw, int cin, int cout, Rng& rng) {
  const T std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(kh) * kw * cin));
  return Tensor<T>::randn({kh, kw, cin, cout}, rng, std);
}

/// Identity mapping (center tap) on matching channels plus small noise.
template <typename T, typename Rng>
Tensor<T> init_conv_identity_noise(int k, int c, Rng& rng, T noise = T(0.01)) {
  Tensor<T> w = Tensor<T>::randn({k, k, c, c}, rng, noise);
  const int mid = k / 2;
  for (int i = 0; i < c; ++i) w[((static_cast<int64_t>(mid) * k + mid) * c + i) * c + i] += T(1);
  return w;
}

/// Exact center-tap identity kernel (used by tests and degenerate configs).
template <typename T>
Tensor<T> conv_identity(int k, int c) {
  Tensor<T> w({k, k, c, c});
  const int mid = k / 2;
  for (int i = 0; i < c; ++i) w[((static_cast<int64_t>(mid) * k + mid) * c + i) * c + i] = T(1);
  return w;
}

template <typename T>
T inv_softplus(T y) {
  return static_cast<T>(std::log(std::expm1(static_cast<double>(y))));
}

}  // namespace wmnet
