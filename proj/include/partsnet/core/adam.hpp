// Bias-corrected Adam update.
#pragma once

#include <cmath>

#include "partsnet/core/tensor.hpp"

namespace partsnet {

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state) {
  detail::require(param.shape() == grad.shape(), "adam_step: param shape " + param.shape().str() +
                                                     " does not match grad " + grad.shape().str());
  if (state.m.empty()) {
    state.m = Tensor<T>(param.shape());
    state.v = Tensor<T>(param.shape());
  }
  detail::require(state.m.shape() == param.shape(),
                  "adam_step: moment shape " + state.m.shape().str() + " does not match param " +
                      param.shape().str());
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  T* p = param.data();
  T* m = state.m.data();
  T* v = state.v.data();
  const T* g = grad.data();
  for (std::int64_t i = 0; i < param.numel(); ++i) {
    const double gi = static_cast<double>(g[i]);
    const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
    const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / corr1;
    const double v_hat = vi / corr2;
    p[i] = static_cast<T>(static_cast<double>(p[i]) - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
  }
}

}  // namespace partsnet
