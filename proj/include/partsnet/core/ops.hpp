// Differentiable layer operations: builders append a node to the tape and
// register the matching backprop closure.
#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "partsnet/core/conv.hpp"
#include "partsnet/core/parallel.hpp"
#include "partsnet/core/tape.hpp"
#include "partsnet/core/tensor.hpp"

namespace partsnet {

enum class BNMode { Train, Infer };

// Exponential running statistics for batch normalization. `var` stores the
// biased batch variance, matching what normalization itself uses.
template <typename T>
struct BNRunning {
  Tensor<T> mean;
  Tensor<T> var;
  bool initialized = false;

  static BNRunning identity(int channels) {
    BNRunning s;
    s.mean = Tensor<T>(1, channels, 1, 1, T(0));
    s.var = Tensor<T>(1, channels, 1, 1, T(1));
    s.initialized = true;
    return s;
  }
};

namespace op {

template <typename T>
ValueId conv2d(Tape<T>& t, ValueId x, ValueId kernel, ValueId bias, PadMode pad,
               int dilation = 1) {
  const Tensor<T>& in = t.value(x);
  const Tensor<T>& k = t.value(kernel);
  const T* bias_ptr = nullptr;
  if (bias >= 0) {
    const Tensor<T>& b = t.value(bias);
    detail::require(b.shape() == Shape4{1, k.shape().n, 1, 1},
                    "conv2d: bias shape " + b.shape().str() + " does not match kernel " +
                        k.shape().str());
    bias_ptr = b.data();
  }
  Tensor<T> out = conv2d_forward(in, k, bias_ptr, pad, dilation);
  const Shape4 in_shape = in.shape();
  const Shape4 k_shape = k.shape();

  auto backprop = [x, kernel, bias, in_shape, k_shape, pad, dilation](Tape<T>& tp, ValueId self) {
    const Tensor<T>& gout = tp.node(self).grad;
    if (tp.node(x).needs_grad) {
      tp.accumulate_grad(x, conv2d_backward_input(gout, tp.value(kernel), in_shape, pad, dilation));
    }
    if (tp.node(kernel).needs_grad) {
      tp.accumulate_grad(kernel,
                         conv2d_backward_kernel(gout, tp.value(x), k_shape, pad, dilation));
    }
    if (bias >= 0 && tp.node(bias).needs_grad) {
      std::vector<T> gb = conv2d_backward_bias(gout);
      Tensor<T> gbt(1, static_cast<int>(gb.size()), 1, 1);
      for (std::size_t i = 0; i < gb.size(); ++i) gbt.data()[i] = gb[i];
      tp.accumulate_grad(bias, gbt);
    }
  };
  std::vector<ValueId> parents{x, kernel};
  if (bias >= 0) parents.push_back(bias);
  return t.emplace(OpKind::Conv2d, std::move(out), std::move(parents), std::move(backprop));
}

// 2x2 max pooling, stride 2. Ties route the gradient to the first maximum in
// window scan order.
template <typename T>
ValueId maxpool2(Tape<T>& t, ValueId x) {
  const Tensor<T>& in = t.value(x);
  const Shape4 is = in.shape();
  detail::require(is.h % 2 == 0 && is.w % 2 == 0,
                  "maxpool2: input H and W must be even, got " + is.str() +
                      "; pad the input before pooling");
  Tensor<T> out(is.n, is.c, is.h / 2, is.w / 2);
  std::vector<std::uint8_t> argmax(static_cast<std::size_t>(out.numel()));

  const int oh_n = is.h / 2, ow_n = is.w / 2;
  std::size_t idx = 0;
  for (int n = 0; n < is.n; ++n) {
    for (int c = 0; c < is.c; ++c) {
      for (int oh = 0; oh < oh_n; ++oh) {
        const T* r0 = in.row(n, c, 2 * oh);
        const T* r1 = in.row(n, c, 2 * oh + 1);
        T* orow = out.row(n, c, oh);
        for (int ow = 0; ow < ow_n; ++ow) {
          const T v[4] = {r0[2 * ow], r0[2 * ow + 1], r1[2 * ow], r1[2 * ow + 1]};
          int best = 0;
          for (int i = 1; i < 4; ++i) {
            if (v[i] > v[best]) best = i;
          }
          orow[ow] = v[best];
          argmax[idx++] = static_cast<std::uint8_t>(best);
        }
      }
    }
  }

  auto backprop = [x, is, argmax = std::move(argmax)](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const Tensor<T>& gout = tp.node(self).grad;
    Tensor<T>* gin = tp.grad_sink(x);
    const int oh_n = is.h / 2, ow_n = is.w / 2;
    std::size_t idx = 0;
    for (int n = 0; n < is.n; ++n) {
      for (int c = 0; c < is.c; ++c) {
        for (int oh = 0; oh < oh_n; ++oh) {
          const T* grow = gout.row(n, c, oh);
          for (int ow = 0; ow < ow_n; ++ow) {
            const int a = argmax[idx++];
            const int ih = 2 * oh + a / 2;
            const int iw = 2 * ow + a % 2;
            gin->at(n, c, ih, iw) += grow[ow];
          }
        }
      }
    }
  };
  return t.emplace(OpKind::MaxPool2, std::move(out), {x}, std::move(backprop));
}

namespace detail_ops {

struct LerpTap {
  int i0, i1;
  float t;
};

// Sample centers at (i + 0.5) / 4 - 0.5, edges clamped.
inline std::vector<LerpTap> upsample4_taps(int in_dim) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(in_dim) * 4);
  for (int i = 0; i < in_dim * 4; ++i) {
    const double src = (i + 0.5) / 4.0 - 0.5;
    const int i0 = static_cast<int>(std::floor(src));
    const double frac = src - i0;
    LerpTap& tap = taps[static_cast<std::size_t>(i)];
    tap.i0 = std::clamp(i0, 0, in_dim - 1);
    tap.i1 = std::clamp(i0 + 1, 0, in_dim - 1);
    tap.t = static_cast<float>(frac);
  }
  return taps;
}

}  // namespace detail_ops

// Bilinear x4 upsampling.
template <typename T>
ValueId upsample4(Tape<T>& t, ValueId x) {
  const Tensor<T>& in = t.value(x);
  const Shape4 is = in.shape();
  const auto ty = detail_ops::upsample4_taps(is.h);
  const auto tx = detail_ops::upsample4_taps(is.w);
  Tensor<T> out(is.n, is.c, is.h * 4, is.w * 4);

  parallel_for(0, static_cast<std::int64_t>(is.n) * is.c, [&](std::int64_t task) {
    const int n = static_cast<int>(task / is.c);
    const int c = static_cast<int>(task % is.c);
    for (int oh = 0; oh < is.h * 4; ++oh) {
      const auto& yt = ty[static_cast<std::size_t>(oh)];
      const T* r0 = in.row(n, c, yt.i0);
      const T* r1 = in.row(n, c, yt.i1);
      T* orow = out.row(n, c, oh);
      const T wy1 = static_cast<T>(yt.t), wy0 = T(1) - wy1;
      for (int ow = 0; ow < is.w * 4; ++ow) {
        const auto& xt = tx[static_cast<std::size_t>(ow)];
        const T wx1 = static_cast<T>(xt.t), wx0 = T(1) - wx1;
        orow[ow] = wy0 * (wx0 * r0[xt.i0] + wx1 * r0[xt.i1]) +
                   wy1 * (wx0 * r1[xt.i0] + wx1 * r1[xt.i1]);
      }
    }
  });

  auto backprop = [x, is, ty, tx](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const Tensor<T>& gout = tp.node(self).grad;
    Tensor<T>* gin = tp.grad_sink(x);
    parallel_for(0, static_cast<std::int64_t>(is.n) * is.c, [&](std::int64_t task) {
      const int n = static_cast<int>(task / is.c);
      const int c = static_cast<int>(task % is.c);
      for (int oh = 0; oh < is.h * 4; ++oh) {
        const auto& yt = ty[static_cast<std::size_t>(oh)];
        const T wy1 = static_cast<T>(yt.t), wy0 = T(1) - wy1;
        const T* grow = gout.row(n, c, oh);
        T* g0 = gin->row(n, c, yt.i0);
        T* g1 = gin->row(n, c, yt.i1);
        for (int ow = 0; ow < is.w * 4; ++ow) {
          const auto& xt = tx[static_cast<std::size_t>(ow)];
          const T wx1 = static_cast<T>(xt.t), wx0 = T(1) - wx1;
          const T g = grow[ow];
          g0[xt.i0] += wy0 * wx0 * g;
          g0[xt.i1] += wy0 * wx1 * g;
          g1[xt.i0] += wy1 * wx0 * g;
          g1[xt.i1] += wy1 * wx1 * g;
        }
      }
    });
  };
  return t.emplace(OpKind::Upsample4, std::move(out), {x}, std::move(backprop));
}

// Per-channel batch normalization. Train mode normalizes with batch moments
// and folds them into `state` with the given momentum (new = momentum * old +
// (1 - momentum) * batch); infer mode normalizes with the stored statistics.
template <typename T>
ValueId batchnorm(Tape<T>& t, ValueId x, ValueId gamma, ValueId beta, BNRunning<T>& state,
                  BNMode mode, T momentum = T(0.9), T eps = T(1e-5)) {
  const Tensor<T>& in = t.value(x);
  const Shape4 is = in.shape();
  const Shape4 param_shape{1, is.c, 1, 1};
  detail::require(t.value(gamma).shape() == param_shape && t.value(beta).shape() == param_shape,
                  "batchnorm: gamma/beta must have shape " + param_shape.str());
  const std::int64_t m = static_cast<std::int64_t>(is.n) * is.h * is.w;

  std::vector<T> mean(static_cast<std::size_t>(is.c)), invstd(static_cast<std::size_t>(is.c));
  if (mode == BNMode::Train) {
    for (int c = 0; c < is.c; ++c) {
      T sum = T(0), sum_sq = T(0);
      for (int n = 0; n < is.n; ++n) {
        for (int h = 0; h < is.h; ++h) {
          const T* row = in.row(n, c, h);
          for (int w = 0; w < is.w; ++w) {
            sum += row[w];
            sum_sq += row[w] * row[w];
          }
        }
      }
      const T mu = sum / static_cast<T>(m);
      T var = sum_sq / static_cast<T>(m) - mu * mu;
      if (var < T(0)) var = T(0);
      mean[static_cast<std::size_t>(c)] = mu;
      invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var + eps);
      if (!state.initialized) {
        // first observation seeds the running statistics directly
        if (state.mean.empty()) state.mean = Tensor<T>(1, is.c, 1, 1);
        if (state.var.empty()) state.var = Tensor<T>(1, is.c, 1, 1);
        state.mean.data()[c] = mu;
        state.var.data()[c] = var;
      } else {
        state.mean.data()[c] = momentum * state.mean.data()[c] + (T(1) - momentum) * mu;
        state.var.data()[c] = momentum * state.var.data()[c] + (T(1) - momentum) * var;
      }
    }
    if (!state.initialized) state.initialized = true;
  } else {
    if (!state.initialized) {
      throw std::logic_error(
          "batchnorm: inference requested before any training step populated running statistics");
    }
    for (int c = 0; c < is.c; ++c) {
      mean[static_cast<std::size_t>(c)] = state.mean.data()[c];
      invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(state.var.data()[c] + eps);
    }
  }

  const Tensor<T>& g = t.value(gamma);
  const Tensor<T>& b = t.value(beta);
  Tensor<T> out(is);
  parallel_for(0, static_cast<std::int64_t>(is.n) * is.c, [&](std::int64_t task) {
    const int n = static_cast<int>(task / is.c);
    const int c = static_cast<int>(task % is.c);
    const T mu = mean[static_cast<std::size_t>(c)];
    const T istd = invstd[static_cast<std::size_t>(c)];
    const T gc = g.data()[c], bc = b.data()[c];
    for (int h = 0; h < is.h; ++h) {
      const T* irow = in.row(n, c, h);
      T* orow = out.row(n, c, h);
      for (int w = 0; w < is.w; ++w) orow[w] = gc * (irow[w] - mu) * istd + bc;
    }
  });

  auto backprop = [x, gamma, beta, is, m, mode, mean = std::move(mean),
                   invstd = std::move(invstd)](Tape<T>& tp, ValueId self) {
    const Tensor<T>& gout = tp.node(self).grad;
    const Tensor<T>& in = tp.value(x);
    const Tensor<T>& g = tp.value(gamma);

    // per-channel reductions: sum(dy) and sum(dy * xhat)
    std::vector<T> sum_dy(static_cast<std::size_t>(is.c), T(0));
    std::vector<T> sum_dy_xhat(static_cast<std::size_t>(is.c), T(0));
    for (int c = 0; c < is.c; ++c) {
      const T mu = mean[static_cast<std::size_t>(c)];
      const T istd = invstd[static_cast<std::size_t>(c)];
      T a = T(0), bsum = T(0);
      for (int n = 0; n < is.n; ++n) {
        for (int h = 0; h < is.h; ++h) {
          const T* grow = gout.row(n, c, h);
          const T* irow = in.row(n, c, h);
          for (int w = 0; w < is.w; ++w) {
            a += grow[w];
            bsum += grow[w] * (irow[w] - mu) * istd;
          }
        }
      }
      sum_dy[static_cast<std::size_t>(c)] = a;
      sum_dy_xhat[static_cast<std::size_t>(c)] = bsum;
    }

    if (tp.node(beta).needs_grad) {
      Tensor<T> gb(1, is.c, 1, 1);
      for (int c = 0; c < is.c; ++c) gb.data()[c] = sum_dy[static_cast<std::size_t>(c)];
      tp.accumulate_grad(beta, gb);
    }
    if (tp.node(gamma).needs_grad) {
      Tensor<T> gg(1, is.c, 1, 1);
      for (int c = 0; c < is.c; ++c) gg.data()[c] = sum_dy_xhat[static_cast<std::size_t>(c)];
      tp.accumulate_grad(gamma, gg);
    }
    if (tp.node(x).needs_grad) {
      Tensor<T>* gin = tp.grad_sink(x);
      parallel_for(0, static_cast<std::int64_t>(is.n) * is.c, [&](std::int64_t task) {
        const int n = static_cast<int>(task / is.c);
        const int c = static_cast<int>(task % is.c);
        const T mu = mean[static_cast<std::size_t>(c)];
        const T istd = invstd[static_cast<std::size_t>(c)];
        const T gc = g.data()[c];
        if (mode == BNMode::Train) {
          const T mean_dy = sum_dy[static_cast<std::size_t>(c)] / static_cast<T>(m);
          const T mean_dy_xhat = sum_dy_xhat[static_cast<std::size_t>(c)] / static_cast<T>(m);
          for (int h = 0; h < is.h; ++h) {
            const T* grow = gout.row(n, c, h);
            const T* irow = in.row(n, c, h);
            T* grad_row = gin->row(n, c, h);
            for (int w = 0; w < is.w; ++w) {
              const T xhat = (irow[w] - mu) * istd;
              grad_row[w] += gc * istd * (grow[w] - mean_dy - xhat * mean_dy_xhat);
            }
          }
        } else {
          for (int h = 0; h < is.h; ++h) {
            const T* grow = gout.row(n, c, h);
            T* grad_row = gin->row(n, c, h);
            for (int w = 0; w < is.w; ++w) grad_row[w] += gc * istd * grow[w];
          }
        }
      });
    }
  };
  return t.emplace(OpKind::BatchNorm, std::move(out), {x, gamma, beta}, std::move(backprop));
}

template <typename T>
ValueId relu(Tape<T>& t, ValueId x) {
  const Tensor<T>& in = t.value(x);
  Tensor<T> out(in.shape());
  for (std::int64_t i = 0; i < in.numel(); ++i) out.data()[i] = std::max(T(0), in.data()[i]);
  auto backprop = [x](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const Tensor<T>& gout = tp.node(self).grad;
    const Tensor<T>& in = tp.value(x);
    Tensor<T>* gin = tp.grad_sink(x);
    for (std::int64_t i = 0; i < in.numel(); ++i) {
      if (in.data()[i] > T(0)) gin->data()[i] += gout.data()[i];
    }
  };
  return t.emplace(OpKind::Relu, std::move(out), {x}, std::move(backprop));
}

// sigmoid(k*x) = 1 / (1 + exp(-k*x)); steepness k > 0.
template <typename T>
ValueId sigmoid(Tape<T>& t, ValueId x, T k = T(1)) {
  detail::require(k > T(0), "sigmoid: steepness k must be > 0");
  const Tensor<T>& in = t.value(x);
  Tensor<T> out(in.shape());
  for (std::int64_t i = 0; i < in.numel(); ++i) {
    out.data()[i] = T(1) / (T(1) + std::exp(-k * in.data()[i]));
  }
  auto backprop = [x, k](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const Tensor<T>& gout = tp.node(self).grad;
    const Tensor<T>& s = tp.value(self);
    Tensor<T>* gin = tp.grad_sink(x);
    for (std::int64_t i = 0; i < s.numel(); ++i) {
      const T sv = s.data()[i];
      gin->data()[i] += gout.data()[i] * k * sv * (T(1) - sv);
    }
  };
  return t.emplace(OpKind::Sigmoid, std::move(out), {x}, std::move(backprop));
}

template <typename T>
ValueId add(Tape<T>& t, ValueId a, ValueId b) {
  const Tensor<T>& va = t.value(a);
  const Tensor<T>& vb = t.value(b);
  detail::require(va.shape() == vb.shape(),
                  "add: shape mismatch " + va.shape().str() + " vs " + vb.shape().str());
  Tensor<T> out(va.shape());
  for (std::int64_t i = 0; i < va.numel(); ++i) out.data()[i] = va.data()[i] + vb.data()[i];
  auto backprop = [a, b](Tape<T>& tp, ValueId self) {
    const Tensor<T>& gout = tp.node(self).grad;
    tp.accumulate_grad(a, gout);
    tp.accumulate_grad(b, gout);
  };
  return t.emplace(OpKind::Add, std::move(out), {a, b}, std::move(backprop));
}

// Elementwise a*x + b with constant coefficients.
template <typename T>
ValueId affine(Tape<T>& t, ValueId x, T a, T b) {
  const Tensor<T>& in = t.value(x);
  Tensor<T> out(in.shape());
  for (std::int64_t i = 0; i < in.numel(); ++i) out.data()[i] = a * in.data()[i] + b;
  auto backprop = [x, a](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const Tensor<T>& gout = tp.node(self).grad;
    Tensor<T>* gin = tp.grad_sink(x);
    for (std::int64_t i = 0; i < gout.numel(); ++i) gin->data()[i] += a * gout.data()[i];
  };
  return t.emplace(OpKind::Affine, std::move(out), {x}, std::move(backprop));
}

namespace detail_ops {

enum class ScalarMode { Mul, Sub, Add };

template <typename T>
ValueId broadcast_scalar_op(Tape<T>& t, OpKind kind, ValueId x, ValueId s, ScalarMode mode) {
  const Tensor<T>& in = t.value(x);
  detail::require(t.value(s).numel() == 1, "broadcast op: second operand must be scalar, got " +
                                               t.value(s).shape().str());
  const T sv = t.value(s).item();
  Tensor<T> out(in.shape());
  switch (mode) {
    case ScalarMode::Mul:
      for (std::int64_t i = 0; i < in.numel(); ++i) out.data()[i] = in.data()[i] * sv;
      break;
    case ScalarMode::Sub:
      for (std::int64_t i = 0; i < in.numel(); ++i) out.data()[i] = in.data()[i] - sv;
      break;
    case ScalarMode::Add:
      for (std::int64_t i = 0; i < in.numel(); ++i) out.data()[i] = in.data()[i] + sv;
      break;
  }
  auto backprop = [x, s, mode, sv](Tape<T>& tp, ValueId self) {
    const Tensor<T>& gout = tp.node(self).grad;
    if (tp.node(x).needs_grad) {
      Tensor<T>* gin = tp.grad_sink(x);
      if (mode == ScalarMode::Mul) {
        for (std::int64_t i = 0; i < gout.numel(); ++i) gin->data()[i] += sv * gout.data()[i];
      } else {
        for (std::int64_t i = 0; i < gout.numel(); ++i) gin->data()[i] += gout.data()[i];
      }
    }
    if (tp.node(s).needs_grad) {
      T acc = T(0);
      if (mode == ScalarMode::Mul) {
        const Tensor<T>& in = tp.value(x);
        for (std::int64_t i = 0; i < gout.numel(); ++i) acc += gout.data()[i] * in.data()[i];
      } else if (mode == ScalarMode::Sub) {
        for (std::int64_t i = 0; i < gout.numel(); ++i) acc -= gout.data()[i];
      } else {
        for (std::int64_t i = 0; i < gout.numel(); ++i) acc += gout.data()[i];
      }
      tp.accumulate_grad(s, Tensor<T>::scalar(acc));
    }
  };
  return t.emplace(kind, std::move(out), {x, s}, std::move(backprop));
}

}  // namespace detail_ops

// x * s with s a scalar node (broadcast).
template <typename T>
ValueId mul_scalar(Tape<T>& t, ValueId x, ValueId s) {
  return detail_ops::broadcast_scalar_op(t, OpKind::MulScalar, x, s, detail_ops::ScalarMode::Mul);
}

// x - s with s a scalar node (broadcast).
template <typename T>
ValueId sub_scalar(Tape<T>& t, ValueId x, ValueId s) {
  return detail_ops::broadcast_scalar_op(t, OpKind::SubScalar, x, s, detail_ops::ScalarMode::Sub);
}

// x + s with s a scalar node (broadcast).
template <typename T>
ValueId add_scalar(Tape<T>& t, ValueId x, ValueId s) {
  return detail_ops::broadcast_scalar_op(t, OpKind::SubScalar, x, s, detail_ops::ScalarMode::Add);
}

// Mean over (c, h, w) per batch item: (n, c, h, w) -> (n, 1, 1, 1).
template <typename T>
ValueId mean_per_image(Tape<T>& t, ValueId x) {
  const Tensor<T>& in = t.value(x);
  const Shape4 is = in.shape();
  const std::int64_t per = static_cast<std::int64_t>(is.c) * is.h * is.w;
  Tensor<T> out(is.n, 1, 1, 1);
  for (int n = 0; n < is.n; ++n) {
    T acc = T(0);
    for (int c = 0; c < is.c; ++c) {
      for (int h = 0; h < is.h; ++h) {
        const T* row = in.row(n, c, h);
        for (int w = 0; w < is.w; ++w) acc += row[w];
      }
    }
    out.data()[n] = acc / static_cast<T>(per);
  }
  auto backprop = [x, is, per](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const Tensor<T>& gout = tp.node(self).grad;
    Tensor<T>* gin = tp.grad_sink(x);
    for (int n = 0; n < is.n; ++n) {
      const T g = gout.data()[n] / static_cast<T>(per);
      for (int c = 0; c < is.c; ++c) {
        for (int h = 0; h < is.h; ++h) {
          T* row = gin->row(n, c, h);
          for (int w = 0; w < is.w; ++w) row[w] += g;
        }
      }
    }
  };
  return t.emplace(OpKind::MeanPerImage, std::move(out), {x}, std::move(backprop));
}

// Scalar sum of all elements.
template <typename T>
ValueId sum_all(Tape<T>& t, ValueId x) {
  const Tensor<T>& in = t.value(x);
  T acc = T(0);
  for (std::int64_t i = 0; i < in.numel(); ++i) acc += in.data()[i];
  auto backprop = [x](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const T g = tp.node(self).grad.item();
    Tensor<T>* gin = tp.grad_sink(x);
    for (std::int64_t i = 0; i < gin->numel(); ++i) gin->data()[i] += g;
  };
  return t.emplace(OpKind::MeanAll, Tensor<T>::scalar(acc), {x}, std::move(backprop));
}

// Scalar mean squared error between two same-shape nodes.
template <typename T>
ValueId mse(Tape<T>& t, ValueId a, ValueId b) {
  const Tensor<T>& va = t.value(a);
  const Tensor<T>& vb = t.value(b);
  detail::require(va.shape() == vb.shape(),
                  "mse: shape mismatch " + va.shape().str() + " vs " + vb.shape().str());
  const std::int64_t count = va.numel();
  T acc = T(0);
  for (std::int64_t i = 0; i < count; ++i) {
    const T d = va.data()[i] - vb.data()[i];
    acc += d * d;
  }
  acc /= static_cast<T>(count);
  auto backprop = [a, b, count](Tape<T>& tp, ValueId self) {
    const T g = tp.node(self).grad.item() * T(2) / static_cast<T>(count);
    const Tensor<T>& va = tp.value(a);
    const Tensor<T>& vb = tp.value(b);
    if (tp.node(a).needs_grad) {
      Tensor<T>* ga = tp.grad_sink(a);
      for (std::int64_t i = 0; i < count; ++i) {
        ga->data()[i] += g * (va.data()[i] - vb.data()[i]);
      }
    }
    if (tp.node(b).needs_grad) {
      Tensor<T>* gb = tp.grad_sink(b);
      for (std::int64_t i = 0; i < count; ++i) {
        gb->data()[i] -= g * (va.data()[i] - vb.data()[i]);
      }
    }
  };
  return t.emplace(OpKind::Mse, Tensor<T>::scalar(acc), {a, b}, std::move(backprop));
}

// Scalar sum of squares.
template <typename T>
ValueId sum_squares(Tape<T>& t, ValueId x) {
  const Tensor<T>& in = t.value(x);
  T acc = T(0);
  for (std::int64_t i = 0; i < in.numel(); ++i) acc += in.data()[i] * in.data()[i];
  auto backprop = [x](Tape<T>& tp, ValueId self) {
    if (!tp.node(x).needs_grad) return;
    const T g = tp.node(self).grad.item() * T(2);
    const Tensor<T>& in = tp.value(x);
    Tensor<T>* gin = tp.grad_sink(x);
    for (std::int64_t i = 0; i < in.numel(); ++i) gin->data()[i] += g * in.data()[i];
  };
  return t.emplace(OpKind::SumSquares, Tensor<T>::scalar(acc), {x}, std::move(backprop));
}

}  // namespace op
}  // namespace partsnet
