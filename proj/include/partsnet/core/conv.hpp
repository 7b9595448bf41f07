// Stride-1 2-D cross-correlation (deep-learning convention: no kernel flip)
// with zero `same` padding or `valid` shrink, optional dilation.
//
// Loops are ordered so the innermost loop runs over contiguous rows of both
// operands; accumulation order per output element is fixed, so results do not
// depend on the thread count.
#pragma once

#include "partsnet/core/parallel.hpp"
#include "partsnet/core/tensor.hpp"

namespace partsnet {

enum class PadMode { Same, Valid };

struct ConvGeom {
  int pad_h = 0, pad_w = 0;
  int out_h = 0, out_w = 0;
};

inline ConvGeom conv_geometry(const Shape4& in, const Shape4& kernel, PadMode pad, int dilation) {
  detail::require(kernel.h % 2 == 1 && kernel.w % 2 == 1,
                  "conv2d: kernel spatial dims must be odd, got " + kernel.str());
  detail::require(dilation >= 1, "conv2d: dilation must be >= 1");
  detail::require(in.c == kernel.c, "conv2d: input channels " + in.str() +
                                        " do not match kernel " + kernel.str());
  const int span_h = (kernel.h - 1) * dilation;
  const int span_w = (kernel.w - 1) * dilation;
  ConvGeom g;
  if (pad == PadMode::Same) {
    g.pad_h = span_h / 2;
    g.pad_w = span_w / 2;
    g.out_h = in.h;
    g.out_w = in.w;
  } else {
    g.out_h = in.h - span_h;
    g.out_w = in.w - span_w;
    detail::require(g.out_h > 0 && g.out_w > 0,
                    "conv2d: valid padding leaves no output for input " + in.str() +
                        " and kernel " + kernel.str());
  }
  return g;
}

// bias may be null (no bias). Kernel layout (outC, inC, kh, kw).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Tensor<T>& kernel, const T* bias,
                         PadMode pad, int dilation = 1) {
  const Shape4 is = in.shape();
  const Shape4 ks = kernel.shape();
  const ConvGeom g = conv_geometry(is, ks, pad, dilation);
  Tensor<T> out(is.n, ks.n, g.out_h, g.out_w);

  parallel_for(0, static_cast<std::int64_t>(is.n) * ks.n, [&](std::int64_t task) {
    const int n = static_cast<int>(task / ks.n);
    const int oc = static_cast<int>(task % ks.n);
    if (bias) {
      for (int oh = 0; oh < g.out_h; ++oh) {
        T* orow = out.row(n, oc, oh);
        for (int ow = 0; ow < g.out_w; ++ow) orow[ow] = bias[oc];
      }
    }
    for (int ic = 0; ic < is.c; ++ic) {
      for (int i = 0; i < ks.h; ++i) {
        for (int j = 0; j < ks.w; ++j) {
          const T wv = kernel.at(oc, ic, i, j);
          if (wv == T(0)) continue;
          const int dj = j * dilation - g.pad_w;
          const int ow_lo = std::max(0, -dj);
          const int ow_hi = std::min(g.out_w, is.w - dj);
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = oh + i * dilation - g.pad_h;
            if (ih < 0 || ih >= is.h) continue;
            const T* irow = in.row(n, ic, ih);
            T* orow = out.row(n, oc, oh);
            for (int ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wv * irow[ow + dj];
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                                const Shape4& in_shape, PadMode pad, int dilation = 1) {
  const Shape4 ks = kernel.shape();
  const ConvGeom g = conv_geometry(in_shape, ks, pad, dilation);
  Tensor<T> grad_in(in_shape);

  parallel_for(0, static_cast<std::int64_t>(in_shape.n) * in_shape.c, [&](std::int64_t task) {
    const int n = static_cast<int>(task / in_shape.c);
    const int ic = static_cast<int>(task % in_shape.c);
    for (int oc = 0; oc < ks.n; ++oc) {
      for (int i = 0; i < ks.h; ++i) {
        for (int j = 0; j < ks.w; ++j) {
          const T wv = kernel.at(oc, ic, i, j);
          if (wv == T(0)) continue;
          const int dj = j * dilation - g.pad_w;
          const int iw_lo = std::max(0, dj);
          const int iw_hi = std::min(in_shape.w, g.out_w + dj);
          for (int ih = 0; ih < in_shape.h; ++ih) {
            const int oh = ih - i * dilation + g.pad_h;
            if (oh < 0 || oh >= g.out_h) continue;
            const T* grow = grad_out.row(n, oc, oh);
            T* irow = grad_in.row(n, ic, ih);
            for (int iw = iw_lo; iw < iw_hi; ++iw) irow[iw] += wv * grow[iw - dj];
          }
        }
      }
    }
  });
  return grad_in;
}

template <typename T>
Tensor<T> conv2d_backward_kernel(const Tensor<T>& grad_out, const Tensor<T>& in,
                                 const Shape4& kernel_shape, PadMode pad, int dilation = 1) {
  const Shape4 is = in.shape();
  const ConvGeom g = conv_geometry(is, kernel_shape, pad, dilation);
  Tensor<T> grad_k(kernel_shape);

  parallel_for(0, static_cast<std::int64_t>(kernel_shape.n) * kernel_shape.c,
               [&](std::int64_t task) {
                 const int oc = static_cast<int>(task / kernel_shape.c);
                 const int ic = static_cast<int>(task % kernel_shape.c);
                 for (int i = 0; i < kernel_shape.h; ++i) {
                   for (int j = 0; j < kernel_shape.w; ++j) {
                     const int dj = j * dilation - g.pad_w;
                     const int ow_lo = std::max(0, -dj);
                     const int ow_hi = std::min(g.out_w, is.w - dj);
                     T acc = T(0);
                     for (int n = 0; n < is.n; ++n) {
                       for (int oh = 0; oh < g.out_h; ++oh) {
                         const int ih = oh + i * dilation - g.pad_h;
                         if (ih < 0 || ih >= is.h) continue;
                         const T* irow = in.row(n, ic, ih);
                         const T* grow = grad_out.row(n, oc, oh);
                         for (int ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * irow[ow + dj];
                       }
                     }
                     grad_k.at(oc, ic, i, j) = acc;
                   }
                 }
               });
  return grad_k;
}

template <typename T>
std::vector<T> conv2d_backward_bias(const Tensor<T>& grad_out) {
  const Shape4 s = grad_out.shape();
  std::vector<T> grad_b(s.c, T(0));
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      T acc = T(0);
      for (int h = 0; h < s.h; ++h) {
        const T* row = grad_out.row(n, c, h);
        for (int w = 0; w < s.w; ++w) acc += row[w];
      }
      grad_b[c] += acc;
    }
  }
  return grad_b;
}

}  // namespace partsnet
